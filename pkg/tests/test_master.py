import numpy as np
import pytest

from qsdsim import (IntegrationFailureError, InvalidParameterError,
                    MasterRunConfig, ShapeError, analytic_offdiagonal,
                    integrate_master, lindblad_from_hamiltonian, lindblad_rhs,
                    psd_master_rhs, pure_projector)
from qsdsim.master import max_offdiagonal, write_summary_csv
from conftest import random_density, random_hermitian


def two_level_rhs(tau0, e1=1.0, e2=-1.0):
    h = np.diag([e1, e2]).astype(complex)
    return h, (lambda rho: psd_master_rhs(rho, h, tau0))


class TestLindbladRhs:
    def test_identity_gives_zero(self, rng):
        rho = random_density(rng, 3)
        assert np.max(np.abs(lindblad_rhs(rho, np.eye(3)))) < 1e-15

    def test_scalar_gives_zero(self, rng):
        rho = random_density(rng, 3)
        out = lindblad_rhs(rho, (2.0 - 1.5j) * np.eye(3))
        assert np.max(np.abs(out)) < 1e-13

    def test_hand_value(self):
        # L = diag(0,1) damps only the coherences, at rate 1/2
        rho = 0.5 * np.ones((2, 2), dtype=complex)
        out = lindblad_rhs(rho, np.diag([0.0, 1.0]).astype(complex))
        assert np.allclose(out, [[0.0, -0.25], [-0.25, 0.0]], atol=1e-15)

    def test_output_hermitian_traceless(self, rng):
        for _ in range(20):
            rho = random_density(rng, 4)
            lop = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            out = lindblad_rhs(rho, lop)
            assert np.max(np.abs(out - out.conj().T)) < 1e-12
            assert abs(np.trace(out)) < 1e-12

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            lindblad_rhs(random_density(rng, 2), np.eye(3))


class TestPsdMasterRhs:
    def test_eigenprojector_is_stationary(self):
        h = np.diag([1.0, 2.0, 3.0])
        rho = pure_projector(np.array([0, 1, 0], dtype=complex))
        assert np.max(np.abs(psd_master_rhs(rho, h, 0.7))) < 1e-14

    def test_matches_general_dissipator(self, rng):
        for _ in range(30):
            h = random_hermitian(rng, 3)
            rho = random_density(rng, 3)
            tau0 = float(rng.uniform(0.1, 2.0))
            lop = lindblad_from_hamiltonian(h, tau0)
            assert np.max(np.abs(psd_master_rhs(rho, h, tau0)
                                 - lindblad_rhs(rho, lop))) < 1e-12

    def test_diagonal_populations_conserved(self, rng):
        h = np.diag([0.3, 1.1, -0.8])
        rho = random_density(rng, 3)
        out = psd_master_rhs(rho, h, 0.9)
        # commutator and dissipator both leave diagonal entries untouched
        assert np.max(np.abs(np.diag(out).real)) < 1e-14

    def test_negative_tau0_rejected(self, rng):
        with pytest.raises(InvalidParameterError):
            psd_master_rhs(random_density(rng, 2), np.eye(2), -0.5)


class TestAnalyticOffdiagonal:
    def test_degenerate_levels_never_decohere(self):
        out = analytic_offdiagonal(0.5 + 0.1j, 2.0, 2.0, tau0=1.0, t=10.0)
        assert out == pytest.approx(0.5 + 0.1j)

    def test_time_zero_is_identity(self):
        assert analytic_offdiagonal(0.3j, 1.0, -1.0, 0.5, 0.0) == 0.3j

    def test_direct_evaluation(self):
        # |factor| = exp(-tau0 dE^2 t / 2) = e^-0.2, phase = -dE t = -2 rad
        out = analytic_offdiagonal(1.0, 2.0, 0.0, tau0=0.1, t=1.0)
        assert abs(out) == pytest.approx(np.exp(-0.2), rel=1e-12)
        assert np.angle(out) == pytest.approx(-2.0, rel=1e-12)

    def test_negative_time_rejected(self):
        with pytest.raises(InvalidParameterError):
            analytic_offdiagonal(1.0, 1.0, 0.0, 0.1, -1.0)


class TestIntegrateMaster:
    def test_zero_rhs_is_exact_identity(self, rng):
        rho0 = random_density(rng, 3)
        config = MasterRunConfig(dt=0.1, t_final=2.0)
        times, states = integrate_master(rho0, lambda r: lindblad_rhs(r, np.eye(3)),
                                         config)
        assert np.array_equal(states[-1], states[0])
        assert len(times) == 21

    def test_fourth_order_convergence(self):
        # against the closed-form off-diagonal: halving dt cuts the error ~16x
        h, rhs = two_level_rhs(tau0=0.25)
        rho0 = pure_projector(np.array([1, 1]) / np.sqrt(2))
        errs = []
        for dt in (0.02, 0.01):
            _, states = integrate_master(rho0, rhs, MasterRunConfig(dt=dt, t_final=2.0))
            exact = analytic_offdiagonal(0.5, 1.0, -1.0, 0.25, 2.0)
            errs.append(abs(states[-1][0, 1] - exact))
        ratio = errs[0] / errs[1]
        assert 16.0 / 1.5 < ratio < 16.0 * 1.5

    def test_long_time_diagonal_fixed_point(self):
        h, rhs = two_level_rhs(tau0=1.0)
        rho0 = pure_projector(np.array([np.sqrt(0.7), np.sqrt(0.3)]))
        _, states = integrate_master(rho0, rhs, MasterRunConfig(dt=0.01, t_final=10.0))
        final = states[-1]
        assert abs(final[0, 1]) < 1e-8
        assert final[0, 0].real == pytest.approx(0.7, abs=1e-9)
        assert final[1, 1].real == pytest.approx(0.3, abs=1e-9)

    def test_trace_and_hermiticity_preserved(self, rng):
        h = random_hermitian(rng, 4)
        rho0 = random_density(rng, 4)
        rhs = lambda rho: psd_master_rhs(rho, h, 0.4)  # noqa: E731
        _, states = integrate_master(rho0, rhs, MasterRunConfig(dt=0.005, t_final=1.0))
        for rho in states[::50]:
            assert abs(np.trace(rho).real - 1.0) < 1e-10
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-14

    def test_purity_monotone_for_selfadjoint_lindblad(self, rng):
        lop = np.diag(rng.standard_normal(3)).astype(complex)
        rho0 = random_density(rng, 3)
        _, states = integrate_master(rho0, lambda r: lindblad_rhs(r, lop),
                                     MasterRunConfig(dt=0.01, t_final=2.0))
        purity = np.array([np.trace(r @ r).real for r in states])
        assert np.all(np.diff(purity) <= 1e-12)

    def test_instability_raises(self):
        h, rhs = two_level_rhs(tau0=1.0, e1=50.0, e2=-50.0)
        rho0 = pure_projector(np.array([1, 1]) / np.sqrt(2))
        with np.errstate(invalid="ignore", over="ignore"):
            with pytest.raises(IntegrationFailureError):
                integrate_master(rho0, rhs, MasterRunConfig(dt=0.5, t_final=50.0))

    def test_positivity_monitor_warns(self):
        # time-reversed decay inflates one population past 1, pushing the
        # other eigenvalue negative while keeping the trace exact
        lop = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        rho0 = np.diag([0.1, 0.9]).astype(complex)
        rhs = lambda rho: -lindblad_rhs(rho, lop)  # noqa: E731
        with pytest.warns(RuntimeWarning, match="positivity"):
            integrate_master(rho0, rhs, MasterRunConfig(dt=0.01, t_final=0.5))

    def test_config_validation(self):
        with pytest.raises(InvalidParameterError):
            MasterRunConfig(dt=0.0, t_final=1.0)
        with pytest.raises(InvalidParameterError):
            MasterRunConfig(dt=2.0, t_final=1.0)


class TestOutputs:
    def test_summary_csv(self, tmp_path, rng):
        h, rhs = two_level_rhs(tau0=0.5)
        rho0 = pure_projector(np.array([1, 1]) / np.sqrt(2))
        times, states = integrate_master(rho0, rhs,
                                         MasterRunConfig(dt=0.05, t_final=0.5))
        path = tmp_path / "master.csv"
        write_summary_csv(path, times, states, header={"units": "natural"})
        lines = path.read_text().splitlines()
        assert lines[0] == "# units = natural"
        assert lines[1] == "t,trace,purity,offdiag_abs"
        assert len(lines) == 2 + len(times)

    def test_max_offdiagonal(self):
        rho = np.array([[0.5, 0.2j], [-0.2j, 0.5]])
        assert max_offdiagonal(rho) == pytest.approx(0.2)
        assert max_offdiagonal(np.array([[1.0]])) == 0.0
