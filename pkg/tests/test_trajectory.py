import json

import numpy as np
import pytest

from qsdsim import (InvalidParameterError, NoiseStream, ShapeError,
                    TrajectoryConfig, align_global_phase, gauge_transform,
                    lindblad_from_hamiltonian, lindblad_rhs, norm_defect_samples,
                    normalize, psd_master_rhs, psd_step, qsd_step,
                    run_trajectory, sample_dxi)
from conftest import random_hermitian, random_state


class TestLindbladFromHamiltonian:
    def test_zero_hamiltonian(self):
        lop = lindblad_from_hamiltonian(np.zeros((3, 3)), tau0=4.0)
        assert np.allclose(lop, 0.5j * np.eye(3), atol=1e-15)

    def test_rejects_nonpositive_tau0(self):
        with pytest.raises(InvalidParameterError):
            lindblad_from_hamiltonian(np.eye(2), tau0=0.0)
        with pytest.raises(InvalidParameterError):
            lindblad_from_hamiltonian(np.eye(2), tau0=-1.0)

    def test_tau0_scaling_structure(self, rng):
        h = random_hermitian(rng, 3)
        eye = np.eye(3)
        l1 = lindblad_from_hamiltonian(h, tau0=1.0)
        l4 = lindblad_from_hamiltonian(h, tau0=4.0)
        # quadrupling tau0 doubles the hamiltonian part, halves the identity part
        h_part = l1 - 1j * eye
        assert np.allclose(l4, 2.0 * h_part + 0.5j * eye, atol=1e-14)

    def test_master_rhs_identity(self, rng):
        # substituting L into the general dissipator reproduces the
        # hamiltonian-driven generator entrywise
        for _ in range(30):
            h = random_hermitian(rng, 3)
            psi = random_state(rng, 3)
            rho = np.outer(psi, psi.conj())
            tau0 = float(rng.uniform(0.1, 3.0))
            lop = lindblad_from_hamiltonian(h, tau0)
            lhs = lindblad_rhs(rho, lop)
            rhs = psd_master_rhs(rho, h, tau0)
            assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestQsdStep:
    def test_scalar_lindblad_is_noop(self, rng):
        psi = random_state(rng, 3)
        out = qsd_step(psi, (1.3 - 0.4j) * np.eye(3), 0.02 + 0.01j, 1e-3)
        assert np.max(np.abs(out - psi)) < 1e-14

    def test_eigenstate_of_selfadjoint_lindblad_is_fixed(self):
        lop = np.diag([0.0, 1.0, 2.0]).astype(complex)
        psi = np.array([0, 0, 1], dtype=complex)
        out = qsd_step(psi, lop, 0.05 + 0.02j, 1e-3)
        assert np.max(np.abs(out - psi)) < 1e-14

    def test_hand_evaluated_step(self):
        # diagonal L lets the step be evaluated per component by scalar
        # arithmetic: dc_k = c_k [(<L> L_k - L_k^2/2 - <L>^2/2) dt
        #                          + (L_k - <L>) dxi]
        dxi, dt = 0.01 + 0.02j, 1e-3
        psi = np.array([1, 1]) / np.sqrt(2)
        mean_l = 0.5
        drift = [mean_l * 0.0 - 0.0 - 0.5 * mean_l ** 2,
                 mean_l * 1.0 - 0.5 - 0.5 * mean_l ** 2]
        expected = normalize(np.array([
            psi[0] * (1 + drift[0] * dt + (0.0 - mean_l) * dxi),
            psi[1] * (1 + drift[1] * dt + (1.0 - mean_l) * dxi),
        ]))
        out = qsd_step(psi, np.diag([0.0, 1.0]).astype(complex), dxi, dt)
        assert np.max(np.abs(out - expected)) < 1e-14

    def test_shape_and_dt_errors(self, rng):
        psi = random_state(rng, 2)
        with pytest.raises(ShapeError):
            qsd_step(psi, np.eye(3), 0.01, 1e-3)
        with pytest.raises(InvalidParameterError):
            qsd_step(psi, np.eye(2), 0.01, 0.0)


class TestPsdStep:
    def test_eigenstate_unchanged(self):
        h = np.diag([1.0, 2.0])
        psi = np.array([1, 0], dtype=complex)
        out = psd_step(psi, h, 0.5, 0.03 + 0.01j, 1e-3)
        assert np.max(np.abs(out - psi)) < 1e-15

    def test_scalar_hamiltonian_unchanged(self, rng):
        psi = random_state(rng, 3)
        out = psd_step(psi, 4.2 * np.eye(3), 0.5, 0.03 + 0.01j, 1e-3)
        assert np.max(np.abs(out - psi)) < 1e-14

    def test_matches_general_step_via_lindblad(self, rng):
        # cross-implementation oracle: 200 random draws, n <= 4
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(2, 5))
            h = random_hermitian(rng, n)
            psi = random_state(rng, n)
            tau0 = float(rng.uniform(0.05, 2.0))
            dt = float(rng.uniform(1e-5, 1e-3))
            dxi = complex(rng.standard_normal() + 1j * rng.standard_normal()) \
                * np.sqrt(dt / 2)
            direct = psd_step(psi, h, tau0, dxi, dt)
            via_l = qsd_step(psi, lindblad_from_hamiltonian(h, tau0), dxi, dt)
            worst = max(worst, float(np.max(np.abs(
                align_global_phase(direct, via_l) - via_l))))
        assert worst < 1e-12

    def test_tau0_zero_is_phase_free_schrodinger_euler(self, rng):
        h = random_hermitian(rng, 3)
        psi = random_state(rng, 3)
        out = psd_step(psi, h, 0.0, 0.05 + 0.01j, 1e-4)
        hd_psi = h @ psi - np.vdot(psi, h @ psi).real * psi
        expected = normalize(psi - 1e-4 * 1j * hd_psi)
        assert np.max(np.abs(out - expected)) < 1e-14

    def test_negative_tau0_rejected(self, rng):
        with pytest.raises(InvalidParameterError):
            psd_step(random_state(rng, 2), np.eye(2), -0.1, 0.01, 1e-3)


class TestGaugeTransform:
    def test_identity_phase(self, rng):
        lop = random_hermitian(rng, 3) + 1j * random_hermitian(rng, 3)
        assert np.array_equal(gauge_transform(lop, 1.0), lop)

    def test_nonunit_modulus_rejected(self):
        with pytest.raises(InvalidParameterError):
            gauge_transform(np.eye(2), 1.1)

    def test_pathwise_invariance(self, rng):
        # L -> uL with noise rotated by conj(u) reproduces the identical
        # trajectory states
        u = 1j
        lop = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        psi_a = random_state(rng, 3)
        psi_b = psi_a.copy()
        stream = NoiseStream(17)
        worst = 0.0
        for _ in range(200):
            dxi = sample_dxi(1e-3, stream)
            psi_a = qsd_step(psi_a, lop, dxi, 1e-3)
            psi_b = qsd_step(psi_b, gauge_transform(lop, u), np.conj(u) * dxi, 1e-3)
            worst = max(worst, float(np.max(np.abs(psi_a - psi_b))))
        assert worst < 1e-13

    def test_master_rhs_invariant(self, rng):
        lop = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        psi = random_state(rng, 3)
        rho = np.outer(psi, psi.conj())
        u = np.exp(0.91j)
        a = lindblad_rhs(rho, lop)
        b = lindblad_rhs(rho, gauge_transform(lop, u))
        assert np.max(np.abs(a - b)) < 1e-14


class TestNormDiscipline:
    def test_mean_defect_scales_as_dt_squared(self):
        # E[||psi'||^2 - 1] = ||A psi||^2 dt^2 exactly for the Euler step;
        # halving dt must cut the measured mean defect by ~4
        h = np.diag([3.0, -3.0])
        psi = np.array([1, 1]) / np.sqrt(2)
        mean_coarse = norm_defect_samples(psi, h, 1.0, 0.01, 400_000,
                                          NoiseStream(4, 0)).mean()
        mean_fine = norm_defect_samples(psi, h, 1.0, 0.005, 400_000,
                                        NoiseStream(4, 1)).mean()
        ratio = mean_coarse / mean_fine
        assert 4.0 / 1.3 < ratio < 4.0 * 1.3

    def test_defect_mean_matches_analytic_value(self):
        h = np.diag([2.0, -2.0])
        psi = np.array([1, 1]) / np.sqrt(2)
        tau0, dt = 1.0, 0.02
        hd_psi = h @ psi
        a_psi = -1j * hd_psi - 0.5 * tau0 * (h @ hd_psi)
        expected = float(np.vdot(a_psi, a_psi).real) * dt ** 2
        measured = norm_defect_samples(psi, h, tau0, dt, 600_000,
                                       NoiseStream(9)).mean()
        assert measured == pytest.approx(expected, rel=0.15)


class TestRunTrajectory:
    def test_tau0_zero_diagonal_populations_constant(self):
        config = TrajectoryConfig(dt=1e-8, n_steps=1000, tau0=0.0,
                                  record_stride=100)
        psi0 = np.array([np.sqrt(0.64), np.sqrt(0.36)], dtype=complex)
        rec = run_trajectory(config, psi0, NoiseStream(5),
                             hamiltonian=np.diag([1.0, -1.0]))
        pops = np.abs(rec.final_state) ** 2
        assert abs(pops[0] - 0.64) < 1e-12
        assert abs(pops[1] - 0.36) < 1e-12

    def test_long_run_localizes(self):
        # t >> hbar^2 / (tau0 dE^2) = 0.25 drives Var H below 1e-6 dE^2
        config = TrajectoryConfig(dt=1e-3, n_steps=10_000, tau0=1.0,
                                  record_stride=500)
        psi0 = np.array([1, 1]) / np.sqrt(2)
        rec = run_trajectory(config, psi0, NoiseStream(42),
                             hamiltonian=np.diag([1.0, -1.0]))
        assert rec.energy_variance[-1] < 1e-6 * 2.0 ** 2

    def test_deterministic_record(self):
        config = TrajectoryConfig(dt=1e-3, n_steps=500, tau0=0.5,
                                  record_stride=50)
        psi0 = np.array([1, 1j]) / np.sqrt(2)
        h = np.diag([0.7, -0.7])
        a = run_trajectory(config, psi0, NoiseStream(8), hamiltonian=h)
        b = run_trajectory(config, psi0, NoiseStream(8), hamiltonian=h)
        assert np.array_equal(a.energy_mean, b.energy_mean)
        assert np.array_equal(a.final_state, b.final_state)
        assert json.dumps(a.to_json_dict()) == json.dumps(b.to_json_dict())

    def test_lindblad_route_records_hermitian_part(self):
        config = TrajectoryConfig(dt=1e-3, n_steps=50, record_stride=10)
        lop = np.diag([0.0, 1.0]).astype(complex)
        rec = run_trajectory(config, np.array([1, 1]) / np.sqrt(2),
                             NoiseStream(3), lindblad=lop)
        assert rec.energy_mean[0] == pytest.approx(0.5)

    def test_requires_exactly_one_generator(self):
        config = TrajectoryConfig(dt=1e-3, n_steps=10)
        psi0 = np.array([1.0, 0.0])
        with pytest.raises(InvalidParameterError):
            run_trajectory(config, psi0, NoiseStream(0))
        with pytest.raises(InvalidParameterError):
            run_trajectory(config, psi0, NoiseStream(0),
                           hamiltonian=np.eye(2), lindblad=np.eye(2))

    def test_martingale_of_populations(self):
        # diagonal H: ensemble mean of each population is conserved
        config = TrajectoryConfig(dt=2e-3, n_steps=500, tau0=0.5)
        h = np.diag([1.0, -1.0])
        psi0 = np.array([np.sqrt(0.7), np.sqrt(0.3)], dtype=complex)
        finals = np.array([
            np.abs(run_trajectory(config, psi0, NoiseStream(21, k),
                                  hamiltonian=h).final_state[0]) ** 2
            for k in range(400)
        ])
        se = finals.std(ddof=1) / np.sqrt(len(finals))
        assert abs(finals.mean() - 0.7) < 4.0 * se

    def test_csv_output(self, tmp_path):
        config = TrajectoryConfig(dt=1e-3, n_steps=20, tau0=0.3,
                                  record_stride=7)
        rec = run_trajectory(config, np.array([1, 1]) / np.sqrt(2),
                             NoiseStream(2), hamiltonian=np.diag([1.0, -1.0]))
        rec.header = {"note": "test"}
        path = tmp_path / "traj.csv"
        rec.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# note = test"
        assert lines[1] == "t,e_mean,e_var,norm_drift"
        # strides 0,7,14 plus the forced final step 20
        assert len(lines) == 2 + 4


class TestTrajectoryConfig:
    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            TrajectoryConfig(dt=0.0, n_steps=1)
        with pytest.raises(InvalidParameterError):
            TrajectoryConfig(dt=0.1, n_steps=0)
        with pytest.raises(InvalidParameterError):
            TrajectoryConfig(dt=0.1, n_steps=1, tau0=-1.0)
        with pytest.raises(InvalidParameterError):
            TrajectoryConfig(dt=0.1, n_steps=1, record_stride=0)


def test_run_trajectory_shape_mismatch():
    config = TrajectoryConfig(dt=1e-3, n_steps=5, tau0=0.1)
    with pytest.raises((ShapeError, InvalidParameterError)):
        run_trajectory(config, np.array([1.0, 0.0]), NoiseStream(0),
                       hamiltonian=np.eye(3))
