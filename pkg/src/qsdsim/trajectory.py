"""Ito state-vector integrators.

Two unravelings of the same master equation are implemented:

* `qsd_step` - the general state diffusion step for an arbitrary Lindblad
  operator L:

      d|psi> = (<Ld> L - 1/2 Ld L - 1/2 <Ld><L>) |psi> dt
             + (L - <L>) |psi> dxi ,        Ld = L^dagger,

* `psd_step` - the hamiltonian-driven specialization obtained by taking
  L = sqrt(tau0) H / hbar + i I / sqrt(tau0):

      d|psi> = ( -(i/hbar) Hd dt - (tau0 / 2 hbar^2) Hd^2 dt
                 + (sqrt(tau0)/hbar) Hd dxi ) |psi> ,   Hd = H - <H>.

The two routes agree term by term (the substitution turns the -iH phase
into -iHd), which the test suite exploits as a cross-implementation
oracle.  Both steps are Euler-Maruyama followed by explicit
renormalization; the continuous equations preserve the norm exactly under
Ito rules, and the discrete pre-renormalization defect is O(dt^2) in the
mean.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import qcore
from .errors import DegenerateStateError, InvalidParameterError, ShapeError
from .noise import NoiseStream, sample_dxi

_UNIT_PHASE_TOL = 1e-12


def lindblad_from_hamiltonian(h, tau0: float, hbar: float = 1.0) -> np.ndarray:
    """Lindblad operator sqrt(tau0) H / hbar + i I / sqrt(tau0).

    Substituted into the master equation this reproduces the
    hamiltonian-driven diffusion generator exactly (see master.psd_master_rhs).
    """
    tau0 = float(tau0)
    hbar = float(hbar)
    if not np.isfinite(tau0) or tau0 <= 0.0:
        raise InvalidParameterError(f"tau0 must be positive, got {tau0}")
    if hbar <= 0.0:
        raise InvalidParameterError(f"hbar must be positive, got {hbar}")
    h = qcore.as_operator(h, hermitian=True)
    n = h.shape[0]
    return (np.sqrt(tau0) / hbar) * h + (1j / np.sqrt(tau0)) * np.eye(n)


def gauge_transform(lop, u: complex) -> np.ndarray:
    """Multiply a Lindblad operator by a unit phase; physics is unchanged
    when the noise is rotated by the conjugate phase."""
    u = complex(u)
    if abs(abs(u) - 1.0) > _UNIT_PHASE_TOL:
        raise InvalidParameterError(f"|u| must be 1, got |u| = {abs(u)!r}")
    return np.asarray(lop, dtype=np.complex128) * u


def _check_step_args(psi, op, dt):
    psi = np.asarray(psi, dtype=np.complex128)
    op = np.asarray(op, dtype=np.complex128)
    if op.ndim != 2 or op.shape[0] != op.shape[1] or psi.ndim != 1 \
            or psi.shape[0] != op.shape[0]:
        raise ShapeError(
            f"dimension mismatch: operator {op.shape} vs state {psi.shape}")
    dt = float(dt)
    if not np.isfinite(dt) or dt <= 0.0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    return psi, op, dt


def qsd_increment(psi, lop, dxi: complex, dt: float) -> np.ndarray:
    """Raw Euler-Maruyama state change d|psi> before renormalization."""
    psi, lop, dt = _check_step_args(psi, lop, dt)
    lpsi = lop @ psi
    mean_l = np.vdot(psi, lpsi)          # <L>
    mean_ld = np.conj(mean_l)            # <L^dagger> for normalized psi
    drift = mean_ld * lpsi - 0.5 * (lop.conj().T @ lpsi) \
        - 0.5 * mean_ld * mean_l * psi
    diffusion = lpsi - mean_l * psi
    return drift * dt + diffusion * complex(dxi)


def qsd_step(psi, lop, dxi: complex, dt: float) -> np.ndarray:
    """One state diffusion step for Lindblad operator L, renormalized."""
    new = np.asarray(psi, dtype=np.complex128) + qsd_increment(psi, lop, dxi, dt)
    return qcore.normalize(new)


def psd_increment(psi, h, tau0: float, dxi: complex, dt: float,
                  hbar: float = 1.0) -> np.ndarray:
    """Raw hamiltonian-driven state change before renormalization."""
    psi, h, dt = _check_step_args(psi, h, dt)
    tau0 = float(tau0)
    if not np.isfinite(tau0) or tau0 < 0.0:
        raise InvalidParameterError(f"tau0 must be >= 0, got {tau0}")
    hbar = float(hbar)
    hpsi = h @ psi
    mean = np.vdot(psi, hpsi).real
    hd_psi = hpsi - mean * psi                       # Hd |psi>
    hd2_psi = (h @ hd_psi) - mean * hd_psi           # Hd^2 |psi>
    return ((-1j / hbar) * dt * hd_psi
            - (0.5 * tau0 / hbar ** 2) * dt * hd2_psi
            + (np.sqrt(tau0) / hbar) * complex(dxi) * hd_psi)


def psd_step(psi, h, tau0: float, dxi: complex, dt: float,
             hbar: float = 1.0) -> np.ndarray:
    """One hamiltonian-driven diffusion step, renormalized.

    Eigenstates of H are exact fixed points (Hd kills them), and tau0 = 0
    reduces to a plain Euler step of the phase-free Schrodinger evolution.
    """
    new = np.asarray(psi, dtype=np.complex128) \
        + psd_increment(psi, h, tau0, dxi, dt, hbar)
    return qcore.normalize(new)


def norm_defect_samples(psi, h, tau0: float, dt: float, n: int,
                        stream: NoiseStream, hbar: float = 1.0) -> np.ndarray:
    """Pre-renormalization ||psi + dpsi||^2 - 1 for n independent noise draws
    from the same initial state.

    The sample mean estimates the O(dt^2) discretization defect; individual
    draws fluctuate at O(dt) around it with zero mean.
    """
    psi = qcore.as_state(psi)
    h = np.asarray(h, dtype=np.complex128)
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    g = stream.standard_normal((n, 2))
    dxi = np.sqrt(0.5 * dt) * (g[:, 0] + 1j * g[:, 1])

    hpsi = h @ psi
    mean = np.vdot(psi, hpsi).real
    hd_psi = hpsi - mean * psi
    hd2_psi = (h @ hd_psi) - mean * hd_psi
    a_psi = (-1j / hbar) * hd_psi - (0.5 * tau0 / hbar ** 2) * hd2_psi
    b_psi = (np.sqrt(tau0) / hbar) * hd_psi
    new = psi[None, :] + dt * a_psi[None, :] + dxi[:, None] * b_psi[None, :]
    norms_sq = np.einsum("bi,bi->b", new.conj(), new).real
    return norms_sq - 1.0


@dataclass(frozen=True)
class TrajectoryConfig:
    """Step size, length and recording cadence of a single trajectory run."""

    dt: float
    n_steps: int
    tau0: float = 0.0
    hbar: float = 1.0
    record_stride: int = 1

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0.0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise InvalidParameterError(f"n_steps must be >= 1, got {self.n_steps}")
        if not np.isfinite(self.tau0) or self.tau0 < 0.0:
            raise InvalidParameterError(f"tau0 must be >= 0, got {self.tau0}")
        if self.hbar <= 0.0:
            raise InvalidParameterError(f"hbar must be positive, got {self.hbar}")
        if self.record_stride < 1:
            raise InvalidParameterError(
                f"record_stride must be >= 1, got {self.record_stride}")


@dataclass
class TrajectoryRecord:
    """Time series of observable statistics along one trajectory."""

    times: np.ndarray
    energy_mean: np.ndarray
    energy_variance: np.ndarray
    norm_drift: np.ndarray
    final_state: np.ndarray
    header: dict = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            for key, value in self.header.items():
                fh.write(f"# {key} = {value}\n")
            writer = csv.writer(fh)
            writer.writerow(["t", "e_mean", "e_var", "norm_drift"])
            for row in zip(self.times, self.energy_mean,
                           self.energy_variance, self.norm_drift):
                writer.writerow([f"{v:.17g}" for v in row])

    def to_json_dict(self) -> dict:
        return {
            "header": self.header,
            "times": [float(t) for t in self.times],
            "energy_mean": [float(v) for v in self.energy_mean],
            "energy_variance": [float(v) for v in self.energy_variance],
            "norm_drift": [float(v) for v in self.norm_drift],
            "final_state": qcore.state_to_json(self.final_state),
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


def record_steps(n_steps: int, stride: int) -> list[int]:
    """Step indices stored in a record: every stride-th step plus the last."""
    steps = list(range(0, n_steps + 1, stride))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return steps


def run_trajectory(config: TrajectoryConfig, psi0, stream: NoiseStream,
                   hamiltonian=None, lindblad=None) -> TrajectoryRecord:
    """Integrate one trajectory and record observable statistics.

    Exactly one of hamiltonian / lindblad must be given.  With a
    hamiltonian the run uses the hamiltonian-driven step and records <H>
    and Var H; with a bare Lindblad operator it uses the general diffusion
    step and records the hermitian part (L + L^dagger)/2 instead.
    Deterministic: the record depends only on the inputs and the stream.
    """
    if (hamiltonian is None) == (lindblad is None):
        raise InvalidParameterError(
            "exactly one of hamiltonian / lindblad must be provided")
    psi = qcore.normalize(qcore.as_state(psi0, normalized=False))
    if hamiltonian is not None:
        h = qcore.as_operator(hamiltonian, hermitian=True)
        observable = h
        stepper = lambda p, dxi: psd_increment(  # noqa: E731
            p, h, config.tau0, dxi, config.dt, config.hbar)
    else:
        lop = qcore.as_operator(lindblad)
        observable = 0.5 * (lop + lop.conj().T)
        stepper = lambda p, dxi: qsd_increment(p, lop, dxi, config.dt)  # noqa: E731
    if observable.shape[0] != psi.shape[0]:
        raise ShapeError(
            f"operator {observable.shape} does not match state {psi.shape}")

    recorded = record_steps(config.n_steps, config.record_stride)
    record_set = set(recorded)
    times, e_mean, e_var, drift = [], [], [], []
    last_defect = 0.0

    def snapshot(step):
        times.append(step * config.dt)
        e_mean.append(qcore.expectation(observable, psi).real)
        e_var.append(qcore.variance(observable, psi))
        drift.append(last_defect)

    snapshot(0)
    for k in range(1, config.n_steps + 1):
        dxi = sample_dxi(config.dt, stream)
        new = psi + stepper(psi, dxi)
        nrm = np.linalg.norm(new)
        if not np.isfinite(nrm) or nrm < qcore.ZERO_NORM_TOL:
            raise DegenerateStateError(
                f"state norm collapsed to {nrm!r} at step {k}")
        last_defect = nrm - 1.0
        psi = new / nrm
        if k in record_set:
            snapshot(k)

    return TrajectoryRecord(
        times=np.asarray(times),
        energy_mean=np.asarray(e_mean),
        energy_variance=np.asarray(e_var),
        norm_drift=np.asarray(drift),
        final_state=psi,
    )
