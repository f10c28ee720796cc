"""Density-operator evolution: Lindblad right-hand sides and an RK4 driver.

Two generators:

    lindblad_rhs:     drho/dt = L rho Ld - 1/2 Ld L rho - 1/2 rho Ld L
    psd_master_rhs:   drho/dt = -(i/hbar) [H, rho]
                               + (tau0/hbar^2) (H rho H - 1/2 H^2 rho - 1/2 rho H^2)

The second is the first with L = sqrt(tau0) H / hbar + i I / sqrt(tau0);
the identity-part terms cancel, which the tests verify entrywise.  For a
diagonal H the off-diagonals decay in closed form,

    rho_12(t) = rho_12(0) exp(-i dE t / hbar - tau0 dE^2 t / (2 hbar^2)),

which serves as the integration oracle.
"""

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import qcore
from .errors import IntegrationFailureError, InvalidParameterError, ShapeError

TRACE_DRIFT_LIMIT = 1e-6
POSITIVITY_WARN = -1e-8


@dataclass(frozen=True)
class MasterRunConfig:
    """Fixed-step RK4 run parameters."""

    dt: float
    t_final: float
    tau0: float = 0.0
    hbar: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.dt) or self.dt <= 0.0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise InvalidParameterError(
                f"need 0 < dt <= t_final, got dt={self.dt}, t_final={self.t_final}")
        if self.tau0 < 0.0:
            raise InvalidParameterError(f"tau0 must be >= 0, got {self.tau0}")
        if self.hbar <= 0.0:
            raise InvalidParameterError(f"hbar must be positive, got {self.hbar}")

    @property
    def n_steps(self) -> int:
        return max(int(round(self.t_final / self.dt)), 1)


def lindblad_rhs(rho, lop) -> np.ndarray:
    """L rho Ld - 1/2 {Ld L, rho}; hermitian and traceless for hermitian rho."""
    rho = np.asarray(rho, dtype=np.complex128)
    lop = np.asarray(lop, dtype=np.complex128)
    if rho.shape != lop.shape or rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ShapeError(f"shape mismatch: rho {rho.shape} vs L {lop.shape}")
    ld = lop.conj().T
    ldl = ld @ lop
    return lop @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)


def psd_master_rhs(rho, h, tau0: float, hbar: float = 1.0) -> np.ndarray:
    """Hamiltonian-driven master generator (commutator plus energy decoherence)."""
    rho = np.asarray(rho, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if rho.shape != h.shape or rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ShapeError(f"shape mismatch: rho {rho.shape} vs H {h.shape}")
    tau0 = float(tau0)
    if tau0 < 0.0:
        raise InvalidParameterError(f"tau0 must be >= 0, got {tau0}")
    comm = h @ rho - rho @ h
    h2 = h @ h
    dissipator = h @ rho @ h - 0.5 * (h2 @ rho + rho @ h2)
    return (-1j / hbar) * comm + (tau0 / hbar ** 2) * dissipator


def integrate_master(rho0, rhs, config: MasterRunConfig):
    """Classical RK4 on drho/dt = rhs(rho) with per-step re-hermitization.

    Returns (times, states) with states[k] the density operator at
    times[k].  Trace drift beyond TRACE_DRIFT_LIMIT aborts; positivity is
    monitored (warning only - silent projection would mask integrator bugs).
    """
    rho = qcore.as_density(rho0)
    rho = 0.5 * (rho + rho.conj().T)   # canonical hermitian representative
    dt = config.dt
    n_steps = config.n_steps
    states = np.empty((n_steps + 1,) + rho.shape, dtype=np.complex128)
    states[0] = rho
    for k in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        trace = np.trace(rho).real
        if not np.isfinite(trace) or abs(trace - 1.0) > TRACE_DRIFT_LIMIT:
            raise IntegrationFailureError(
                f"trace drifted to {trace!r} at step {k} (dt too large?)")
        states[k] = rho
    min_eig = np.linalg.eigvalsh(states[-1]).min()
    if min_eig < POSITIVITY_WARN:
        warnings.warn(
            f"density operator lost positivity: min eigenvalue {min_eig:.3e}",
            RuntimeWarning, stacklevel=2)
    times = dt * np.arange(n_steps + 1)
    return times, states


def analytic_offdiagonal(rho0_12: complex, e1: float, e2: float, tau0: float,
                         t: float, hbar: float = 1.0) -> complex:
    """Closed-form off-diagonal element for a two-level diagonal hamiltonian."""
    t = float(t)
    if t < 0.0:
        raise InvalidParameterError(f"t must be >= 0, got {t}")
    de = float(e1) - float(e2)
    return complex(rho0_12) * np.exp(-1j * de * t / hbar
                                     - tau0 * de * de * t / (2.0 * hbar ** 2))


def max_offdiagonal(rho) -> float:
    """Largest off-diagonal magnitude (the summary CSV's offdiag_abs column)."""
    rho = np.asarray(rho)
    mask = ~np.eye(rho.shape[0], dtype=bool)
    return float(np.max(np.abs(rho[mask]))) if rho.shape[0] > 1 else 0.0


def write_summary_csv(path, times, states, header: dict | None = None):
    """Per-snapshot scalars: t, trace, purity, offdiag_abs."""
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "trace", "purity", "offdiag_abs"])
        for t, rho in zip(times, states):
            writer.writerow([
                f"{t:.17g}",
                f"{np.trace(rho).real:.17g}",
                f"{np.trace(rho @ rho).real:.17g}",
                f"{max_offdiagonal(rho):.17g}",
            ])


def write_snapshots_json(path, times, states, header: dict | None = None,
                         max_snapshots: int = 64):
    """Dump density-operator snapshots, thinned to at most max_snapshots."""
    stride = max(len(times) // max_snapshots, 1)
    idx = list(range(0, len(times), stride))
    if idx[-1] != len(times) - 1:
        idx.append(len(times) - 1)
    payload = {
        "header": header or {},
        "snapshots": [
            {"t": float(times[i]), "rho": qcore.operator_to_json(states[i])}
            for i in idx
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
