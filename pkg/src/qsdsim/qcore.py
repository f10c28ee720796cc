"""Dense complex linear algebra for small Hilbert spaces (n <= 64).

States are 1-d complex arrays, operators dense n x n complex arrays.
Everything here is a pure function; arrays returned are fresh copies, so
values can be shared freely across workers.
"""

import numpy as np

from .errors import DegenerateStateError, InvalidParameterError, ShapeError

NORM_TOL = 1e-12          # unit-norm tolerance after normalize
HERMITIAN_TOL = 1e-12     # relative asymmetry allowed on hermitian operators
HERMITIAN_REPAIR_TOL = 1e-8   # largest asymmetry silently symmetrized away
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
ZERO_NORM_TOL = 1e-14


def as_state(vec, normalized: bool = True) -> np.ndarray:
    """Validate and copy a state vector; optionally require unit norm."""
    psi = np.asarray(vec, dtype=np.complex128)
    if psi.ndim != 1 or psi.size < 1:
        raise ShapeError(f"state must be a 1-d vector, got shape {psi.shape}")
    if not np.all(np.isfinite(psi.view(np.float64))):
        raise InvalidParameterError("state has non-finite amplitudes")
    if normalized and abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise InvalidParameterError(
            f"state is not normalized: ||psi|| = {np.linalg.norm(psi)!r}")
    return psi.copy()


def as_operator(entries, hermitian: bool = False) -> np.ndarray:
    """Validate and copy an operator matrix.

    With hermitian=True the matrix is symmetrized to (A + A^dag)/2; an
    asymmetry beyond HERMITIAN_REPAIR_TOL * ||A|| is an error rather than
    something to paper over.
    """
    a = np.asarray(entries, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ShapeError(f"operator must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a.view(np.float64))):
        raise InvalidParameterError("operator has non-finite entries")
    if hermitian:
        scale = max(np.linalg.norm(a), 1.0)
        asym = np.max(np.abs(a - a.conj().T))
        if asym > HERMITIAN_REPAIR_TOL * scale:
            raise InvalidParameterError(
                f"operator flagged hermitian but |A - A^dag| = {asym:.3e}")
        a = 0.5 * (a + a.conj().T)
    return a.copy()


def as_density(entries) -> np.ndarray:
    """Validate a density operator: hermitian, unit trace, positive."""
    rho = np.asarray(entries, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ShapeError(f"density operator must be square, got shape {rho.shape}")
    scale = max(np.linalg.norm(rho), 1.0)
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL * scale:
        raise InvalidParameterError("density operator is not hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidParameterError(f"density operator trace {tr!r} != 1")
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < -POSITIVITY_TOL:
        raise InvalidParameterError(
            f"density operator has negative eigenvalue {evals.min():.3e}")
    return rho.copy()


def _check_match(a: np.ndarray, psi: np.ndarray):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"operator must be square, got shape {a.shape}")
    if psi.ndim != 1 or psi.shape[0] != a.shape[0]:
        raise ShapeError(
            f"dimension mismatch: operator {a.shape} vs state {psi.shape}")


def normalize(psi) -> np.ndarray:
    """Return psi / ||psi||; error when the norm is numerically zero."""
    psi = np.asarray(psi, dtype=np.complex128)
    nrm = np.linalg.norm(psi)
    if not np.isfinite(nrm) or nrm < ZERO_NORM_TOL:
        raise DegenerateStateError(f"cannot normalize state with norm {nrm!r}")
    return psi / nrm


def expectation(a, psi) -> complex:
    """<psi|A|psi> for a normalized state."""
    a = np.asarray(a, dtype=np.complex128)
    psi = np.asarray(psi, dtype=np.complex128)
    _check_match(a, psi)
    return complex(np.vdot(psi, a @ psi))


def centered_operator(h, psi) -> np.ndarray:
    """H minus its current expectation: H - <psi|H|psi> * I."""
    h = np.asarray(h, dtype=np.complex128)
    psi = np.asarray(psi, dtype=np.complex128)
    _check_match(h, psi)
    mean = np.vdot(psi, h @ psi).real
    return h - mean * np.eye(h.shape[0], dtype=np.complex128)


def variance(h, psi) -> float:
    """<H^2> - <H>^2, clamped to be non-negative."""
    h = np.asarray(h, dtype=np.complex128)
    psi = np.asarray(psi, dtype=np.complex128)
    _check_match(h, psi)
    hpsi = h @ psi
    mean = np.vdot(psi, hpsi).real
    second = np.vdot(hpsi, hpsi).real
    return max(second - mean * mean, 0.0)


def pure_projector(psi) -> np.ndarray:
    """|psi><psi| for a normalized state."""
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim != 1:
        raise ShapeError(f"state must be 1-d, got shape {psi.shape}")
    return np.outer(psi, psi.conj())


def trace_distance(rho1, rho2) -> float:
    """Half the sum of |eigenvalues| of rho1 - rho2."""
    rho1 = np.asarray(rho1, dtype=np.complex128)
    rho2 = np.asarray(rho2, dtype=np.complex128)
    if rho1.shape != rho2.shape:
        raise ShapeError(f"shape mismatch: {rho1.shape} vs {rho2.shape}")
    diff = rho1 - rho2
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def align_global_phase(psi, reference) -> np.ndarray:
    """Rotate psi by a unit phase so it matches reference on the
    largest-magnitude component of reference."""
    psi = np.asarray(psi, dtype=np.complex128)
    ref = np.asarray(reference, dtype=np.complex128)
    if psi.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {psi.shape} vs {ref.shape}")
    k = int(np.argmax(np.abs(ref)))
    if abs(psi[k]) < ZERO_NORM_TOL:
        return psi.copy()
    phase = (ref[k] / abs(ref[k])) * (abs(psi[k]) / psi[k])
    return psi * phase


# ---------------------------------------------------------------------------
# JSON representation: complex scalars as [re, im] pairs, row-major matrices.

def state_to_json(psi) -> list:
    psi = np.asarray(psi, dtype=np.complex128)
    return [[float(z.real), float(z.imag)] for z in psi]


def state_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError("state JSON must be a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def operator_to_json(a) -> list:
    a = np.asarray(a, dtype=np.complex128)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def operator_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError("operator JSON must be a square grid of [re, im] pairs")
    return arr[:, :, 0] + 1j * arr[:, :, 1]
