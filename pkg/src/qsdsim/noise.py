"""Wiener-increment sampling and classical complex diffusion.

Real increments dw are Normal(0, dt).  Complex increments dxi have
independent real and imaginary parts, each Normal(0, dt/2), so that

    E[dxi] = 0,   E[dxi^2] = 0,   E[|dxi|^2] = dt,

and the law is invariant under multiplication by a unit phase.  All
sampling is Ito-discretized: quadratic |dxi|^2 terms contribute at first
order in dt downstream.

Streams are counter-based (Philox) and keyed by (master_seed,
stream_index), so every trajectory of an ensemble owns an independent,
bit-reproducible noise source regardless of scheduling.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

_U64 = np.uint64


class NoiseStream:
    """Seedable, splittable source of Wiener increments.

    One stream per trajectory; identical (master_seed, stream_index, draw
    sequence) reproduces identical increments bit-for-bit, and distinct
    stream indices give statistically independent sequences.
    """

    def __init__(self, master_seed: int, stream_index: int = 0):
        if stream_index < 0:
            raise InvalidParameterError(
                f"stream_index must be non-negative, got {stream_index}")
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_index = int(stream_index)
        key = np.array([self.master_seed, self.stream_index], dtype=_U64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, stream_index: int) -> "NoiseStream":
        """Fresh stream with the same master seed and a new index."""
        return NoiseStream(self.master_seed, stream_index)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def __repr__(self):
        return f"NoiseStream(master_seed={self.master_seed}, stream_index={self.stream_index})"


@dataclass(frozen=True)
class ClassicalDiffusionSpec:
    """Drift-plus-diffusion motion in the complex plane: dz = v dt + a dxi."""

    drift: complex
    amplitude: complex
    z0: complex = 0.0 + 0.0j

    def __post_init__(self):
        for name in ("drift", "amplitude", "z0"):
            v = complex(getattr(self, name))
            if not (np.isfinite(v.real) and np.isfinite(v.imag)):
                raise InvalidParameterError(f"{name} must be finite, got {v}")


def _check_dt(dt: float) -> float:
    dt = float(dt)
    if not np.isfinite(dt) or dt <= 0.0:
        raise InvalidParameterError(f"dt must be positive and finite, got {dt}")
    return dt


def sample_dw(dt: float, stream: NoiseStream) -> float:
    """One real Wiener increment: Normal(0, dt).  Advances the stream by one draw."""
    dt = _check_dt(dt)
    return float(np.sqrt(dt) * stream.standard_normal())


def sample_dxi(dt: float, stream: NoiseStream) -> complex:
    """One complex Wiener increment with E|dxi|^2 = dt."""
    dt = _check_dt(dt)
    g = stream.standard_normal(2)
    return complex(np.sqrt(0.5 * dt) * (g[0] + 1j * g[1]))


def sample_dxi_block(dt: float, n: int, stream: NoiseStream) -> np.ndarray:
    """n complex increments drawn in the same order as repeated sample_dxi calls.

    Bit-identical to n successive sample_dxi draws from the same stream,
    which is what lets batched integrators replay per-step noise exactly.
    """
    dt = _check_dt(dt)
    n = int(n)
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    g = stream.standard_normal((n, 2))
    return np.sqrt(0.5 * dt) * (g[:, 0] + 1j * g[:, 1])


def simulate_langevin(spec: ClassicalDiffusionSpec, dt: float, n_steps: int,
                      stream: NoiseStream) -> np.ndarray:
    """Euler path of dz = v dt + a dxi; returns n_steps+1 positions including z0."""
    dt = _check_dt(dt)
    n_steps = int(n_steps)
    if n_steps < 1:
        raise InvalidParameterError(f"n_steps must be >= 1, got {n_steps}")
    dxi = sample_dxi_block(dt, n_steps, stream)
    increments = complex(spec.drift) * dt + complex(spec.amplitude) * dxi
    path = np.empty(n_steps + 1, dtype=np.complex128)
    path[0] = complex(spec.z0)
    np.cumsum(increments, out=path[1:])
    path[1:] += path[0]
    return path


def moment_audit(dt: float, n: int, stream: NoiseStream) -> dict:
    """Empirical moments of n complex increments at step dt.

    Returns the column set emitted by the `noise-audit` CLI subcommand.
    """
    dxi = sample_dxi_block(dt, n, stream)
    return {
        "dt": float(dt),
        "n": int(n),
        "mean_re": float(np.mean(dxi.real)),
        "mean_im": float(np.mean(dxi.imag)),
        "mean_sq_re": float(np.mean(dxi.real ** 2)),
        "mean_sq_im": float(np.mean(dxi.imag ** 2)),
        "mean_abs_sq": float(np.mean(np.abs(dxi) ** 2)),
    }
