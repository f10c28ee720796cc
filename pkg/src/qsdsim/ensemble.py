"""Ensemble runs, ensemble-vs-master reconciliation, localization statistics.

Trajectories are integrated in fixed-size batches of 512 (vectorized over
the batch), each trajectory drawing from its own counter-based noise
stream keyed by (master_seed, trajectory_index).  Worker processes only
distribute those fixed batches, and all reductions happen in the parent
over index-ordered stacked arrays, so a run's output is bit-identical for
any worker count.

Units: all integration happens in natural units (hbar = 1).  SI configs
are rescaled on load - the energy unit E0 is the largest |eigenvalue| of
the hamiltonian, times become t * E0 / hbar - which keeps Planck-scale
tau0 values finite instead of forcing 1e-44 s steps.  The conversion is
echoed in every output header.
"""

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import master as master_mod
from . import qcore, spacetime
from .errors import (DegenerateStateError, IntegrationFailureError,
                     InvalidComparisonError, InvalidParameterError)
from .noise import NoiseStream
from .trajectory import record_steps

CHUNK_SIZE = 512         # trajectories per batch; independent of worker count
NOISE_BLOCK = 1024       # steps of noise drawn per generator call
MAX_RECORD_POINTS = 10_000


@dataclass(frozen=True)
class SimulationConfig:
    """Resolved, natural-unit description of an ensemble run."""

    hamiltonian: np.ndarray
    initial_state: np.ndarray
    tau0: float
    dt: float
    t_final: float
    n_trajectories: int
    master_seed: int
    record_stride: int | None = None
    hbar: float = 1.0
    tau0_mode: str = "explicit"
    c_factor: float = 1.0
    units: str = "natural"
    energy_unit_j: float | None = None
    time_unit_s: float | None = None

    def __post_init__(self):
        h = qcore.as_operator(self.hamiltonian, hermitian=True)
        psi = qcore.normalize(qcore.as_state(self.initial_state, normalized=False))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "initial_state", psi)
        if h.shape[0] != psi.shape[0]:
            raise InvalidParameterError(
                f"hamiltonian {h.shape} does not match state dim {psi.shape[0]}")
        if self.n_trajectories < 1:
            raise InvalidParameterError(
                f"n_trajectories must be >= 1, got {self.n_trajectories}")
        if not np.isfinite(self.dt) or self.dt <= 0.0 or self.dt > self.t_final:
            raise InvalidParameterError(
                f"need 0 < dt <= t_final, got dt={self.dt}, t_final={self.t_final}")
        if not np.isfinite(self.tau0) or self.tau0 <= 0.0:
            raise InvalidParameterError(
                f"resolved tau0 must be > 0 for a diffusion run, got {self.tau0}")
        if self.record_stride is not None and self.record_stride < 1:
            raise InvalidParameterError(
                f"record_stride must be >= 1, got {self.record_stride}")
        phase_step = self.dt * float(np.max(np.abs(np.linalg.eigvalsh(h)))) / self.hbar
        if phase_step > 0.5:
            warnings.warn(
                f"dt under-resolves the fastest phase (dt*E_max/hbar = "
                f"{phase_step:.3g}); the weak-order-1 stepper will be badly "
                f"biased", RuntimeWarning, stacklevel=2)

    @property
    def n_steps(self) -> int:
        return max(int(round(self.t_final / self.dt)), 1)

    @property
    def effective_record_stride(self) -> int:
        if self.record_stride is not None:
            return self.record_stride
        return max(1, math.ceil(self.n_steps / MAX_RECORD_POINTS))

    def header(self) -> dict:
        """Unit-conversion echo placed at the top of every output file."""
        return {
            "units": self.units,
            "energy_unit_J": self.energy_unit_j if self.units == "SI" else 1.0,
            "time_unit_s": self.time_unit_s if self.units == "SI" else 1.0,
            "hbar_internal": self.hbar,
            "tau0_mode": self.tau0_mode,
            "tau0_internal": self.tau0,
            "C": self.c_factor,
            "master_seed": self.master_seed,
        }

    def physics_matches(self, other: "SimulationConfig") -> bool:
        return (np.array_equal(self.hamiltonian, other.hamiltonian)
                and np.array_equal(self.initial_state, other.initial_state)
                and self.tau0 == other.tau0
                and self.dt == other.dt
                and self.t_final == other.t_final
                and self.hbar == other.hbar
                and self.effective_record_stride == other.effective_record_stride)


def config_from_dict(data: dict) -> SimulationConfig:
    """Build a run config from its JSON form, resolving units and tau0."""
    try:
        units = data.get("units", "natural")
        if units not in ("natural", "SI"):
            raise InvalidParameterError(f"units must be 'natural' or 'SI', got {units!r}")
        h = qcore.operator_from_json(data["hamiltonian"])
        psi0 = qcore.state_from_json(data["initial_state"])
        tau0_mode = data.get("tau0_mode", "explicit")
        c_factor = float(data.get("C", 1.0))
        dt = float(data["dt"])
        t_final = float(data["t_final"])
        n_traj = int(data.get("n_trajectories", 1))
        seed = int(data.get("master_seed", 0))
        stride = data.get("record_stride")
        stride = None if stride is None else int(stride)
    except KeyError as exc:
        raise InvalidParameterError(f"config is missing field {exc}") from exc

    if tau0_mode == "explicit":
        if "tau0" not in data:
            raise InvalidParameterError("explicit tau0_mode requires a tau0 field")
        tau0 = float(data["tau0"])
    elif tau0_mode == "planck":
        if units != "SI":
            raise InvalidParameterError(
                "tau0_mode 'planck' needs SI units (the Planck time is an absolute scale)")
        tau0 = spacetime.fluctuation_time_constant(c_factor)
    else:
        raise InvalidParameterError(
            f"tau0_mode must be 'explicit' or 'planck', got {tau0_mode!r}")

    if units == "SI":
        hbar_si = spacetime.CODATA.hbar
        h_herm = qcore.as_operator(h, hermitian=True)
        scale = float(np.max(np.abs(np.linalg.eigvalsh(h_herm))))
        e0 = scale if scale > 0.0 else 1.0
        h = h_herm / e0
        to_natural_time = e0 / hbar_si
        dt *= to_natural_time
        t_final *= to_natural_time
        tau0 *= to_natural_time
        return SimulationConfig(
            hamiltonian=h, initial_state=psi0, tau0=tau0, dt=dt,
            t_final=t_final, n_trajectories=n_traj, master_seed=seed,
            record_stride=stride, hbar=1.0, tau0_mode=tau0_mode,
            c_factor=c_factor, units="SI", energy_unit_j=e0,
            time_unit_s=hbar_si / e0)
    return SimulationConfig(
        hamiltonian=h, initial_state=psi0, tau0=tau0, dt=dt,
        t_final=t_final, n_trajectories=n_traj, master_seed=seed,
        record_stride=stride, hbar=1.0, tau0_mode=tau0_mode,
        c_factor=c_factor, units="natural")


def load_config(path) -> SimulationConfig:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise InvalidParameterError("config file must contain a JSON object")
    return config_from_dict(data)


@dataclass
class EnsembleSummary:
    """Ensemble reductions at shared record times, plus per-trajectory series."""

    times: np.ndarray                    # (T,)
    mean_projector: np.ndarray           # (T, n, n)
    mean_energy: np.ndarray              # (T,)
    mean_energy_variance: np.ndarray     # (T,)
    eigenvalues: np.ndarray              # (n,) ascending
    initial_populations: np.ndarray      # (n,) in the energy eigenbasis
    born_frequencies: np.ndarray         # (n,) terminal fractions per eigenstate
    energy_series: np.ndarray            # (M, T)
    variance_series: np.ndarray          # (M, T)
    norm_defect_series: np.ndarray       # (M, T)
    config: SimulationConfig
    trace_distance_to_master: np.ndarray | None = None
    header: dict = field(default_factory=dict)

    @property
    def n_trajectories(self) -> int:
        return self.energy_series.shape[0]

    @property
    def terminal_variances(self) -> np.ndarray:
        return self.variance_series[:, -1]


def _simulate_chunk(args):
    """Integrate trajectories [start, start+count) as one vectorized batch.

    Runs in worker processes; einsum (unoptimized) keeps per-row arithmetic
    identical for any batch size, so chunk boundaries never leak into values.
    """
    (h, psi0, tau0, hbar, dt, n_steps, rec_steps, seed, start, count) = args
    n = psi0.shape[0]
    rec_index = {step: i for i, step in enumerate(rec_steps)}
    n_rec = len(rec_steps)

    psi = np.tile(psi0, (count, 1))
    states = np.empty((count, n_rec, n), dtype=np.complex128)
    e_series = np.empty((count, n_rec))
    var_series = np.empty((count, n_rec))
    defect_series = np.empty((count, n_rec))
    last_defect = np.zeros(count)

    streams = [NoiseStream(seed, start + j) for j in range(count)]
    sqrt_tau = math.sqrt(tau0)
    inv_h = 1.0 / hbar
    drift1 = -1j * inv_h * dt
    drift2 = -0.5 * tau0 * inv_h * inv_h * dt
    diff_amp = sqrt_tau * inv_h
    root_half_dt = math.sqrt(0.5 * dt)

    def record(pos):
        hpsi = np.einsum("ij,bj->bi", h, psi)
        e = np.einsum("bi,bi->b", psi.conj(), hpsi).real
        e2 = np.einsum("bi,bi->b", hpsi.conj(), hpsi).real
        states[:, pos] = psi
        e_series[:, pos] = e
        var_series[:, pos] = np.maximum(e2 - e * e, 0.0)
        defect_series[:, pos] = last_defect

    record(0)
    step = 0
    while step < n_steps:
        block = min(NOISE_BLOCK, n_steps - step)
        dxi = np.empty((count, block), dtype=np.complex128)
        for j, s in enumerate(streams):
            g = s.standard_normal((block, 2))
            dxi[j] = root_half_dt * (g[:, 0] + 1j * g[:, 1])
        for i in range(block):
            step += 1
            hpsi = np.einsum("ij,bj->bi", h, psi)
            e = np.einsum("bi,bi->b", psi.conj(), hpsi).real
            hd = hpsi - e[:, None] * psi
            hd2 = np.einsum("ij,bj->bi", h, hd) - e[:, None] * hd
            new = psi + drift1 * hd + drift2 * hd2 \
                + (diff_amp * dxi[:, i])[:, None] * hd
            nrm_sq = np.einsum("bi,bi->b", new.conj(), new).real
            if not np.all(np.isfinite(nrm_sq)) or np.any(nrm_sq < 1e-28):
                bad = int(np.argmax(~np.isfinite(nrm_sq) | (nrm_sq < 1e-28)))
                raise DegenerateStateError(
                    f"trajectory {start + bad} failed at step {step}: "
                    f"norm^2 = {nrm_sq[bad]!r}")
            nrm = np.sqrt(nrm_sq)
            last_defect = nrm - 1.0
            psi = new / nrm[:, None]
            if step in rec_index:
                record(rec_index[step])
    return states, e_series, var_series, defect_series


def run_ensemble(config: SimulationConfig, workers: int = 1) -> EnsembleSummary:
    """Run n_trajectories independent diffusion trajectories and reduce them.

    Deterministic for a given master_seed regardless of `workers`: stream
    index = trajectory index, batch boundaries are fixed, and reductions
    run over the fully assembled arrays in index order.  Any failing
    trajectory aborts the run, reporting its index (dropping it silently
    would bias the ensemble mean).
    """
    if workers < 1:
        raise InvalidParameterError(f"workers must be >= 1, got {workers}")
    h = config.hamiltonian
    psi0 = config.initial_state
    n_steps = config.n_steps
    rec_steps = tuple(record_steps(n_steps, config.effective_record_stride))
    m = config.n_trajectories

    jobs = []
    for start in range(0, m, CHUNK_SIZE):
        count = min(CHUNK_SIZE, m - start)
        jobs.append((h, psi0, config.tau0, config.hbar, config.dt, n_steps,
                     rec_steps, config.master_seed, start, count))

    if workers == 1 or len(jobs) == 1:
        results = [_simulate_chunk(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_chunk, jobs))

    states = np.concatenate([r[0] for r in results], axis=0)
    e_series = np.concatenate([r[1] for r in results], axis=0)
    var_series = np.concatenate([r[2] for r in results], axis=0)
    defect_series = np.concatenate([r[3] for r in results], axis=0)

    mean_projector = np.einsum("mti,mtj->tij", states, states.conj()) / m
    eigvals, eigvecs = np.linalg.eigh(h)
    # amplitudes in the energy eigenbasis: <v_k | psi>
    initial_pops = np.abs(eigvecs.conj().T @ psi0) ** 2
    terminal_amps = states[:, -1, :] @ eigvecs.conj()
    winners = np.argmax(np.abs(terminal_amps) ** 2, axis=1)
    born = np.bincount(winners, minlength=h.shape[0]) / m

    times = config.dt * np.asarray(rec_steps, dtype=float)
    return EnsembleSummary(
        times=times,
        mean_projector=mean_projector,
        mean_energy=e_series.mean(axis=0),
        mean_energy_variance=var_series.mean(axis=0),
        eigenvalues=eigvals,
        initial_populations=initial_pops,
        born_frequencies=born,
        energy_series=e_series,
        variance_series=var_series,
        norm_defect_series=defect_series,
        config=config,
        header=config.header(),
    )


def compare_ensemble_to_master(summary: EnsembleSummary,
                               config: SimulationConfig) -> np.ndarray:
    """Trace distance between the ensemble mean projector and the RK4
    master solution at every record time.

    Expected to scale as O(1/sqrt(M)) Monte Carlo error plus O(dt)
    discretization bias.
    """
    if not config.physics_matches(summary.config):
        raise InvalidComparisonError(
            "ensemble summary and config describe different runs "
            "(hamiltonian / initial state / tau0 / grid mismatch)")
    rec_steps = record_steps(config.n_steps, config.effective_record_stride)
    if len(rec_steps) != len(summary.times) or not np.allclose(
            config.dt * np.asarray(rec_steps), summary.times):
        raise InvalidComparisonError("record grids do not line up")

    rho0 = qcore.pure_projector(config.initial_state)
    run = master_mod.MasterRunConfig(dt=config.dt, t_final=config.t_final,
                                     tau0=config.tau0, hbar=config.hbar)
    rhs = lambda rho: master_mod.psd_master_rhs(  # noqa: E731
        rho, config.hamiltonian, config.tau0, config.hbar)
    _, rhos = master_mod.integrate_master(rho0, rhs, run)
    return np.array([
        qcore.trace_distance(summary.mean_projector[j], rhos[step])
        for j, step in enumerate(rec_steps)
    ])


@dataclass
class LocalizationReport:
    """Energy-localization diagnostics for a finished ensemble."""

    applicable: bool
    degenerate_levels: list
    eigenvalues: np.ndarray
    monotonicity_defect: float          # largest raw increase of mean Var H
    monotonicity_max_z: float           # that increase over its standard error
    monotone_within_tolerance: bool
    born_frequencies: np.ndarray
    expected_populations: np.ndarray
    born_halfwidths: np.ndarray         # 4-sigma binomial
    born_within_tolerance: bool
    terminal_variance_max: float
    terminal_variance_median: float
    variance_threshold: float
    localized_fraction: float

    def to_json_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "degenerate_levels": self.degenerate_levels,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "monotonicity_defect": self.monotonicity_defect,
            "monotonicity_max_z": self.monotonicity_max_z,
            "monotone_within_tolerance": self.monotone_within_tolerance,
            "born_frequencies": [float(v) for v in self.born_frequencies],
            "expected_populations": [float(v) for v in self.expected_populations],
            "born_halfwidths": [float(v) for v in self.born_halfwidths],
            "born_within_tolerance": self.born_within_tolerance,
            "terminal_variance_max": self.terminal_variance_max,
            "terminal_variance_median": self.terminal_variance_median,
            "variance_threshold": self.variance_threshold,
            "localized_fraction": self.localized_fraction,
        }


def localization_stats(summary: EnsembleSummary,
                       variance_threshold: float | None = None) -> LocalizationReport:
    """Monotonicity of mean Var H, terminal variances, and Born frequencies.

    With a degenerate spectrum the localization statistics are flagged
    inapplicable across the degenerate subspace (trajectories cannot
    select between degenerate levels).
    """
    w = summary.eigenvalues
    scale = max(float(np.max(np.abs(w))), 1.0)
    degenerate = [
        (i, i + 1) for i in range(len(w) - 1)
        if abs(w[i + 1] - w[i]) <= 1e-12 * scale
    ]
    spread = float(w[-1] - w[0])
    if variance_threshold is None:
        variance_threshold = 1e-6 * spread ** 2 if spread > 0 else 0.0

    m = summary.n_trajectories
    mean_var = summary.mean_energy_variance
    se = summary.variance_series.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 \
        else np.zeros_like(mean_var)
    diffs = np.diff(mean_var)
    se_diff = np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    defect = float(max(np.max(diffs, initial=0.0), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se_diff > 0, diffs / se_diff, np.where(diffs > 0, np.inf, 0.0))
    max_z = float(np.max(z, initial=0.0))

    halfwidths = 4.0 * np.sqrt(summary.initial_populations
                               * (1.0 - summary.initial_populations) / m)
    born_dev = np.abs(summary.born_frequencies - summary.initial_populations)
    born_ok = bool(np.all(born_dev <= halfwidths + 1e-15))

    term = summary.terminal_variances
    return LocalizationReport(
        applicable=not degenerate,
        degenerate_levels=degenerate,
        eigenvalues=w,
        monotonicity_defect=defect,
        monotonicity_max_z=max_z,
        monotone_within_tolerance=bool(max_z <= 4.0),
        born_frequencies=summary.born_frequencies,
        expected_populations=summary.initial_populations,
        born_halfwidths=halfwidths,
        born_within_tolerance=born_ok,
        terminal_variance_max=float(term.max()),
        terminal_variance_median=float(np.median(term)),
        variance_threshold=float(variance_threshold),
        localized_fraction=float(np.mean(term < variance_threshold)),
    )


# ---------------------------------------------------------------------------
# Output files

def write_ensemble_csv(path, summary: EnsembleSummary):
    """Scalar series: t, e_mean, e_var_mean, trace_dist (nan when absent)."""
    dist = summary.trace_distance_to_master
    with open(path, "w", newline="") as fh:
        for key, value in summary.header.items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "e_mean", "e_var_mean", "trace_dist"])
        for j, t in enumerate(summary.times):
            writer.writerow([
                f"{t:.17g}",
                f"{summary.mean_energy[j]:.17g}",
                f"{summary.mean_energy_variance[j]:.17g}",
                f"{dist[j]:.17g}" if dist is not None else "nan",
            ])


def write_trajectory_csv(path, summary: EnsembleSummary, index: int):
    """Per-trajectory series for one trajectory of the ensemble."""
    if not 0 <= index < summary.n_trajectories:
        raise InvalidParameterError(
            f"trajectory index {index} outside 0..{summary.n_trajectories - 1}")
    with open(path, "w", newline="") as fh:
        for key, value in summary.header.items():
            fh.write(f"# {key} = {value}\n")
        fh.write(f"# trajectory_index = {index}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "e_mean", "e_var", "norm_drift"])
        for j, t in enumerate(summary.times):
            writer.writerow([
                f"{t:.17g}",
                f"{summary.energy_series[index, j]:.17g}",
                f"{summary.variance_series[index, j]:.17g}",
                f"{summary.norm_defect_series[index, j]:.17g}",
            ])


def write_summary_json(path, summary: EnsembleSummary):
    dist = summary.trace_distance_to_master
    payload = {
        "header": summary.header,
        "n_trajectories": summary.n_trajectories,
        "dt": summary.config.dt,
        "t_final": summary.config.t_final,
        "times": [float(t) for t in summary.times],
        "mean_energy": [float(v) for v in summary.mean_energy],
        "mean_energy_variance": [float(v) for v in summary.mean_energy_variance],
        "eigenvalues": [float(v) for v in summary.eigenvalues],
        "initial_populations": [float(v) for v in summary.initial_populations],
        "born_frequencies": [float(v) for v in summary.born_frequencies],
        "final_mean_projector": qcore.operator_to_json(summary.mean_projector[-1]),
        "trace_distance_to_master":
            None if dist is None else [float(v) for v in dist],
        "terminal_variance_max": float(summary.terminal_variances.max()),
        "terminal_variance_median": float(np.median(summary.terminal_variances)),
    }
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
