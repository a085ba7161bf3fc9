"""Named experiment presets, scan-table I/O and noise calibration.

Each preset turns an :class:`ExperimentConfig` into a :class:`ScanResult`, one
row per scan value:

``raman_rabi``
    one atom (second trap empty) driven on the Raman transition for a variable
    time, read out by push-out. Scan value: pulse duration (s).
``rydberg_single`` / ``rydberg_pair``
    Rydberg excitation of one atom or of both atoms for a variable time, read
    out by recapture only. Scan value: pulse duration (s).
``entangle_parity``
    the entangling sequence followed by a global Raman rotation of angle theta,
    read out by push-out. Scan value: theta (rad).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from rydsim.analysis import apply_independent_loss, extract_fidelity, fit_rabi, pair_loss_probability, ParityScan
from rydsim.config import TWO_PI, ExperimentConfig, NoiseConfig
from rydsim.dynamics import evolve_lindblad, run_ensemble, suggest_dt
from rydsim.measurement import OutcomeProbs, pushout_probabilities, recapture_probabilities, sample_counts
from rydsim.physics import (
    ATOM_A,
    BOTH,
    NO_NOISE,
    PulseKind,
    PulseSpec,
    SequenceSpec,
    build_entangle_sequence,
)
from rydsim.qstate import AtomLevel, DensityMatrix

CSV_COLUMNS = ("scan_value", "p11", "p10", "p01", "p00", "n_shots", "seed")


@dataclass(frozen=True)
class ScanResult:
    scan_values: np.ndarray
    probabilities: np.ndarray  # (n, 4): p11, p10, p01, p00
    n_shots: np.ndarray
    seeds: np.ndarray

    def __len__(self):
        return len(self.scan_values)

    def outcome(self, i: int) -> OutcomeProbs:
        return OutcomeProbs.from_array(self.probabilities[i])


def derive_seed(master: int, *path: int) -> int:
    """Stable unsigned 64-bit child seed of ``master`` for a given index path."""
    return int(np.random.SeedSequence([master, *path]).generate_state(1, np.uint64)[0])


def _fmt(x) -> str:
    return f"{float(x):.9g}"


def write_scan_csv(result: ScanResult, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for value, probs, n, seed in zip(result.scan_values, result.probabilities, result.n_shots, result.seeds):
        writer.writerow([_fmt(value), *(_fmt(p) for p in probs), int(n), int(seed)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_scan_csv(path) -> ScanResult:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(CSV_COLUMNS)}, got {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        values = np.array([float(r[0]) for r in rows])
        probs = np.array([[float(x) for x in r[1:5]] for r in rows])
        shots = np.array([int(r[5]) for r in rows])
        seeds = np.array([int(r[6]) for r in rows], dtype=np.uint64)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from exc
    return ScanResult(values, probs, shots, seeds)


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------


def raman_sequence(config: ExperimentConfig, duration: float) -> SequenceSpec:
    p = config.physics
    pulses = ()
    if duration > 0:
        pulses = (
            PulseSpec(
                PulseKind.RAMAN_ROTATION,
                TWO_PI * p.raman_rabi_hz,
                duration,
                detuning_rad_per_s=TWO_PI * p.raman_detuning_hz,
                targets=frozenset({ATOM_A}),
            ),
        )
    return SequenceSpec(pulses, TWO_PI * p.blockade_shift_hz, (AtomLevel.UP, AtomLevel.ABSENT))


def rydberg_sequence(config: ExperimentConfig, duration: float, pair: bool) -> SequenceSpec:
    p = config.physics
    pulses = ()
    if duration > 0:
        pulses = (
            PulseSpec(
                PulseKind.RYD_EXCITE,
                TWO_PI * p.rydberg_rabi_hz,
                duration,
                detuning_rad_per_s=TWO_PI * p.rydberg_detuning_hz,
                targets=BOTH if pair else frozenset({ATOM_A}),
            ),
        )
    second = AtomLevel.UP if pair else AtomLevel.ABSENT
    return SequenceSpec(pulses, TWO_PI * p.blockade_shift_hz, (AtomLevel.UP, second))


def entangle_sequence(config: ExperimentConfig) -> SequenceSpec:
    p = config.physics
    return build_entangle_sequence(
        TWO_PI * p.rydberg_rabi_hz,
        TWO_PI * p.map_rabi_hz,
        TWO_PI * p.blockade_shift_hz,
        map_phases=(0.0, -p.bell_phase_rad),
        detuning=TWO_PI * p.rydberg_detuning_hz,
    )


def analysis_rotation_sequence(config: ExperimentConfig, theta: float) -> SequenceSpec | None:
    """Ideal global Raman pulse of area ``theta`` on both atoms (None for theta = 0)."""
    p = config.physics
    if theta < 0:
        raise ValueError("rotation angle must be >= 0")
    if theta == 0:
        return None
    omega = TWO_PI * p.raman_rabi_hz
    pulse = PulseSpec(
        PulseKind.RAMAN_ROTATION,
        omega,
        theta / omega,
        detuning_rad_per_s=TWO_PI * p.raman_detuning_hz,
    )
    # Raman pulses never touch |r>, so the |rr> shift only rotates phases of
    # coherences no later measurement sees; dropping it avoids a stiff step size.
    return SequenceSpec((pulse,), 0.0)


def rotate_for_analysis(rho: DensityMatrix, config: ExperimentConfig, theta: float) -> DensityMatrix:
    seq = analysis_rotation_sequence(config, theta)
    if seq is None:
        return rho
    return evolve_lindblad(rho, seq, NO_NOISE, dt=_dt(config, seq, NO_NOISE)).final


def _dt(config: ExperimentConfig, seq: SequenceSpec, noise) -> float:
    auto = suggest_dt(seq, noise)
    if config.physics.dt_s is None:
        return auto
    return min(config.physics.dt_s, seq.shortest_pulse_s / 100)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def scan_grid(config: ExperimentConfig) -> np.ndarray:
    return np.linspace(config.scan.start, config.scan.stop, config.scan.points)


def _finish_row(config, probs: OutcomeProbs, row: int, seed: int):
    if config.sample_counts:
        counts = sample_counts(probs, config.repetitions, derive_seed(seed, row))
        return counts.frequencies().as_array(), config.repetitions
    return probs.as_array(), config.shots


def _duration_scan(config: ExperimentConfig, make_sequence, detect) -> ScanResult:
    noise = config.noise_spec()
    values = scan_grid(config)
    probs, shots, seeds = [], [], []
    for i, duration in enumerate(values):
        seed = derive_seed(config.seed, i)
        seq = make_sequence(float(duration))
        # a zero-length scan point has nothing to integrate; any dt passes the checks
        dt = _dt(config, seq, noise) if seq.pulses else 1.0
        rho = run_ensemble(seq, noise, config.shots, seed, dt=dt).mean_rho_final
        row, n = _finish_row(config, detect(rho), i, seed)
        probs.append(row)
        shots.append(n)
        seeds.append(seed)
    return ScanResult(values, np.array(probs), np.array(shots), np.array(seeds, dtype=np.uint64))


def entangled_ensemble(config: ExperimentConfig, seed: int | None = None):
    """Noise-averaged two-atom state after the entangling sequence and extra loss."""
    seq = entangle_sequence(config)
    noise = config.noise_spec()
    seed = derive_seed(config.seed, 0) if seed is None else seed
    return run_ensemble(seq, noise, config.shots, seed, dt=_dt(config, seq, noise))


def _parity_scan(config: ExperimentConfig) -> ScanResult:
    seed = derive_seed(config.seed, 0)
    rho = entangled_ensemble(config, seed).mean_rho_final
    values = scan_grid(config)
    probs, shots = [], []
    for i, theta in enumerate(values):
        rotated = rotate_for_analysis(rho, config, float(theta))
        row, n = _finish_row(config, pushout_probabilities(rotated), i, seed)
        probs.append(row)
        shots.append(n)
    return ScanResult(values, np.array(probs), np.array(shots), np.full(len(values), seed, dtype=np.uint64))


def run_experiment(config: ExperimentConfig) -> ScanResult:
    kind = config.experiment
    if kind == "raman_rabi":
        return _duration_scan(config, lambda d: raman_sequence(config, d), pushout_probabilities)
    if kind == "rydberg_single":
        return _duration_scan(config, lambda d: rydberg_sequence(config, d, False), recapture_probabilities)
    if kind == "rydberg_pair":
        return _duration_scan(config, lambda d: rydberg_sequence(config, d, True), recapture_probabilities)
    if kind == "entangle_parity":
        return _parity_scan(config)
    raise ValueError(f"experiment {kind!r} is not a scan; use the calibrate command")


# ---------------------------------------------------------------------------
# fitting scan tables
# ---------------------------------------------------------------------------


def signal_of_interest(kind: str, probs: np.ndarray) -> np.ndarray:
    """The probability a Rabi-type experiment tracks, from (p11, p10, p01, p00) rows."""
    p11, p10, p01, p00 = probs.T
    if kind == "raman_rabi":
        return p11 + p10  # atom a found in |down>
    if kind == "rydberg_single":
        return p01 + p00  # atom a lost to the Rydberg state
    if kind == "rydberg_pair":
        return p10 + p01  # exactly one atom excited
    raise ValueError(f"no Rabi signal defined for experiment {kind!r}")


def fit_scan(config: ExperimentConfig, scan: ScanResult) -> dict:
    """Fit report (plain data) for a scan table produced by ``run_experiment``."""
    kind = config.experiment
    if kind == "entangle_parity":
        survival = config.analysis.pair_survival
        if survival is None:
            survival = 1.0 - pair_loss_probability(config.noise.extra_loss_prob)
        report = extract_fidelity(ParityScan(scan.scan_values, scan.probabilities), pair_survival=survival)
        return {"experiment": kind, **report.as_dict()}
    signal = signal_of_interest(kind, scan.probabilities)
    fit = fit_rabi(scan.scan_values, signal)
    out = {
        "experiment": kind,
        "frequency_hz": fit.frequency_hz,
        "frequency_rad_per_s": fit.frequency_rad_per_s,
        "contrast": fit.contrast,
        "decay": fit.decay,
        "offset": fit.offset,
        "residual_rms": fit.residual_rms,
        "degenerate": fit.degenerate,
    }
    if kind == "rydberg_pair":
        out["max_double_excitation"] = float(scan.probabilities[:, 3].max())
    return out


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    noise: NoiseConfig
    predicted: OutcomeProbs
    residual: float  # sum of squared differences to the target
    evaluations: int
    history: tuple

    def max_deviation(self, target: dict) -> float:
        pred = dict(zip(("p11", "p10", "p01", "p00"), self.predicted.as_array()))
        return max(abs(pred[k] - target[k]) for k in pred)


def _apply_parameter(noise: NoiseConfig, name: str, value: float) -> NoiseConfig | None:
    """Noise config with one calibration parameter changed; None if the combination is invalid."""
    up, down, dark = noise.scatter_branching
    if name == "scatter_dark_fraction":
        dark = value
        up = 1.0 - dark - down
    elif name == "scatter_down_fraction":
        down = value
        up = 1.0 - dark - down
    else:
        return replace(noise, **{name: float(value)})
    if up < -1e-12:
        return None
    return replace(noise, scatter_branching=(max(up, 0.0), down, dark))


def _current_value(noise: NoiseConfig, name: str) -> float:
    if name == "scatter_dark_fraction":
        return noise.scatter_branching[2]
    if name == "scatter_down_fraction":
        return noise.scatter_branching[1]
    return getattr(noise, name)


def calibrate(config: ExperimentConfig, progress=None) -> CalibrationResult:
    """Coordinate descent over the configured noise grid to match target outcomes.

    The objective is the sum of squared differences between predicted and
    target (p11, p10, p01, p00) after the entangling sequence. Extra loss is
    folded in through its exact expectation, so the coherent evolution only
    has to be integrated once per setting of the other parameters. Shots with
    quasi-static jitter reuse the same seed at every evaluation.
    """
    cal = config.calibrate
    target = np.array([cal.target[k] for k in ("p11", "p10", "p01", "p00")])
    grid = {name: [float(v) for v in values] for name, values in cal.grid.items()}
    seq = entangle_sequence(config)
    seed = derive_seed(config.seed, 0)
    cache: dict = {}
    evaluations = 0

    def pre_loss(noise: NoiseConfig) -> OutcomeProbs:
        nonlocal evaluations
        key = replace(noise, extra_loss_prob=0.0)
        if key not in cache:
            spec = key.to_spec()
            shots = 1 if spec.is_quasi_static_free else cal.shots
            rho = run_ensemble(seq, spec, shots, seed, dt=_dt(config, seq, spec)).mean_rho_final
            cache[key] = pushout_probabilities(rho)
            evaluations += 1
        return cache[key]

    def predict(noise: NoiseConfig) -> OutcomeProbs:
        return apply_independent_loss(pre_loss(noise), noise.extra_loss_prob)

    def objective(noise: NoiseConfig) -> float:
        return float(np.sum((predict(noise).as_array() - target) ** 2))

    best = config.noise
    best_cost = objective(best)
    history = [(0, "start", None, best_cost)]
    for sweep in range(1, cal.sweeps + 1):
        improved = False
        for name, values in grid.items():
            for value in values:
                candidate = _apply_parameter(best, name, value)
                if candidate is None:
                    continue
                cost = objective(candidate)
                if cost < best_cost - 1e-15:
                    best, best_cost, improved = candidate, cost, True
            history.append((sweep, name, _current_value(best, name), best_cost))
            if progress is not None:
                progress(sweep, name, _current_value(best, name), best_cost)
        if not improved:
            break
    return CalibrationResult(best, predict(best), best_cost, evaluations, tuple(history))


def verify_calibration(config: ExperimentConfig, shots: int | None = None) -> OutcomeProbs:
    """Push-out outcomes of the entangling sequence with sampled (not expected) loss."""
    cfg = replace(config, shots=shots or config.calibrate.verify_shots)
    return pushout_probabilities(entangled_ensemble(cfg).mean_rho_final)


def parity_scan_from_state(rho: DensityMatrix, config: ExperimentConfig, thetas) -> ParityScan:
    probs = [pushout_probabilities(rotate_for_analysis(rho, config, float(t))).as_array() for t in thetas]
    return ParityScan(np.asarray(thetas, dtype=float), np.array(probs))


def default_parity_grid(points: int = 16) -> np.ndarray:
    return np.linspace(0.0, 2 * math.pi, points, endpoint=False)
