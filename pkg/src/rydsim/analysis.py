"""Rabi fitting, parity-scan fidelity estimation and loss bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rydsim.measurement import OutcomeProbs

BELL_THRESHOLD = 0.5


class FitError(RuntimeError):
    """A fit could not be carried out; ``diagnostics`` holds the best state reached."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# damped Rabi fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RabiFit:
    """Result of :func:`fit_rabi`.

    The model is ``offset + contrast/2 * (1 - cos(w t) exp(-(decay * w t)**2 / 2))``,
    a sinusoid damped by Gaussian frequency jitter of relative width ``decay``.
    """

    frequency_rad_per_s: float
    contrast: float
    decay: float
    offset: float
    residual_rms: float
    degenerate: bool = False
    iterations: int = 0

    def __post_init__(self):
        if not self.frequency_rad_per_s > 0:
            raise ValueError("fitted frequency must be > 0")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError(f"contrast {self.contrast} outside [0, 1]")

    @property
    def frequency_hz(self) -> float:
        return self.frequency_rad_per_s / (2 * math.pi)

    def model(self, t) -> np.ndarray:
        return _rabi_model(np.asarray(t, dtype=float), self.offset, self.contrast, self.frequency_rad_per_s, self.decay**2)


def _rabi_model(t, offset, contrast, w, s):
    envelope = np.exp(-0.5 * s * (w * t) ** 2)
    return offset + 0.5 * contrast * (1.0 - np.cos(w * t) * envelope)


def _rabi_jacobian(t, contrast, w, s):
    wt = w * t
    envelope = np.exp(-0.5 * s * wt**2)
    cos, sin = np.cos(wt), np.sin(wt)
    d_offset = np.ones_like(t)
    d_contrast = 0.5 * (1.0 - cos * envelope)
    d_w = 0.5 * contrast * envelope * (sin * t + cos * s * w * t**2)
    d_s = 0.25 * contrast * cos * envelope * wt**2
    return np.column_stack([d_offset, d_contrast, d_w, d_s])


def _linear_amplitudes(tau, y, w):
    """Best (offset, contrast) for an undamped model at fixed frequency."""
    X = np.column_stack([np.ones_like(tau), 0.5 * (1.0 - np.cos(w * tau))])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(resid @ resid)


def _frequency_candidates(tau, y):
    span = tau.max() - tau.min()
    steps = np.diff(np.sort(tau))
    steps = steps[steps > 0]
    nyquist = math.pi / np.median(steps)
    lowest = math.pi / span  # half a period over the record
    grid = np.arange(lowest, nyquist, 2 * math.pi / (8 * span))
    seeds = []
    if np.allclose(steps, steps[0], rtol=1e-6):
        spectrum = np.abs(np.fft.rfft(y - y.mean()))
        freqs = np.fft.rfftfreq(len(y), steps[0]) * 2 * math.pi
        if len(spectrum) > 1:
            seeds.append(freqs[1:][np.argmax(spectrum[1:])])
    return np.concatenate([np.array(seeds), grid])


def fit_rabi(times, probabilities, max_iterations: int = 200) -> RabiFit:
    """Fit a Gaussian-damped Rabi oscillation to excitation data starting at its minimum.

    A coarse frequency grid (seeded with the FFT peak for uniform sampling) picks
    the starting point; Gauss-Newton with step halving then refines offset,
    contrast, frequency and damping together.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(probabilities, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("times and probabilities must be 1-d arrays of equal length")
    if len(t) < 10:
        raise FitError(f"need at least 10 samples, got {len(t)}")
    order = np.argsort(t)
    t, y = t[order], y[order]
    T = float(np.max(np.abs(t)))
    if T <= 0:
        raise FitError("sample times must span a positive interval")
    tau = t / T

    candidates = _frequency_candidates(tau, y)
    scores = [_linear_amplitudes(tau, y, w) for w in candidates]
    best = int(np.argmin([sse for _, sse in scores]))
    (offset, contrast), _ = scores[best]
    w = float(candidates[best])

    if np.ptp(y) < 1e-9 or abs(contrast) < 1e-9:
        rms = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
        return RabiFit(w / T, 0.0, 0.0, float(y.mean()), rms, degenerate=True)

    params = np.array([offset, contrast, w, 0.0])

    def cost_of(p):
        r = y - _rabi_model(tau, p[0], p[1], p[2], p[3])
        return float(r @ r), r

    cost, resid = cost_of(params)
    for iteration in range(1, max_iterations + 1):
        J = _rabi_jacobian(tau, params[1], params[2], params[3])
        active = [0, 1, 2, 3]
        step, *_ = np.linalg.lstsq(J, resid, rcond=None)
        if params[3] <= 0 and step[3] < 0:
            active = [0, 1, 2]
            sub, *_ = np.linalg.lstsq(J[:, active], resid, rcond=None)
            step = np.append(sub, 0.0)
        improved = False
        scale = 1.0
        for _ in range(40):
            trial = params + scale * step
            trial[3] = max(trial[3], 0.0)
            trial_cost, trial_resid = cost_of(trial)
            if trial_cost < cost:
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
        rel_change = (cost - trial_cost) / max(cost, 1e-300)
        step_size = abs(trial[2] - params[2]) / abs(params[2])
        params, cost, resid = trial, trial_cost, trial_resid
        if trial_cost < 1e-28 or (rel_change < 1e-13 and step_size < 1e-11):
            break
    else:
        raise FitError(
            f"Gauss-Newton did not converge in {max_iterations} iterations",
            {"offset": params[0], "contrast": params[1], "frequency_rad_per_s": params[2] / T, "cost": cost},
        )

    offset, contrast, w, s = params
    if w < 0:
        w = -w
    periods = w * (tau.max() - tau.min()) / (2 * math.pi)
    if periods < 1.5:
        raise FitError(
            f"samples cover only {periods:.2f} oscillation periods (need >= 1.5)",
            {"frequency_rad_per_s": w / T, "contrast": contrast},
        )
    rms = math.sqrt(cost / len(y))
    return RabiFit(
        frequency_rad_per_s=w / T,
        contrast=float(min(max(contrast, 0.0), 1.0)),
        decay=math.sqrt(max(s, 0.0)),
        offset=float(offset),
        residual_rms=rms,
        iterations=iteration,
    )


def frequency_ratio(pair_fit: RabiFit, single_fit: RabiFit) -> float:
    """Collective over single-atom Rabi frequency (sqrt(2) for a perfect blockade)."""
    return pair_fit.frequency_rad_per_s / single_fit.frequency_rad_per_s


# ---------------------------------------------------------------------------
# parity-scan fidelity estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParityScan:
    """Outcome probabilities versus global rotation angle ``theta = Omega_raman * t``.

    ``probabilities`` has one row per angle, columns (p11, p10, p01, p00).
    """

    thetas: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float).reshape(-1)
        probs = np.asarray(self.probabilities, dtype=float).reshape(len(thetas), 4)
        if len(thetas) < 8:
            raise ValueError(f"a parity scan needs at least 8 angles, got {len(thetas)}")
        ordered = np.sort(thetas)
        gaps = np.diff(ordered)
        step = gaps[gaps > 0].min() if np.any(gaps > 0) else 0.0
        if np.ptp(ordered) + step < 2 * math.pi - 1e-9:
            raise ValueError("parity scan must span a full 2 pi of rotation angle")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_samples(cls, samples) -> "ParityScan":
        """Build from an iterable of (theta, OutcomeProbs) pairs."""
        samples = list(samples)
        return cls(
            np.array([theta for theta, _ in samples]),
            np.array([p.as_array() for _, p in samples]),
        )

    @property
    def p11(self) -> np.ndarray:
        return self.probabilities[:, 0]

    @property
    def single_flip(self) -> np.ndarray:
        return self.probabilities[:, 1] + self.probabilities[:, 2]


@dataclass(frozen=True)
class FidelityReport:
    F: float
    pair_survival: float | None
    F_prime: float | None
    coefficients: dict
    p_down_down: float
    p_up_up: float
    single_flip: float
    coherence: float
    assumption: str = field(default="double-flip coherence rho(dd, uu) assumed zero")

    def as_dict(self) -> dict:
        return {
            "F": self.F,
            "pair_survival": self.pair_survival,
            "F_prime": self.F_prime,
            "coefficients": dict(self.coefficients),
            "p_down_down": self.p_down_down,
            "p_up_up": self.p_up_up,
            "single_flip": self.single_flip,
            "coherence": self.coherence,
            "assumption": self.assumption,
        }


def _trig_design(thetas):
    return np.column_stack(
        [np.ones_like(thetas), np.cos(thetas), np.sin(thetas), np.cos(2 * thetas), np.sin(2 * thetas)]
    )


def _trig_eval(coef, theta):
    return float(_trig_design(np.array([theta]))[0] @ coef)


def extract_fidelity(scan: ParityScan, pair_survival: float | None = None) -> FidelityReport:
    """Bell-state fidelity with Psi+ from a global-rotation parity scan.

    P11(theta) and P01+P10(theta) are fitted by linear least squares to
    second-order trigonometric polynomials. The cos(2 theta) amplitude C2 of
    P11 fixes the coherence ``c = (p_dd + p_uu - s - 8 C2) / 2`` between
    |down, up> and |up, down>, and ``F = s/2 + c``. Lost atoms read 0, so F
    covers all events; pass ``pair_survival`` to also get the renormalized F'.
    """
    X = _trig_design(scan.thetas)
    coef11, *_ = np.linalg.lstsq(X, scan.p11, rcond=None)
    coef_s, *_ = np.linalg.lstsq(X, scan.single_flip, rcond=None)
    p_dd = _trig_eval(coef11, 0.0)
    p_uu = _trig_eval(coef11, math.pi)
    s = _trig_eval(coef_s, 0.0)
    c2 = float(coef11[3])
    coherence = 0.5 * (p_dd + p_uu - s - 8.0 * c2)
    F = 0.5 * s + coherence
    if not -0.05 <= F <= 1.05:
        raise FitError(f"fidelity estimate {F:.3f} outside [-0.05, 1.05]; data inconsistent with the model", {"F": F})
    F_prime = None
    if pair_survival is not None:
        F_prime = renormalized_fidelity(F, 1.0 - pair_survival)
    coefficients = {
        "A": float(coef11[0]),
        "B": float(coef11[1]),
        "C2": c2,
        "B_sin": float(coef11[2]),
        "C2_sin": float(coef11[4]),
    }
    return FidelityReport(
        F=float(F),
        pair_survival=pair_survival,
        F_prime=F_prime,
        coefficients=coefficients,
        p_down_down=p_dd,
        p_up_up=p_uu,
        single_flip=s,
        coherence=coherence,
    )


# ---------------------------------------------------------------------------
# loss accounting
# ---------------------------------------------------------------------------


def pair_loss_probability(p: float) -> float:
    """Probability that at least one of two atoms is lost, each independently with ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"loss probability must lie in [0, 1], got {p}")
    return 2 * p * (1 - p) + p * p


def renormalized_fidelity(F: float, pair_loss: float) -> float:
    """Fidelity conditioned on both atoms staying in the logical states."""
    if not pair_loss < 1.0:
        raise ValueError("no surviving pairs: pair_loss must be < 1")
    if pair_loss < 0.0:
        raise ValueError(f"pair_loss must be >= 0, got {pair_loss}")
    return F / (1.0 - pair_loss)


def apply_independent_loss(probs: OutcomeProbs, p: float) -> OutcomeProbs:
    """Expected outcomes after each atom independently reads 0 with probability ``p``."""
    keep = 1.0 - p
    p11 = probs.p11 * keep * keep
    p10 = probs.p10 * keep + probs.p11 * keep * p
    p01 = probs.p01 * keep + probs.p11 * p * keep
    return OutcomeProbs(p11, p10, p01, max(0.0, 1.0 - p11 - p10 - p01))
