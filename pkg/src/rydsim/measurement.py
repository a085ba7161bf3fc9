"""Detection model: which levels read "present" (1) and which read "absent" (0).

Push-out detection expels every F=2 atom before the recapture check, so
``UP``, ``RYD`` and ``ABSENT`` all read 0 and cannot be told apart. Plain
recapture (used when probing Rydberg excitation without push-out) only loses
``RYD`` and ``ABSENT``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rydsim.qstate import N_LEVELS, AtomLevel, DensityMatrix, validate_density_matrix

PUSHOUT_PRESENT = frozenset({AtomLevel.DOWN, AtomLevel.DARK_PRESENT})
RECAPTURE_PRESENT = frozenset({AtomLevel.DOWN, AtomLevel.UP, AtomLevel.DARK_PRESENT})

OUTCOME_LABELS = ("11", "10", "01", "00")


@dataclass(frozen=True)
class OutcomeProbs:
    """Joint detection probabilities; the first digit is atom a (1 = present)."""

    p11: float
    p10: float
    p01: float
    p00: float

    def __post_init__(self):
        values = []
        for name in ("p11", "p10", "p01", "p00"):
            v = float(getattr(self, name))
            if v < -1e-12 or v > 1 + 1e-12:
                raise ValueError(f"{name} = {v!r} is not a probability")
            v = min(max(v, 0.0), 1.0)
            object.__setattr__(self, name, v)
            values.append(v)
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"outcome probabilities sum to {sum(values)!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p11, self.p10, self.p01, self.p00])

    @classmethod
    def from_array(cls, values) -> "OutcomeProbs":
        return cls(*(float(v) for v in values))

    @property
    def single_flip(self) -> float:
        """P01 + P10."""
        return self.p01 + self.p10


@dataclass(frozen=True)
class OutcomeCounts:
    n11: int
    n10: int
    n01: int
    n00: int

    def __post_init__(self):
        if min(self.n11, self.n10, self.n01, self.n00) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.n11 + self.n10 + self.n01 + self.n00

    def frequencies(self) -> OutcomeProbs:
        return OutcomeProbs(*(np.array([self.n11, self.n10, self.n01, self.n00]) / self.total))


def _present_mask(present: frozenset) -> np.ndarray:
    mask = np.zeros(N_LEVELS, dtype=bool)
    mask[list(present)] = True
    return mask


def detection_probabilities(rho: DensityMatrix | np.ndarray, present=PUSHOUT_PRESENT) -> OutcomeProbs:
    """Joint outcome probabilities for an arbitrary set of "present" levels."""
    if isinstance(rho, DensityMatrix):
        elements = rho.elements
    else:
        elements = np.asarray(rho, dtype=complex)
        validate_density_matrix(elements)
    pops = np.diagonal(elements).real.reshape(N_LEVELS, N_LEVELS)
    mask = _present_mask(present)
    return OutcomeProbs(
        pops[np.ix_(mask, mask)].sum(),
        pops[np.ix_(mask, ~mask)].sum(),
        pops[np.ix_(~mask, mask)].sum(),
        pops[np.ix_(~mask, ~mask)].sum(),
    )


def pushout_probabilities(rho: DensityMatrix | np.ndarray) -> OutcomeProbs:
    """Outcomes of push-out state detection followed by a recapture check."""
    return detection_probabilities(rho, PUSHOUT_PRESENT)


def recapture_probabilities(rho: DensityMatrix | np.ndarray) -> OutcomeProbs:
    """Outcomes of a recapture check alone: only Rydberg or lost atoms read 0."""
    return detection_probabilities(rho, RECAPTURE_PRESENT)


def sample_counts(probs: OutcomeProbs, n: int, seed) -> OutcomeCounts:
    """Multinomial draw of ``n`` repetitions, deterministic in ``seed``."""
    if n < 1:
        raise ValueError(f"need at least one repetition, got n={n}")
    p = probs.as_array()
    p = p / p.sum()
    counts = np.random.default_rng(seed).multinomial(n, p)
    return OutcomeCounts(*(int(c) for c in counts))
