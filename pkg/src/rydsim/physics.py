"""Pulses, Hamiltonians, collapse operators and per-shot classical noise.

Drives are effective two-level couplings in the rotating frame (the 5p
intermediate level is adiabatically eliminated). All frequencies are angular,
in rad/s; ``hbar = 1`` so Hamiltonians are returned in rad/s as well.

Fast noise (photon scattering, Rydberg laser phase noise) becomes Lindblad
operators. Slow noise (intensity and detuning drifts, motional phase, extra
loss) is quasi-static and drawn once per shot as :class:`ShotParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from rydsim.qstate import DIM, N_LEVELS, AtomLevel, pair_index

ATOM_A = 0
ATOM_B = 1
BOTH = frozenset({ATOM_A, ATOM_B})


class SequenceError(ValueError):
    """Invalid pulse or sequence definition."""


class PulseKind(Enum):
    RAMAN_ROTATION = "raman"
    RYD_EXCITE = "ryd_excite"
    RYD_MAP = "ryd_map"

    @property
    def levels(self) -> tuple[AtomLevel, AtomLevel]:
        """(lower, upper) levels coupled by this kind of pulse."""
        return _PULSE_LEVELS[self]

    @property
    def drives_rydberg(self) -> bool:
        return self is not PulseKind.RAMAN_ROTATION


_PULSE_LEVELS = {
    PulseKind.RAMAN_ROTATION: (AtomLevel.DOWN, AtomLevel.UP),
    PulseKind.RYD_EXCITE: (AtomLevel.UP, AtomLevel.RYD),
    PulseKind.RYD_MAP: (AtomLevel.DOWN, AtomLevel.RYD),
}


@dataclass(frozen=True)
class PulseSpec:
    """A square pulse on one or both atoms.

    ``phase_rad`` is the laser phase seen by the targeted atoms (it carries any
    k.r contribution; use one pulse per atom when the atoms need different
    phases).
    """

    kind: PulseKind
    rabi_rad_per_s: float
    duration_s: float
    start_s: float = 0.0
    detuning_rad_per_s: float = 0.0
    phase_rad: float = 0.0
    targets: frozenset = BOTH

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(self.targets))
        if not self.duration_s > 0:
            raise SequenceError(f"pulse duration must be > 0, got {self.duration_s}")
        if not self.rabi_rad_per_s >= 0:
            raise SequenceError(f"Rabi frequency must be >= 0, got {self.rabi_rad_per_s}")
        if self.start_s < 0:
            raise SequenceError(f"pulse start must be >= 0, got {self.start_s}")
        if not self.targets or not self.targets <= BOTH:
            raise SequenceError(f"targets must be a nonempty subset of {{0, 1}}, got {set(self.targets)}")
        for value in (self.rabi_rad_per_s, self.duration_s, self.detuning_rad_per_s, self.phase_rad):
            if not math.isfinite(value):
                raise SequenceError("pulse parameters must be finite")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    def active(self, t: float) -> bool:
        return self.start_s <= t < self.end_s


@dataclass(frozen=True)
class SequenceSpec:
    pulses: tuple[PulseSpec, ...] = ()
    blockade_shift_rad_per_s: float = 0.0
    initial_state: tuple[AtomLevel, AtomLevel] = (AtomLevel.UP, AtomLevel.UP)

    def __post_init__(self):
        pulses = tuple(sorted(self.pulses, key=lambda p: p.start_s))
        object.__setattr__(self, "pulses", pulses)
        object.__setattr__(self, "initial_state", tuple(AtomLevel(x) for x in self.initial_state))
        if not math.isfinite(self.blockade_shift_rad_per_s):
            raise SequenceError("blockade shift must be finite")
        for atom in BOTH:
            mine = [p for p in pulses if atom in p.targets]
            for first, second in zip(mine, mine[1:]):
                if second.start_s < first.end_s:
                    raise SequenceError(
                        f"pulses overlap on atom {atom}: {first.kind.name} ends at {first.end_s:.3e} s, "
                        f"{second.kind.name} starts at {second.start_s:.3e} s"
                    )

    @property
    def duration_s(self) -> float:
        return max((p.end_s for p in self.pulses), default=0.0)

    @property
    def shortest_pulse_s(self) -> float:
        return min((p.duration_s for p in self.pulses), default=math.inf)

    def active_pulses(self, t: float) -> list[PulseSpec]:
        return [p for p in self.pulses if p.active(t)]

    def breakpoints(self) -> list[float]:
        """Sorted times at which the set of active pulses changes, from 0 to the end."""
        times = {0.0, self.duration_s}
        for p in self.pulses:
            times.update((p.start_s, p.end_s))
        return sorted(times)

    def initial_index(self) -> int:
        return pair_index(*self.initial_state)


@dataclass(frozen=True)
class NoiseSpec:
    scatter_rate_rad_per_s: float = 0.0
    # destinations of a scattering event: (UP, DOWN, DARK_PRESENT)
    scatter_branching: tuple[float, float, float] = (1.0, 0.0, 0.0)
    ryd_dephasing_rad_per_s: float = 0.0
    intensity_sigma: float = 0.0
    detuning_sigma_rad_per_s: float = 0.0
    map_phase_sigma_rad: float = 0.0
    extra_loss_prob: float = 0.0
    ryd_decay_rad_per_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "scatter_branching", tuple(float(x) for x in self.scatter_branching))
        nonneg = {
            "scatter_rate_rad_per_s": self.scatter_rate_rad_per_s,
            "ryd_dephasing_rad_per_s": self.ryd_dephasing_rad_per_s,
            "intensity_sigma": self.intensity_sigma,
            "detuning_sigma_rad_per_s": self.detuning_sigma_rad_per_s,
            "map_phase_sigma_rad": self.map_phase_sigma_rad,
            "ryd_decay_rad_per_s": self.ryd_decay_rad_per_s,
        }
        for name, value in nonneg.items():
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not 0.0 <= self.extra_loss_prob <= 1.0:
            raise ValueError(f"extra_loss_prob must lie in [0, 1], got {self.extra_loss_prob}")
        branching = self.scatter_branching
        if len(branching) != 3 or any(not 0.0 <= b <= 1.0 for b in branching):
            raise ValueError(f"scatter_branching must be three probabilities, got {branching}")
        if abs(sum(branching) - 1.0) > 1e-12:
            raise ValueError(f"scatter_branching must sum to 1, got {sum(branching)!r}")

    @property
    def is_quasi_static_free(self) -> bool:
        """True when every shot draws identical ShotParams (up to loss draws)."""
        return self.intensity_sigma == 0 and self.detuning_sigma_rad_per_s == 0 and self.map_phase_sigma_rad == 0


NO_NOISE = NoiseSpec()


@dataclass(frozen=True)
class ShotParams:
    rabi_scale: float = 1.0
    detuning_offset_rad_per_s: float = 0.0
    map_phase_rad: float = 0.0
    loss_draws: tuple[bool, bool] = field(default=(False, False))

    def __post_init__(self):
        if not self.rabi_scale > 0:
            raise ValueError(f"rabi_scale must be > 0, got {self.rabi_scale}")
        object.__setattr__(self, "loss_draws", tuple(bool(x) for x in self.loss_draws))

    def evolution_key(self) -> tuple[float, float, float]:
        """Parameters that change the coherent evolution (loss acts afterwards)."""
        return (self.rabi_scale, self.detuning_offset_rad_per_s, self.map_phase_rad)


IDEAL_SHOT = ShotParams()

_MIN_RABI_SCALE = 0.01


def sample_shot_params(noise: NoiseSpec, rng) -> ShotParams:
    """Draw one realization of the quasi-static noise.

    ``rng`` is a ``numpy.random.Generator`` or anything accepted by
    ``numpy.random.default_rng``. The draw order is fixed, so a given seed
    always yields the same parameters.
    """
    rng = np.random.default_rng(rng)
    rabi_scale = max(rng.normal(1.0, noise.intensity_sigma), _MIN_RABI_SCALE)
    detuning = rng.normal(0.0, noise.detuning_sigma_rad_per_s)
    map_phase = rng.normal(0.0, noise.map_phase_sigma_rad)
    losses = rng.random(2) < noise.extra_loss_prob
    return ShotParams(float(rabi_scale), float(detuning), float(map_phase), (bool(losses[0]), bool(losses[1])))


def single_atom_operator(op: np.ndarray, atom: int) -> np.ndarray:
    """Embed a 5x5 single-atom operator into the 25-dimensional pair space."""
    eye = np.eye(N_LEVELS)
    return np.kron(op, eye) if atom == ATOM_A else np.kron(eye, op)


def ket_bra(dest: AtomLevel, source: AtomLevel) -> np.ndarray:
    op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    op[dest, source] = 1.0
    return op


def _pulse_phase(pulse: PulseSpec, atom: int, shot: ShotParams) -> float:
    phase = pulse.phase_rad
    if pulse.kind is PulseKind.RYD_MAP and atom == ATOM_B:
        # sign chosen so the Bell-state phase of the entangled pair shifts by +map_phase
        phase -= shot.map_phase_rad
    return phase


def build_hamiltonian(seq: SequenceSpec, t: float, shot: ShotParams = IDEAL_SHOT) -> np.ndarray:
    """Rotating-frame Hamiltonian H(t) (rad/s) of the pair at time ``t``."""
    H = np.zeros((DIM, DIM), dtype=complex)
    for pulse in seq.active_pulses(t):
        lower, upper = pulse.kind.levels
        half_rabi = 0.5 * pulse.rabi_rad_per_s * shot.rabi_scale
        detuning = pulse.detuning_rad_per_s + shot.detuning_offset_rad_per_s
        for atom in sorted(pulse.targets):
            op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
            coupling = half_rabi * np.exp(1j * _pulse_phase(pulse, atom, shot))
            op[upper, lower] = coupling
            op[lower, upper] = np.conj(coupling)
            op[upper, upper] = -detuning
            H += single_atom_operator(op, atom)
    rr = pair_index(AtomLevel.RYD, AtomLevel.RYD)
    H[rr, rr] += seq.blockade_shift_rad_per_s
    return H


_SCATTER_DESTINATIONS = (AtomLevel.UP, AtomLevel.DOWN, AtomLevel.DARK_PRESENT)


def build_collapse_operators(seq: SequenceSpec, t: float, noise: NoiseSpec) -> list[np.ndarray]:
    """Lindblad jump operators active at time ``t``, rates folded in as sqrt(rate).

    Scattering acts on the lower driven level of every atom that is being
    driven; Rydberg dephasing acts on |r> during Rydberg pulses. Radiative decay
    of |r> (treated as loss) is always on when its rate is nonzero.
    """
    ops = []
    driven: dict[int, list[PulseKind]] = {ATOM_A: [], ATOM_B: []}
    for pulse in seq.active_pulses(t):
        for atom in pulse.targets:
            driven[atom].append(pulse.kind)
    for atom in (ATOM_A, ATOM_B):
        for kind in driven[atom]:
            lower, _ = kind.levels
            if noise.scatter_rate_rad_per_s > 0:
                for dest, branch in zip(_SCATTER_DESTINATIONS, noise.scatter_branching):
                    if branch > 0:
                        rate = noise.scatter_rate_rad_per_s * branch
                        ops.append(math.sqrt(rate) * single_atom_operator(ket_bra(dest, lower), atom))
            if kind.drives_rydberg and noise.ryd_dephasing_rad_per_s > 0:
                proj = ket_bra(AtomLevel.RYD, AtomLevel.RYD)
                ops.append(math.sqrt(noise.ryd_dephasing_rad_per_s) * single_atom_operator(proj, atom))
        if noise.ryd_decay_rad_per_s > 0:
            decay = ket_bra(AtomLevel.ABSENT, AtomLevel.RYD)
            ops.append(math.sqrt(noise.ryd_decay_rad_per_s) * single_atom_operator(decay, atom))
    return ops


def build_entangle_sequence(
    omega_ryd: float,
    omega_map: float,
    delta_e: float,
    excite_phases: tuple[float, float] = (0.0, 0.0),
    map_phases: tuple[float, float] = (0.0, 0.0),
    detuning: float = 0.0,
) -> SequenceSpec:
    """Blockaded excitation pi/(sqrt(2) omega_ryd) followed by a pi/omega_map mapping pulse.

    Starting from |up, up>, the ideal output is
    ``(|down, up> + exp(i phi) |up, down>) / sqrt(2)`` with
    ``phi = (excite_b - map_b) - (excite_a - map_a)``, see :func:`bell_phase`.
    """
    if not (omega_ryd > 0 and omega_map > 0):
        raise SequenceError("Rabi frequencies of the entangling pulses must be > 0")
    t_excite = math.pi / (math.sqrt(2.0) * omega_ryd)
    t_map = math.pi / omega_map
    pulses = []
    for atom in (ATOM_A, ATOM_B):
        pulses.append(
            PulseSpec(PulseKind.RYD_EXCITE, omega_ryd, t_excite, 0.0, detuning, excite_phases[atom], frozenset({atom}))
        )
        pulses.append(
            PulseSpec(PulseKind.RYD_MAP, omega_map, t_map, t_excite, detuning, map_phases[atom], frozenset({atom}))
        )
    return SequenceSpec(tuple(pulses), delta_e, (AtomLevel.UP, AtomLevel.UP))


def bell_phase(excite_phases: tuple[float, float], map_phases: tuple[float, float]) -> float:
    """Relative phase of the entangled pair produced by :func:`build_entangle_sequence`."""
    return (excite_phases[ATOM_B] - map_phases[ATOM_B]) - (excite_phases[ATOM_A] - map_phases[ATOM_A])


def single_atom_rotation(theta: float) -> np.ndarray:
    """Ideal resonant Raman rotation on one atom (5x5), identity outside {DOWN, UP}.

    R|up> = cos(theta/2)|up> - i sin(theta/2)|down>, and symmetrically for |down>.
    """
    R = np.eye(N_LEVELS, dtype=complex)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    R[AtomLevel.UP, AtomLevel.UP] = c
    R[AtomLevel.DOWN, AtomLevel.DOWN] = c
    R[AtomLevel.DOWN, AtomLevel.UP] = -1j * s
    R[AtomLevel.UP, AtomLevel.DOWN] = -1j * s
    return R


def global_rotation(theta: float) -> np.ndarray:
    """The same ideal rotation applied to both atoms (25x25 unitary)."""
    R = single_atom_rotation(theta)
    return np.kron(R, R)
