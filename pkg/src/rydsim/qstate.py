"""Two-atom Hilbert space: five levels per atom, 25-dimensional product space.

Each atom carries the two logical hyperfine ground states, the Rydberg level,
and two bookkeeping levels for population that has left the logical subspace
(``DARK_PRESENT`` stays in the trap, ``ABSENT`` does not). Loss is therefore a
trace-preserving transfer and every density matrix keeps unit trace.

Index convention: ``pair_index(a, b) = 5 * a + b`` (atom a is the slow index).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

N_LEVELS = 5
DIM = N_LEVELS * N_LEVELS

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
NORM_TOL = 1e-10


class InvalidStateError(ValueError):
    """A state or density matrix violates its invariants."""


class AtomLevel(IntEnum):
    DOWN = 0  # |F=1, M=1>
    UP = 1  # |F=2, M=2>
    RYD = 2  # |58d3/2, F=3, M=3>
    DARK_PRESENT = 3  # non-logical F=1 leak, reads "present"
    ABSENT = 4  # lost / pushed-out leak, reads "absent"


def pair_index(a: AtomLevel, b: AtomLevel) -> int:
    return N_LEVELS * int(a) + int(b)


def pair_levels(index: int) -> tuple[AtomLevel, AtomLevel]:
    if not 0 <= index < DIM:
        raise IndexError(f"pair index {index} outside 0..{DIM - 1}")
    a, b = divmod(index, N_LEVELS)
    return AtomLevel(a), AtomLevel(b)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def _fix_global_phase(amplitudes: np.ndarray) -> np.ndarray:
    """Rotate so the first nonzero amplitude is real and positive."""
    nonzero = np.flatnonzero(np.abs(amplitudes) > 1e-14)
    if nonzero.size == 0:
        return amplitudes
    first = amplitudes[nonzero[0]]
    return amplitudes * (abs(first) / first)


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized 25-component state vector of the atom pair."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (DIM,):
            raise InvalidStateError(f"expected {DIM} amplitudes, got {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state norm {norm!r} differs from 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def from_vector(cls, vector, *, normalize: bool = True) -> "PureState":
        """Build a state from an arbitrary vector, fixing norm and global phase."""
        vec = np.asarray(vector, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise InvalidStateError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(_fix_global_phase(vec))

    def inner(self, other: "PureState") -> complex:
        """<self|other>."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def population(self, a: AtomLevel, b: AtomLevel) -> float:
        return float(abs(self.amplitudes[pair_index(a, b)]) ** 2)


def validate_density_matrix(elements: np.ndarray, *, check_positivity: bool = True) -> None:
    """Raise InvalidStateError unless ``elements`` is a valid 25x25 density matrix.

    Shared by every producer of density matrices in the package.
    """
    if elements.shape != (DIM, DIM):
        raise InvalidStateError(f"expected {DIM}x{DIM} matrix, got {elements.shape}")
    if not np.all(np.isfinite(elements)):
        raise InvalidStateError("density matrix has non-finite entries")
    herm_err = np.max(np.abs(elements - elements.conj().T))
    if herm_err > HERMITIAN_TOL:
        raise InvalidStateError(f"not Hermitian: max |rho - rho^dag| = {herm_err:.3e}")
    trace = np.trace(elements).real
    if abs(trace - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"trace {trace!r} differs from 1")
    if check_positivity:
        lowest = np.linalg.eigvalsh(0.5 * (elements + elements.conj().T))[0]
        if lowest < -POSITIVITY_TOL:
            raise InvalidStateError(f"negative eigenvalue {lowest:.3e}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive 25x25 operator."""

    elements: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.elements, dtype=complex)
        validate_density_matrix(rho)
        object.__setattr__(self, "elements", _frozen(rho))

    def populations(self) -> np.ndarray:
        """Diagonal as a (5, 5) array indexed ``[level_a, level_b]``."""
        return np.diagonal(self.elements).real.reshape(N_LEVELS, N_LEVELS).copy()

    def population(self, a: AtomLevel, b: AtomLevel) -> float:
        i = pair_index(a, b)
        return float(self.elements[i, i].real)

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def swap_atoms(self) -> "DensityMatrix":
        """The same state with the roles of atom a and atom b exchanged."""
        perm = swap_permutation()
        return DensityMatrix(self.elements[np.ix_(perm, perm)])


def swap_permutation() -> np.ndarray:
    """Index permutation implementing atom exchange on the flat basis."""
    idx = np.arange(DIM)
    a, b = np.divmod(idx, N_LEVELS)
    return N_LEVELS * b + a


def pair_basis_state(a: AtomLevel, b: AtomLevel) -> PureState:
    vec = np.zeros(DIM, dtype=complex)
    vec[pair_index(a, b)] = 1.0
    return PureState(vec)


def entangled_pair_state(level_a: AtomLevel, level_b: AtomLevel, phase: float) -> PureState:
    """(|level_a, level_b> + exp(i phase) |level_b, level_a>) / sqrt(2).

    ``entangled_pair_state(DOWN, UP, 0)`` is the Bell state Psi+.
    """
    if level_a == level_b:
        raise ValueError("entangled pair state needs two different levels")
    vec = np.zeros(DIM, dtype=complex)
    vec[pair_index(level_a, level_b)] = 1.0
    vec[pair_index(level_b, level_a)] = np.exp(1j * phase)
    return PureState.from_vector(vec / np.sqrt(2.0), normalize=False)


def outer_product(psi: PureState) -> DensityMatrix:
    amps = psi.amplitudes
    return DensityMatrix(np.outer(amps, amps.conj()))


def fidelity(rho: DensityMatrix | np.ndarray, target: PureState) -> float:
    """Overlap <target|rho|target>."""
    elements = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if not isinstance(rho, DensityMatrix):
        validate_density_matrix(elements)
    amps = target.amplitudes
    value = np.vdot(amps, elements @ amps)
    if abs(value.imag) > 1e-10:
        raise InvalidStateError(f"fidelity has imaginary part {value.imag:.3e}")
    return float(min(max(value.real, 0.0), 1.0))


def bell_psi_plus() -> PureState:
    return entangled_pair_state(AtomLevel.DOWN, AtomLevel.UP, 0.0)


def mixture(weights, states) -> DensityMatrix:
    """Convex combination of pure states or density matrices."""
    total = np.zeros((DIM, DIM), dtype=complex)
    for w, s in zip(weights, states):
        if isinstance(s, PureState):
            s = outer_product(s)
        total += w * s.elements
    return DensityMatrix(total)
