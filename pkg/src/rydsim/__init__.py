"""Simulation of two-atom Rydberg-blockade entanglement and its push-out readout."""

from rydsim.analysis import (
    FidelityReport,
    FitError,
    ParityScan,
    RabiFit,
    extract_fidelity,
    fit_rabi,
    frequency_ratio,
    pair_loss_probability,
    renormalized_fidelity,
)
from rydsim.dynamics import EnsembleResult, Trajectory, evolve_lindblad, evolve_unitary, run_ensemble
from rydsim.measurement import OutcomeCounts, OutcomeProbs, pushout_probabilities, recapture_probabilities, sample_counts
from rydsim.physics import (
    NoiseSpec,
    PulseKind,
    PulseSpec,
    SequenceSpec,
    ShotParams,
    build_collapse_operators,
    build_entangle_sequence,
    build_hamiltonian,
    sample_shot_params,
)
from rydsim.qstate import (
    AtomLevel,
    DensityMatrix,
    PureState,
    entangled_pair_state,
    fidelity,
    outer_product,
    pair_basis_state,
)

__version__ = "0.1.0"
