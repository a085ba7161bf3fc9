import math

import numpy as np
import pytest

from oracles import collective_three_level, two_level_flip
from rydsim.dynamics import (
    StepSizeError,
    apply_loss,
    evolve_lindblad,
    evolve_unitary,
    run_ensemble,
    shot_seeds,
    suggest_dt,
)
from rydsim.physics import (
    ATOM_A,
    NO_NOISE,
    NoiseSpec,
    PulseKind,
    PulseSpec,
    SequenceSpec,
    ShotParams,
    build_entangle_sequence,
    sample_shot_params,
)
from rydsim.qstate import (
    AtomLevel,
    DensityMatrix,
    InvalidStateError,
    bell_psi_plus,
    outer_product,
    pair_basis_state,
    pair_index,
)

TWO_PI = 2 * math.pi
OMEGA_RAMAN = TWO_PI * 250e3
OMEGA_RYD = TWO_PI * 7e6
DELTA_E = TWO_PI * 50e6
D, U, R, DARK, ABSENT = AtomLevel


def raman_single(duration):
    pulse = PulseSpec(PulseKind.RAMAN_ROTATION, OMEGA_RAMAN, duration, targets={ATOM_A})
    return SequenceSpec((pulse,), DELTA_E, (U, ABSENT))


def rydberg_pair(duration, shift=DELTA_E, omega=OMEGA_RYD):
    return SequenceSpec((PulseSpec(PulseKind.RYD_EXCITE, omega, duration),), shift, (U, U))


@pytest.mark.parametrize("duration, expected", [(2.0e-6, 1.0), (1.0e-6, 0.5)])
def test_unitary_raman_examples(duration, expected):
    final = evolve_unitary(None, raman_single(duration)).final
    assert final.population(D, ABSENT) == pytest.approx(expected, abs=1e-6)


def test_unitary_double_pi_flip_without_blockade():
    seq = rydberg_pair(math.pi / OMEGA_RYD, shift=0.0)
    assert evolve_unitary(None, seq).final.population(R, R) == pytest.approx(1.0, abs=1e-6)


def test_unitary_rejects_large_step():
    seq = raman_single(1e-6)
    with pytest.raises(StepSizeError):
        evolve_unitary(None, seq, dt=2e-8)
    with pytest.raises(StepSizeError):
        evolve_unitary(None, seq, dt=0.0)


def test_lindblad_rejects_large_step_and_bad_state():
    seq = raman_single(1e-6)
    with pytest.raises(StepSizeError):
        evolve_lindblad(None, seq, dt=2e-8)
    noise = NoiseSpec(scatter_rate_rad_per_s=1e8)
    with pytest.raises(StepSizeError):
        evolve_lindblad(None, seq, noise, dt=5e-9)
    bad = np.eye(25, dtype=complex)
    with pytest.raises(InvalidStateError):
        evolve_lindblad(bad, seq)


def test_lindblad_without_noise_matches_unitary():
    seq = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E)
    psi = evolve_unitary(None, seq).final
    rho = evolve_lindblad(None, seq).final
    diff = rho.elements - np.outer(psi.amplitudes, psi.amplitudes.conj())
    assert np.linalg.norm(diff, 2) < 1e-8


def test_scattering_preserves_trace_and_relaxes():
    gamma = 0.5 * OMEGA_RAMAN
    seq = raman_single(60e-6)
    noise = NoiseSpec(scatter_rate_rad_per_s=gamma, scatter_branching=(0.5, 0.0, 0.5))
    traces = []
    traj = evolve_lindblad(None, seq, noise, check_every_step=True, on_step=lambda t, r: traces.append(np.trace(r).real))
    assert max(abs(t - 1.0) for t in traces) < 1e-8
    # everything leaks out of the driven pair into the dark present level
    assert traj.final.population(DARK, ABSENT) > 0.99


def test_blockaded_excitation_against_three_level_oracle():
    seq = rydberg_pair(300e-9)
    traj = evolve_lindblad(None, seq, stride=20, check_every_step=True)
    p_rr = traj.populations()[:, pair_index(R, R)]
    oracle = collective_three_level(OMEGA_RYD, DELTA_E, traj.times)
    assert p_rr.max() < 0.03
    assert np.abs(p_rr - oracle[:, 2]).max() < 1e-6
    single = traj.populations()[:, [pair_index(R, U), pair_index(U, R)]].sum(axis=1)
    assert np.abs(single - oracle[:, 1]).max() < 1e-6


def test_trajectory_times_increase_and_states_valid():
    traj = evolve_lindblad(None, build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E), stride=10)
    assert np.all(np.diff(traj.times) > 0)
    assert all(isinstance(s, DensityMatrix) for s in traj.states)


def test_norm_and_trace_conserved_over_full_sequences():
    seq = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E)
    psi = evolve_unitary(None, seq).final
    assert np.linalg.norm(psi.amplitudes) == pytest.approx(1.0, abs=1e-8)
    noise = NoiseSpec(scatter_rate_rad_per_s=TWO_PI * 1e6, ryd_dephasing_rad_per_s=TWO_PI * 1e5, ryd_decay_rad_per_s=1e6)
    rho = evolve_lindblad(None, seq, noise).final
    assert np.trace(rho.elements).real == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize(
    "seq, noise",
    [
        (raman_single(3e-6), NO_NOISE),
        (rydberg_pair(150e-9), NO_NOISE),
        (build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E), NoiseSpec(scatter_rate_rad_per_s=TWO_PI * 1e6)),
    ],
    ids=["raman", "blockade", "entangle-noisy"],
)
def test_halving_dt_converges(seq, noise):
    dt = suggest_dt(seq, noise)
    coarse = np.diagonal(evolve_lindblad(None, seq, noise, dt=dt).final.elements).real
    fine = np.diagonal(evolve_lindblad(None, seq, noise, dt=dt / 2).final.elements).real
    assert np.abs(coarse - fine).max() < 1e-7


def test_exchange_symmetry_with_symmetric_noise():
    seq = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E)
    noise = NoiseSpec(
        scatter_rate_rad_per_s=TWO_PI * 1e6,
        scatter_branching=(0.3, 0.3, 0.4),
        ryd_dephasing_rad_per_s=TWO_PI * 2e5,
    )
    rho = evolve_lindblad(None, seq, noise).final
    assert np.abs(rho.swap_atoms().elements - rho.elements).max() < 1e-9


def test_blockade_limit_collective_oscillation():
    omega = OMEGA_RYD
    seq = rydberg_pair(2 * math.pi / (math.sqrt(2) * omega), shift=1e3 * omega)
    traj = evolve_unitary(None, seq, stride=500)
    pops = traj.populations()
    single = pops[:, pair_index(R, U)] + pops[:, pair_index(U, R)]
    expected = two_level_flip(math.sqrt(2) * omega, traj.times)
    assert np.abs(single - expected).max() < 1e-4


def test_ensemble_without_noise_equals_single_shot():
    seq = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E)
    single = evolve_lindblad(None, seq, dt=suggest_dt(seq)).final.elements
    result = run_ensemble(seq, NO_NOISE, 7, seed=3)
    np.testing.assert_array_equal(result.mean_rho_final.elements, single)
    assert result.shot_count == 7


def _jittered():
    seq = raman_single(2e-6)
    noise = NoiseSpec(intensity_sigma=0.1, detuning_sigma_rad_per_s=TWO_PI * 20e3, extra_loss_prob=0.2)
    return seq, noise


def test_ensemble_mean_is_average_of_shots():
    seq, noise = _jittered()
    result = run_ensemble(seq, noise, 6, seed=11)
    finals = []
    dt = suggest_dt(seq, noise)
    for child in shot_seeds(11, 6):
        params = sample_shot_params(noise, np.random.default_rng(child))
        rho = evolve_lindblad(None, seq, noise, params, dt).final.elements
        finals.append(apply_loss(rho, params.loss_draws))
    assert np.abs(result.mean_rho_final.elements - np.mean(finals, axis=0)).max() < 1e-12
    pops = np.mean([r.populations for r in result.records], axis=0)
    assert np.abs(pops - np.diagonal(result.mean_rho_final.elements).real).max() < 1e-12


def test_ensemble_is_deterministic_and_thread_independent(monkeypatch):
    seq, noise = _jittered()
    a = run_ensemble(seq, noise, 5, seed=42)
    b = run_ensemble(seq, noise, 5, seed=42, workers=3)
    monkeypatch.setenv("RYDSIM_THREADS", "2")
    c = run_ensemble(seq, noise, 5, seed=42)
    for other in (b, c):
        assert a.mean_rho_final.elements.tobytes() == other.mean_rho_final.elements.tobytes()
        assert [r.params for r in a.records] == [r.params for r in other.records]
    d = run_ensemble(seq, noise, 5, seed=43)
    assert a.mean_rho_final.elements.tobytes() != d.mean_rho_final.elements.tobytes()


def test_ensemble_loss_fraction():
    n = 10_000
    p = 0.22
    result = run_ensemble(SequenceSpec(), NoiseSpec(extra_loss_prob=p), n, seed=7, rho0=outer_product(bell_psi_plus()))
    expected = 2 * p * (1 - p) + p * p
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(result.loss_fraction() - expected) < 3 * sigma


def test_ensemble_rejects_zero_shots():
    with pytest.raises(ValueError):
        run_ensemble(SequenceSpec(), NO_NOISE, 0, seed=0)


def test_apply_loss_keeps_partner_state():
    rho = outer_product(pair_basis_state(D, R)).elements
    out = apply_loss(rho, (True, False))
    assert out[pair_index(ABSENT, R), pair_index(ABSENT, R)] == 1
    bell = outer_product(bell_psi_plus()).elements
    out = apply_loss(bell, (False, True))
    assert out[pair_index(D, ABSENT), pair_index(D, ABSENT)] == pytest.approx(0.5)
    assert out[pair_index(U, ABSENT), pair_index(U, ABSENT)] == pytest.approx(0.5)
    # reduced state of one half of a Bell pair is fully mixed
    assert abs(out[pair_index(D, ABSENT), pair_index(U, ABSENT)]) < 1e-15
    both = apply_loss(bell, (True, True))
    assert both[pair_index(ABSENT, ABSENT), pair_index(ABSENT, ABSENT)] == 1


def test_rydberg_decay_moves_population_to_absent():
    seq = SequenceSpec((PulseSpec(PulseKind.RYD_EXCITE, 1e3, 1e-6, start_s=0.0),), 0.0, (R, D))
    rate = 1e6
    rho = evolve_lindblad(None, seq, NoiseSpec(ryd_decay_rad_per_s=rate)).final
    assert rho.population(ABSENT, D) == pytest.approx(1 - math.exp(-rate * 1e-6), abs=1e-3)


def test_shot_params_change_evolution():
    seq = raman_single(2e-6)
    slow = evolve_unitary(None, seq, ShotParams(rabi_scale=0.5)).final
    assert slow.population(D, ABSENT) == pytest.approx(0.5, abs=1e-6)
