"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records a PASS/FAIL line; ``conftest.py`` prints them in the
terminal summary. The whole module runs with ``RYDSIM_CHECK_EVERY_STEP=1`` so
each master-equation step of every run here (including the in-process CLI
calibration) passes the Hermiticity, trace and positivity checks.
"""

import contextlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

import rydsim.dynamics as dynamics
from oracles import collective_three_level, two_level_flip
from rydsim.analysis import (
    extract_fidelity,
    fit_rabi,
    frequency_ratio,
    pair_loss_probability,
    renormalized_fidelity,
)
from rydsim.cli import main, report_table
from rydsim.config import ExperimentConfig, PhysicsConfig, load_config
from rydsim.dynamics import evolve_lindblad, run_ensemble, suggest_dt
from rydsim.experiments import default_parity_grid, parity_scan_from_state
from rydsim.physics import (
    ATOM_A,
    NO_NOISE,
    NoiseSpec,
    PulseKind,
    PulseSpec,
    SequenceSpec,
    build_entangle_sequence,
)
from rydsim.qstate import AtomLevel, bell_psi_plus, fidelity, outer_product, pair_index

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TWO_PI = 2 * math.pi
OMEGA_RAMAN = TWO_PI * 250e3
OMEGA_RYD = TWO_PI * 7e6
DELTA_E = TWO_PI * 50e6
D, U, R, DARK, ABSENT = AtomLevel

RESULTS = {}
STEP_CHECKS = {"count": 0}


@contextlib.contextmanager
def criterion(number, title):
    """Record PASS when the block finishes, FAIL (and re-raise) otherwise."""
    note = {"detail": ""}
    RESULTS[number] = (False, title, "did not finish")
    try:
        yield note
    except BaseException as exc:
        RESULTS[number] = (False, title, f"{note['detail']} {type(exc).__name__}: {exc}".strip())
        raise
    RESULTS[number] = (True, title, note["detail"])


@pytest.fixture(scope="module", autouse=True)
def strict_steps():
    """Validate every integration step and count the validations."""
    patch = pytest.MonkeyPatch()
    patch.setenv("RYDSIM_CHECK_EVERY_STEP", "1")
    original = dynamics.validate_density_matrix

    def counting(elements, **kwargs):
        STEP_CHECKS["count"] += 1
        return original(elements, **kwargs)

    patch.setattr(dynamics, "validate_density_matrix", counting)
    yield
    patch.undo()


def _pair_trajectory(shift, duration=300e-9, pair=True):
    targets = frozenset({0, 1}) if pair else frozenset({ATOM_A})
    second = U if pair else ABSENT
    seq = SequenceSpec((PulseSpec(PulseKind.RYD_EXCITE, OMEGA_RYD, duration, targets=targets),), shift, (U, second))
    return evolve_lindblad(None, seq, stride=10)


def test_criterion_1_two_level_rabi_oracle():
    with criterion(1, "two-level Raman Rabi oracle, 3 periods, pointwise 1e-6, < 1 s") as note:
        period = TWO_PI / OMEGA_RAMAN
        pulse = PulseSpec(PulseKind.RAMAN_ROTATION, OMEGA_RAMAN, 3 * period, targets={ATOM_A})
        seq = SequenceSpec((pulse,), DELTA_E, (U, ABSENT))
        start = time.perf_counter()
        traj = evolve_lindblad(None, seq, stride=1)
        elapsed = time.perf_counter() - start
        p_down = traj.populations()[:, pair_index(D, ABSENT)]
        deviation = np.abs(p_down - two_level_flip(OMEGA_RAMAN, traj.times)).max()
        note["detail"] = f"max deviation {deviation:.1e} over {len(traj)} points, {elapsed:.2f} s"
        assert deviation < 1e-6
        assert elapsed < 1.0


def test_criterion_2_collective_enhancement():
    with criterion(2, "pair/single frequency ratio sqrt(2) +- 0.01 at 50 MHz blockade, < 30 s") as note:
        start = time.perf_counter()
        single = _pair_trajectory(DELTA_E, pair=False)
        pair = _pair_trajectory(DELTA_E)
        p_single = single.populations()[:, pair_index(R, ABSENT)]
        pops = pair.populations()
        p_pair = pops[:, pair_index(R, U)] + pops[:, pair_index(U, R)]
        ratio = frequency_ratio(fit_rabi(pair.times, p_pair), fit_rabi(single.times, p_single))
        elapsed = time.perf_counter() - start
        note["detail"] = f"ratio {ratio:.4f}, {elapsed:.1f} s"
        assert abs(ratio - math.sqrt(2)) <= 0.01
        assert elapsed < 30.0


def test_criterion_3_blockade_suppression():
    with criterion(3, "max P(rr) < 0.03 over a full oscillation, 3-level oracle within 1e-6") as note:
        traj = _pair_trajectory(DELTA_E)
        p_rr = traj.populations()[:, pair_index(R, R)]
        oracle = collective_three_level(OMEGA_RYD, DELTA_E, traj.times)[:, 2]
        collective_periods = traj.times[-1] * math.sqrt(2) * OMEGA_RYD / TWO_PI
        deviation = np.abs(p_rr - oracle).max()
        note["detail"] = f"max P(rr) {p_rr.max():.4f}, oracle deviation {deviation:.1e}, {collective_periods:.1f} periods"
        assert collective_periods >= 1.0
        assert p_rr.max() < 0.03
        assert deviation < 1e-6


def test_criterion_4_noiseless_entanglement_pipeline():
    with criterion(4, "noiseless entangle -> parity scan: F = 1.000 +- 0.005, fidelity(rho, Psi+) > 0.999") as note:
        # a blockade of 100 Omega keeps the double-excitation error below the 0.999 bar
        shift = TWO_PI * 700e6
        seq = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, shift)
        rho = evolve_lindblad(None, seq).final
        overlap = fidelity(rho, bell_psi_plus())
        config = ExperimentConfig(physics=PhysicsConfig(blockade_shift_hz=700e6))
        report = extract_fidelity(parity_scan_from_state(rho, config, default_parity_grid(16)))
        note["detail"] = f"F {report.F:.6f}, <Psi+|rho|Psi+> {overlap:.6f}"
        assert abs(report.F - 1.0) <= 0.005
        assert overlap > 0.999


def test_criterion_5_paper_arithmetic():
    with criterion(5, "p = 0.22 -> pair loss 0.3916; F = 0.46 / 0.61 -> 0.754") as note:
        pair_loss = pair_loss_probability(0.22)
        f_prime = renormalized_fidelity(0.46, 1 - 0.61)
        note["detail"] = f"pair loss {pair_loss:.4f}, F' {f_prime:.3f}"
        assert f"{pair_loss:.4f}" == "0.3916"
        assert f"{pair_loss:.2f}" == "0.39"
        assert f"{f_prime:.3f}" == "0.754"
        assert f"{f_prime:.2f}" == "0.75"
        table = dict(line.split() for line in report_table(0.22, 0.46).splitlines())
        assert table["pair_loss"] == "0.3916" and table["survival"] == "0.6084"


def test_criterion_6_loss_dilution():
    with criterion(6, "Psi+ with loss 0.22, 1e5 shots: F = 0.61 +- 0.01, F' = 1.00 +- 0.02, < 60 s") as note:
        start = time.perf_counter()
        result = run_ensemble(SequenceSpec(), NoiseSpec(extra_loss_prob=0.22), 100_000, seed=6, rho0=outer_product(bell_psi_plus()))
        survival = 1.0 - result.loss_fraction()
        scan = parity_scan_from_state(result.mean_rho_final, ExperimentConfig(), default_parity_grid(16))
        report = extract_fidelity(scan, pair_survival=survival)
        elapsed = time.perf_counter() - start
        note["detail"] = f"F {report.F:.4f}, F' {report.F_prime:.4f}, survival {survival:.4f}, {elapsed:.1f} s"
        assert abs(report.F - 0.61) <= 0.01
        assert abs(report.F_prime - 1.0) <= 0.02
        assert elapsed < 60.0


def test_criterion_7_calibration(tmp_path, capsys):
    with criterion(7, "calibrate reaches (0.06, 0.31, 0.34, 0.29) within 0.03 each, committed config, < 10 min") as note:
        out = tmp_path / "calibrated.yaml"
        start = time.perf_counter()
        code = main(["calibrate", "--config", str(CONFIGS / "calibrate.yaml"), "--out", str(out)])
        elapsed = time.perf_counter() - start
        assert code == 0
        summary = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        target = load_config(CONFIGS / "calibrate.yaml").calibrate.target
        worst_sampled = max(abs(summary["verified"][k] - target[k]) for k in target)
        note["detail"] = (
            f"max deviation {summary['max_deviation']:.4f} expected, {worst_sampled:.4f} sampled, {elapsed:.0f} s"
        )
        assert summary["max_deviation"] <= 0.03
        assert worst_sampled <= 0.03
        assert elapsed < 600
        committed = load_config(CONFIGS / "calibrated_entangle.yaml")
        assert load_config(out).noise == committed.noise
        assert CONFIGS.joinpath("calibrated_entangle.yaml").read_text().startswith("# Noise parameters")


def _reference_sequences():
    raman = SequenceSpec((PulseSpec(PulseKind.RAMAN_ROTATION, OMEGA_RAMAN, 6e-6, targets={ATOM_A}),), DELTA_E, (U, ABSENT))
    blockade = SequenceSpec((PulseSpec(PulseKind.RYD_EXCITE, OMEGA_RYD, 150e-9),), DELTA_E)
    entangle = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E)
    calibrated = load_config(CONFIGS / "calibrated_entangle.yaml").noise_spec()
    return [(raman, NO_NOISE), (blockade, NO_NOISE), (entangle, NO_NOISE), (entangle, calibrated)]


def test_criterion_8_invariants(tmp_path):
    with criterion(8, "per-step invariants, dt-halving < 1e-7, byte-identical CSV") as note:
        # strict mode validates once per step
        steps = []
        seq = build_entangle_sequence(OMEGA_RYD, OMEGA_RYD, DELTA_E)
        before = STEP_CHECKS["count"]
        evolve_lindblad(None, seq, on_step=lambda t, rho: steps.append(t))
        assert STEP_CHECKS["count"] - before == len(steps) > 0

        worst = 0.0
        for seq, noise in _reference_sequences():
            dt = suggest_dt(seq, noise)
            coarse = np.diagonal(evolve_lindblad(None, seq, noise, dt=dt).final.elements).real
            fine = np.diagonal(evolve_lindblad(None, seq, noise, dt=dt / 2).final.elements).real
            worst = max(worst, np.abs(coarse - fine).max())

        text = yaml.safe_dump(
            {
                "experiment": "entangle_parity",
                "seed": 99,
                "shots": 8,
                "sample_counts": True,
                "noise": {"intensity_sigma": 0.03, "map_phase_sigma_rad": 0.2, "extra_loss_prob": 0.1},
                "scan": {"start": 0.0, "stop": TWO_PI, "points": 9},
            }
        )
        path = tmp_path / "det.yaml"
        path.write_text(text)
        outputs = []
        for name in ("a.csv", "b.csv"):
            assert main(["run", "--config", str(path), "--out", str(tmp_path / name)]) == 0
            outputs.append((tmp_path / name).read_bytes())
        note["detail"] = (
            f"{STEP_CHECKS['count']} steps validated, dt-halving max change {worst:.1e}, "
            f"CSV identical: {outputs[0] == outputs[1]}"
        )
        assert worst < 1e-7
        assert outputs[0] == outputs[1]
        # any earlier criterion that ran did so in strict mode; a step violation would have failed it
        failed = [n for n in range(1, 8) if n in RESULTS and not RESULTS[n][0]]
        assert not failed, f"criteria {failed} failed under strict step checking"
