"""Fixed-step RK4 integration of single shots and Monte Carlo ensembles.

Sequences are piecewise constant, so integration runs segment by segment
between pulse edges; each segment is split into equal steps no longer than the
requested ``dt``. Steps therefore never straddle a discontinuity of H(t).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from rydsim.physics import (
    IDEAL_SHOT,
    NO_NOISE,
    NoiseSpec,
    SequenceSpec,
    ShotParams,
    build_collapse_operators,
    build_hamiltonian,
    sample_shot_params,
)
from rydsim.qstate import (
    DIM,
    N_LEVELS,
    TRACE_TOL,
    AtomLevel,
    DensityMatrix,
    InvalidStateError,
    PureState,
    outer_product,
    pair_basis_state,
    validate_density_matrix,
)

NORM_DRIFT_TOL = 1e-8
TRACE_DRIFT_TOL = 1e-8


class StepSizeError(ValueError):
    """Requested dt violates the accuracy preconditions of the integrator."""


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]

    def populations(self) -> np.ndarray:
        """(n_times, 25) array of basis-state populations."""
        rows = []
        for state in self.states:
            if isinstance(state, PureState):
                rows.append(np.abs(state.amplitudes) ** 2)
            else:
                rows.append(np.diagonal(state.elements).real)
        return np.array(rows)


@dataclass(frozen=True)
class ShotRecord:
    params: ShotParams
    populations: np.ndarray  # final diagonal, length 25


@dataclass(frozen=True)
class EnsembleResult:
    mean_rho_final: DensityMatrix
    records: tuple[ShotRecord, ...]
    shot_count: int

    def loss_fraction(self) -> float:
        """Fraction of shots in which at least one atom drew an extra loss."""
        return sum(any(r.params.loss_draws) for r in self.records) / self.shot_count


def _segments(seq: SequenceSpec, dt: float):
    """Yield (t_start, step, n_steps, t_mid) for each piecewise-constant segment."""
    points = seq.breakpoints()
    for t0, t1 in zip(points, points[1:]):
        length = t1 - t0
        if length <= 0:
            continue
        n = max(1, math.ceil(length / dt * (1 - 1e-12)))
        yield t0, length / n, n, 0.5 * (t0 + t1)


def _check_dt(seq: SequenceSpec, dt: float, max_rate: float = 0.0) -> None:
    if not dt > 0:
        raise StepSizeError(f"dt must be > 0, got {dt}")
    limit = seq.shortest_pulse_s / 100
    if max_rate > 0:
        limit = min(limit, 0.1 / max_rate)
    if dt > limit * (1 + 1e-9):
        raise StepSizeError(f"dt = {dt:.3e} s exceeds the allowed maximum {limit:.3e} s")


def max_collapse_rate(seq: SequenceSpec, noise: NoiseSpec) -> float:
    rate = 0.0
    points = seq.breakpoints()
    mids = [0.5 * (a + b) for a, b in zip(points, points[1:]) if b > a] or [0.0]
    for t in mids:
        for L in build_collapse_operators(seq, t, noise):
            rate = max(rate, np.linalg.norm(L, 2) ** 2)
    return rate


def suggest_dt(seq: SequenceSpec, noise: NoiseSpec = NO_NOISE, accuracy: float = 0.025) -> float:
    """Largest step allowed by the preconditions, tightened so ``|H| dt <= accuracy``.

    The blockade shift only counts when some pulse can populate |r>.
    """
    limit = seq.shortest_pulse_s / 100
    rate = max_collapse_rate(seq, noise)
    if rate > 0:
        limit = min(limit, 0.1 / rate)
    scale = 0.0
    if any(p.kind.drives_rydberg for p in seq.pulses):
        scale = abs(seq.blockade_shift_rad_per_s)
    for p in seq.pulses:
        scale = max(scale, p.rabi_rad_per_s * 2 + abs(p.detuning_rad_per_s))
    if scale > 0:
        limit = min(limit, accuracy / scale)
    if not math.isfinite(limit):
        limit = max(seq.duration_s, 1e-9)
    return limit


def evolve_unitary(
    psi0: PureState | None,
    seq: SequenceSpec,
    shot: ShotParams = IDEAL_SHOT,
    dt: float | None = None,
    stride: int | None = None,
) -> Trajectory:
    """Integrate the Schrodinger equation with RK4, renormalizing every step.

    ``stride`` sets how many steps separate recorded states (default: only the
    initial and final states are kept). The final state is always recorded.
    """
    if psi0 is None:
        psi0 = pair_basis_state(*seq.initial_state)
    dt = suggest_dt(seq) if dt is None else dt
    _check_dt(seq, dt)
    psi = psi0.amplitudes.copy()
    times, states = [0.0], [psi0]
    step_count = 0
    t = 0.0
    for t0, h, n, t_mid in _segments(seq, dt):
        A = -1j * build_hamiltonian(seq, t_mid, shot)
        for k in range(n):
            k1 = A @ psi
            k2 = A @ (psi + 0.5 * h * k1)
            k3 = A @ (psi + 0.5 * h * k2)
            k4 = A @ (psi + h * k3)
            psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            norm = np.linalg.norm(psi)
            if abs(norm - 1.0) > NORM_DRIFT_TOL:
                raise InvalidStateError(f"norm drifted to {norm!r} in one step; reduce dt")
            psi /= norm
            step_count += 1
            t = t0 + (k + 1) * h
            if stride and step_count % stride == 0:
                times.append(t)
                states.append(PureState(psi.copy()))
    if times[-1] < t:
        times.append(t)
        states.append(PureState(psi.copy()))
    return Trajectory(np.array(times), tuple(states))


def lindblad_rhs(rho: np.ndarray, A: np.ndarray, jumps=None) -> np.ndarray:
    """d(rho)/dt with ``A = -i H_eff`` and ``H_eff = H - i/2 sum L^dag L``.

    ``jumps`` is a pair of stacked arrays ``(L, L^dag)`` or None.
    """
    drho = A @ rho
    drho += drho.conj().T
    if jumps is not None:
        L, L_dag = jumps
        drho += (L @ rho @ L_dag).sum(axis=0)
    return drho


def _generator(seq, t_mid, noise, shot):
    H = build_hamiltonian(seq, t_mid, shot)
    ops = build_collapse_operators(seq, t_mid, noise)
    if not ops:
        return -1j * H, None
    L = np.array(ops)
    L_dag = L.conj().transpose(0, 2, 1)
    H_eff = H - 0.5j * (L_dag @ L).sum(axis=0)
    return -1j * H_eff, (L, L_dag)


def _strict_from_env() -> bool:
    return os.environ.get("RYDSIM_CHECK_EVERY_STEP", "").strip().lower() in ("1", "true", "yes")


def evolve_lindblad(
    rho0: DensityMatrix | None,
    seq: SequenceSpec,
    noise: NoiseSpec = NO_NOISE,
    shot: ShotParams = IDEAL_SHOT,
    dt: float | None = None,
    stride: int | None = None,
    check_every_step: bool | None = None,
    on_step=None,
) -> Trajectory:
    """Integrate the Lindblad master equation with RK4.

    After each step rho is symmetrized, its trace drift is checked, and with
    ``check_every_step`` the full density-matrix validator (including
    positivity) runs as well. Leaving it as None defers to the
    ``RYDSIM_CHECK_EVERY_STEP`` environment variable, so whole pipelines
    (including the CLI) can be run in strict mode. ``on_step(t, rho)`` is
    called after every step when given.
    """
    if check_every_step is None:
        check_every_step = _strict_from_env()
    if rho0 is None:
        rho0 = outer_product(pair_basis_state(*seq.initial_state))
    if not isinstance(rho0, DensityMatrix):
        rho0 = DensityMatrix(rho0)
    dt = suggest_dt(seq, noise) if dt is None else dt
    _check_dt(seq, dt, max_collapse_rate(seq, noise))
    rho = rho0.elements.copy()
    times, states = [0.0], [rho0]
    step_count = 0
    t = 0.0
    for t0, h, n, t_mid in _segments(seq, dt):
        A, jumps = _generator(seq, t_mid, noise, shot)
        for k in range(n):
            k1 = lindblad_rhs(rho, A, jumps)
            k2 = lindblad_rhs(rho + 0.5 * h * k1, A, jumps)
            k3 = lindblad_rhs(rho + 0.5 * h * k2, A, jumps)
            k4 = lindblad_rhs(rho + h * k3, A, jumps)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            rho = 0.5 * (rho + rho.conj().T)
            trace = np.trace(rho).real
            if abs(trace - 1.0) > TRACE_DRIFT_TOL:
                raise InvalidStateError(f"trace drifted to {trace!r}; reduce dt")
            step_count += 1
            t = t0 + (k + 1) * h
            if check_every_step:
                validate_density_matrix(rho)
            if on_step is not None:
                on_step(t, rho)
            if stride and step_count % stride == 0:
                times.append(t)
                states.append(DensityMatrix(rho.copy()))
    if times[-1] < t:
        times.append(t)
        states.append(DensityMatrix(rho.copy()))
    return Trajectory(np.array(times), tuple(states))


def apply_loss(rho: np.ndarray, lost: tuple[bool, bool]) -> np.ndarray:
    """Move every lost atom to ABSENT, keeping the other atom's reduced state."""
    if not any(lost):
        return rho
    r = rho.reshape(N_LEVELS, N_LEVELS, N_LEVELS, N_LEVELS)
    absent = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    absent[AtomLevel.ABSENT, AtomLevel.ABSENT] = 1.0
    if lost[0] and lost[1]:
        out = np.kron(absent, absent)
    elif lost[0]:
        reduced_b = np.einsum("ajak->jk", r)
        out = np.kron(absent, reduced_b)
    else:
        reduced_a = np.einsum("ijkj->ik", r)
        out = np.kron(reduced_a, absent)
    return out.reshape(DIM, DIM)


def shot_seeds(seed: int, n_shots: int) -> list[np.random.SeedSequence]:
    """Independent per-shot seed sequences derived from one master seed."""
    return np.random.SeedSequence(seed).spawn(n_shots)


def _thread_count(workers: int | None) -> int:
    cap = os.environ.get("RYDSIM_THREADS")
    n = workers if workers is not None else 1
    if cap:
        n = min(n, max(1, int(cap))) if workers is not None else max(1, int(cap))
    return max(1, n)


def run_ensemble(
    seq: SequenceSpec,
    noise: NoiseSpec,
    n_shots: int,
    seed: int,
    rho0: DensityMatrix | None = None,
    dt: float | None = None,
    workers: int | None = None,
) -> EnsembleResult:
    """Average ``n_shots`` independent noisy shots of ``seq``.

    Each shot draws its quasi-static parameters from its own child seed,
    integrates the master equation, then applies the extra-loss draws. Shots
    sharing identical coherent parameters reuse one integration. The result
    does not depend on ``workers``.
    """
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    dt = suggest_dt(seq, noise) if dt is None else dt
    params = [sample_shot_params(noise, np.random.default_rng(s)) for s in shot_seeds(seed, n_shots)]

    keys = list(dict.fromkeys(p.evolution_key() for p in params))
    by_key = {}
    for p in params:
        by_key.setdefault(p.evolution_key(), p)

    def integrate(key):
        return evolve_lindblad(rho0, seq, noise, by_key[key], dt).final.elements

    n_threads = _thread_count(workers)
    if n_threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            finals = dict(zip(keys, pool.map(integrate, keys)))
    else:
        finals = {key: integrate(key) for key in keys}

    lossy = {}
    total = np.zeros((DIM, DIM), dtype=complex)
    records = []
    for p in params:
        cache_key = (p.evolution_key(), p.loss_draws)
        if cache_key not in lossy:
            lossy[cache_key] = apply_loss(finals[p.evolution_key()], p.loss_draws)
        rho = lossy[cache_key]
        total += rho
        records.append(ShotRecord(p, np.diagonal(rho).real.copy()))
    if len(lossy) == 1:
        mean = rho
    else:
        mean = total / n_shots
        mean = 0.5 * (mean + mean.conj().T)
    if abs(np.trace(mean).real - 1.0) > TRACE_TOL:
        raise InvalidStateError("ensemble mean lost normalization")
    return EnsembleResult(DensityMatrix(mean), tuple(records), n_shots)
