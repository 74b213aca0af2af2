"""Drive/probe measurement protocol.

A measurement is a probe pulse followed by a drive pulse: the probe reads
out the atom (ON for state 0, OFF for state 1) and projects it, then the
drive pulse prepares the next superposition. The atom is prepared in state
0, so the first probe of every trajectory reads out the prepared state.

Random numbers come from PCG64 generators seeded through
``numpy.random.SeedSequence(seed, spawn_key=(index,))``; each trajectory,
scan point or sample batch has its own substream, which makes results
independent of how the work is scheduled.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .dynamics import bloch_propagate, excitation_probability, survival_model
from .exceptions import ZenoValidationError
from .models import (
    BlochState,
    DriveConfig,
    Mode,
    Outcome,
    ScalingPoint,
    SpectrumPoint,
    Trajectory,
)

logger = logging.getLogger(__name__)

DEFAULT_MEASUREMENTS = 500

_GROUND = BlochState.ground()
_EXCITED = BlochState.excited()


def substream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent PCG64 generator for work item ``index`` under ``seed``."""
    if not 0 <= seed < 2**64:
        raise ZenoValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@lru_cache(maxsize=4096)
def _evolve(state: BlochState, cfg: DriveConfig, duration: float) -> BlochState:
    return bloch_propagate(state, cfg, duration)


def _check_count(name: str, value: int, minimum: int = 1) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ZenoValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")


def _check_fidelities(f0: float, f1: float) -> None:
    for name, value in (("f0", f0), ("f1", f1)):
        if not (0.0 < value <= 1.0):
            raise ZenoValidationError(f"{name} must lie in (0, 1], got {value}")


def measure_once(state: BlochState, rng: np.random.Generator) -> Tuple[Outcome, BlochState]:
    """Projective probe of ``state``.

    Returns ON and the ground state with probability ``(1 - w) / 2``,
    otherwise OFF and the excited state. The probe is instantaneous.
    """
    if rng.random() < _p_on(state):
        return Outcome.ON, _GROUND
    return Outcome.OFF, _EXCITED


def _p_on(state: BlochState) -> float:
    return 0.5 * (1.0 - state.w)


def _measure_batch(state: BlochState, rng: np.random.Generator, size: int) -> np.ndarray:
    """Measure ``size`` atoms that share ``state``; True where the result is ON."""
    return rng.random(size) < _p_on(state)


def _count_flipped(piece: DriveConfig, n: int, samples: int, rng: np.random.Generator) -> int:
    """Drive ``samples`` atoms through ``n`` pieces, measuring after each one.

    Returns how many atoms were found OFF at least once. Atoms found ON are
    projected onto state 0 and driven again.
    """
    alive = samples
    state = _GROUND
    for _ in range(n):
        if alive == 0:
            break
        driven = _evolve(state, piece, piece.tau)
        alive = int(np.count_nonzero(_measure_batch(driven, rng, alive)))
    return samples - alive


def _markov_codes(p0: float, p1: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` outcomes of the two-state stay-probability chain.

    The record is built from alternating runs, ON first; a run of symbol i
    has length ``k`` with probability ``p_i**(k - 1) * (1 - p_i)``.
    """
    mean_pair = min(n, 1.0 / (1.0 - p0) if p0 < 1.0 else n)
    mean_pair += min(n, 1.0 / (1.0 - p1) if p1 < 1.0 else n)
    chunk = int(n / mean_pair * 1.05) + 16

    blocks: List[np.ndarray] = []
    covered = 0
    while covered < n:
        pair = np.empty(2 * chunk, dtype=np.int64)
        pair[0::2] = rng.geometric(1.0 - p0, chunk) if p0 < 1.0 else n
        pair[1::2] = rng.geometric(1.0 - p1, chunk) if p1 < 1.0 else n
        np.minimum(pair, n, out=pair)
        blocks.append(pair)
        covered += int(pair.sum())

    lengths = np.concatenate(blocks)
    used = int(np.searchsorted(np.cumsum(lengths), n)) + 1
    lengths = lengths[:used]
    symbols = np.resize(np.array([1, 0], dtype=np.uint8), used)
    return np.repeat(symbols, lengths)[:n]


def _quantum_codes(
    cfg: DriveConfig,
    f0: float,
    f1: float,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    codes = np.empty(n, dtype=np.uint8)
    fidelity = {Outcome.ON: f0, Outcome.OFF: f1}
    after_pulse: Dict[Outcome, BlochState] = {}
    state = _GROUND
    for k in range(n):
        outcome, state = measure_once(state, rng)
        recorded = outcome
        f = fidelity[outcome]
        if f < 1.0 and rng.random() >= f:
            recorded = Outcome.OFF if outcome is Outcome.ON else Outcome.ON
        codes[k] = recorded.code
        if outcome not in after_pulse:
            after_pulse[outcome] = _evolve(state, cfg, cfg.tau)
        state = after_pulse[outcome]
    return codes


def generate_trajectory(
    cfg: DriveConfig,
    f0: float = 1.0,
    f1: float = 1.0,
    n: int = DEFAULT_MEASUREMENTS,
    seed: int = 0,
    mode: Mode = Mode.MARKOV,
    index: int = 0,
) -> Trajectory:
    """Generate one record of ``n`` probe outcomes.

    MARKOV mode draws from the two-state chain with the stay probabilities
    of :func:`zeno.dynamics.survival_model`; it covers resonant drive only.
    FULL_QUANTUM mode integrates every drive pulse and projects with
    :func:`measure_once`; there ``f_i < 1`` misassigns the recorded symbol
    with probability ``1 - f_i`` while the atom keeps its projected state.

    The two modes differ on the first record. MARKOV records always begin
    ON: the fidelities act only through the stay probabilities, so the
    prepared state is read out faithfully. FULL_QUANTUM applies the
    misassignment to every measurement, the first included, so with
    ``f0 < 1`` a record can begin OFF.

    Args:
        cfg: Drive parameters
        f0: Fidelity factor of state 0
        f1: Fidelity factor of state 1
        n: Number of measurements
        seed: Master seed
        mode: Generation mode
        index: Trajectory index within a batch, selects the substream

    Raises:
        ZenoValidationError: On ``n < 1``, fidelities outside (0, 1], or a
            detuned drive in MARKOV mode.
    """
    _check_count("n", n)
    _check_count("index", index, minimum=0)
    _check_fidelities(f0, f1)
    rng = substream(seed, index)

    if mode is Mode.MARKOV:
        if not cfg.is_resonant:
            raise ZenoValidationError(
                "MARKOV mode models resonant drive only; use FULL_QUANTUM for detuned drive",
                details={"delta": cfg.delta},
            )
        model = survival_model(cfg, f0, f1)
        codes = _markov_codes(model.p0, model.p1, n, rng)
    else:
        codes = _quantum_codes(cfg, f0, f1, n, rng)

    logger.debug("Generated trajectory seed=%d index=%d mode=%s n=%d", seed, index, mode.value, n)
    return Trajectory(
        outcomes=codes,
        seed=seed,
        index=index,
        config=cfg,
        f0=f0,
        f1=f1,
        mode=mode,
    )


def generate_batch(
    cfg: DriveConfig,
    f0: float = 1.0,
    f1: float = 1.0,
    n: int = DEFAULT_MEASUREMENTS,
    n_trajectories: int = 1,
    seed: int = 0,
    mode: Mode = Mode.MARKOV,
    workers: int = 1,
) -> List[Trajectory]:
    """Generate ``n_trajectories`` records, indexed 0..n_trajectories-1.

    The result does not depend on ``workers``.
    """
    _check_count("n_trajectories", n_trajectories)
    _check_count("workers", workers)

    def _one(index: int) -> Trajectory:
        return generate_trajectory(cfg, f0, f1, n, seed, mode, index)

    if workers == 1:
        return [_one(i) for i in range(n_trajectories)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, range(n_trajectories)))


def evolve_unobserved(cfg: DriveConfig, q: int, seed: int = 0, index: int = 0) -> Outcome:
    """Drive ``q`` phase-continuous pulses from state 0, then probe once."""
    _check_count("q", q, minimum=0)
    state = _evolve(_GROUND, cfg, q * cfg.tau)
    outcome, _ = measure_once(state, substream(seed, index))
    return outcome


def unobserved_survival(
    cfg: DriveConfig,
    q: int,
    samples: int,
    seed: int = 0,
) -> Tuple[float, float]:
    """Monte Carlo estimate of the unobserved survival and its standard error.

    Equivalent to the ON frequency of ``samples`` calls of
    :func:`evolve_unobserved`, drawn in one vectorised batch.
    """
    _check_count("q", q, minimum=0)
    _check_count("samples", samples)
    state = _evolve(_GROUND, cfg, q * cfg.tau)
    hits = int(np.count_nonzero(_measure_batch(state, substream(seed, q), samples)))
    estimate = hits / samples
    return estimate, math.sqrt(estimate * (1.0 - estimate) / samples)


def small_angle_transition(theta_total: float, n: int) -> float:
    """First-order transition law ``N * (theta_total / 2N)**2``."""
    return theta_total * theta_total / (4.0 * n)


def zeno_scan(
    theta_total: float,
    n_values: Sequence[int],
    samples: int,
    seed: int = 0,
) -> List[ScalingPoint]:
    """Split a pulse of area ``theta_total`` into N measured pieces.

    For each N reports the probability that at least one OFF result occurs
    among the N measurements, analytically (``1 - cos(theta_total/2N)**(2N)``)
    and by Monte Carlo: ``samples`` atoms are propagated through every piece
    by the Bloch integrator and measured projectively after each one.
    """
    if not math.isfinite(theta_total) or theta_total <= 0:
        raise ZenoValidationError(f"theta_total must be positive, got {theta_total}")
    _check_count("samples", samples)
    for n in n_values:
        _check_count("N", n)

    points = []
    for i, n in enumerate(n_values):
        piece = DriveConfig.from_theta(theta_total / n)
        analytic = 1.0 - (math.cos(0.5 * theta_total / n) ** 2) ** n
        estimate = _count_flipped(piece, n, samples, substream(seed, i)) / samples
        points.append(
            ScalingPoint(
                n=n,
                p_analytic=analytic,
                p_montecarlo=estimate,
                stderr=math.sqrt(estimate * (1.0 - estimate) / samples),
                p_small_angle=small_angle_transition(theta_total, n),
                samples=samples,
            )
        )
        logger.debug("N=%d analytic=%.6g montecarlo=%.6g", n, analytic, estimate)
    return points


def detuning_grid(delta_min: float, delta_max: float, step: float) -> np.ndarray:
    """Detuning points ``delta_min + k * step`` up to ``delta_max``."""
    if not (math.isfinite(step) and step > 0):
        raise ZenoValidationError(f"step must be positive, got {step}")
    if not (math.isfinite(delta_min) and math.isfinite(delta_max) and delta_min < delta_max):
        raise ZenoValidationError(f"need delta_min < delta_max, got {delta_min}, {delta_max}")
    count = int(math.floor((delta_max - delta_min) / step + 1e-9)) + 1
    return delta_min + step * np.arange(count)


def spectrum_scan(
    cfg_base: DriveConfig,
    delta_min: float,
    delta_max: float,
    step: float,
    samples: int,
    seed: int = 0,
) -> List[SpectrumPoint]:
    """Per-pulse excitation probability against detuning.

    Every point drives one pulse from state 0 and probes it ``samples``
    times; the analytic column is :func:`excitation_probability`.
    """
    _check_count("samples", samples)
    points = []
    for k, delta in enumerate(detuning_grid(delta_min, delta_max, step).tolist()):
        cfg = cfg_base.model_copy(update={"delta": delta})
        analytic = excitation_probability(cfg)
        p_off = _evolve(_GROUND, cfg, cfg.tau).excited_population
        hits = int(np.count_nonzero(substream(seed, k).random(samples) < p_off))
        estimate = hits / samples
        points.append(
            SpectrumPoint(
                delta=delta,
                p_analytic=analytic,
                p_montecarlo=estimate,
                stderr=math.sqrt(estimate * (1.0 - estimate) / samples),
                samples=samples,
            )
        )
    logger.info("Scanned %d detuning points", len(points))
    return points
