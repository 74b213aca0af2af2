"""Run-length statistics of measurement trajectories and model fitting."""

import logging
import math
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from statsmodels.tools.numdiff import approx_fprime

from .dynamics import stay_probabilities, survival_model
from .exceptions import ZenoEstimatorError, ZenoFitError, ZenoValidationError
from .models import (
    PARAMETER_NAMES,
    EnvelopeForm,
    FitResult,
    MeasurementRecord,
    Outcome,
    PartialDriveConfig,
    RunHistogram,
    Trajectory,
    ZenoBaseModel,
)

logger = logging.getLogger(__name__)

# Bins whose expected count falls below this are merged into a tail bin.
MIN_EXPECTED = 5.0
# Bins observed fewer times than this are left out of the log-survival regression.
MIN_OBSERVED = 5
MAX_ITERATIONS = 500
# Relative step of the forward differences behind the Fisher information.
DIFF_STEP = 1e-6

_THETA_BOUNDS = (1e-6, math.pi)
_FIDELITY_BOUNDS = (1e-6, 1.0)
_P_FLOOR = 1e-15


class LogSurvivalFit(ZenoBaseModel):
    """Least-squares line through ``log V_obs(q)`` against ``q``."""
    slope: float
    intercept: float
    residual_rms: float
    n_points: int

    @property
    def stay_probability(self) -> float:
        return math.exp(self.slope)


def _runs(codes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Symbols and lengths of the maximal runs in ``codes``."""
    starts = np.concatenate(([0], np.flatnonzero(codes[1:] != codes[:-1]) + 1))
    lengths = np.diff(np.concatenate((starts, [codes.size])))
    return codes[starts], lengths


def _count_lengths(lengths: np.ndarray) -> Dict[int, int]:
    values, counts = np.unique(lengths, return_counts=True)
    return {int(q): int(c) for q, c in zip(values.tolist(), counts.tolist())}


def run_lengths(trajectory: Trajectory) -> RunHistogram:
    """Histogram of the maximal runs of a trajectory, boundary runs included.

    Raises:
        ZenoValidationError: If the trajectory is empty.
    """
    codes = trajectory.outcomes
    if codes.size == 0:
        raise ZenoValidationError("cannot take run lengths of an empty trajectory")
    symbols, lengths = _runs(codes)
    return RunHistogram(
        counts_on=_count_lengths(lengths[symbols == 1]),
        counts_off=_count_lengths(lengths[symbols == 0]),
        trajectory_length=int(codes.size),
        n_trajectories=1,
    )


def merge_histograms(histograms: Iterable[RunHistogram]) -> RunHistogram:
    """Sum run counts over histograms of equal trajectory length."""
    merged: Optional[RunHistogram] = None
    for hist in histograms:
        merged = hist if merged is None else merged.merge(hist)
    if merged is None:
        raise ZenoValidationError("no histograms to merge")
    return merged


def accumulate_runs(trajectories: Iterable[Trajectory]) -> RunHistogram:
    return merge_histograms(run_lengths(t) for t in trajectories)


def transition_counts(trajectory: Trajectory) -> Tuple[int, int]:
    """Numbers of ON->OFF (excitation) and OFF->ON (de-excitation) pairs."""
    codes = trajectory.outcomes
    if codes.size == 0:
        raise ZenoValidationError("cannot count transitions of an empty trajectory")
    prev, nxt = codes[:-1], codes[1:]
    up = int(np.count_nonzero((prev == 1) & (nxt == 0)))
    down = int(np.count_nonzero((prev == 0) & (nxt == 1)))
    return up, down


def measurement_record(trajectory: Trajectory) -> MeasurementRecord:
    up, down = transition_counts(trajectory)
    return MeasurementRecord(trajectory=trajectory, transitions_up=up, transitions_down=down)


def v_obs(hist: RunHistogram, symbol: Outcome, q: int) -> float:
    """Observed survival ``U(q) / U(1)``, the estimate of ``V(q - 1)``.

    Raises:
        ZenoValidationError: If ``q < 1``.
        ZenoEstimatorError: If no runs of length 1 were observed.
    """
    if q < 1:
        raise ZenoValidationError(f"q must be >= 1, got {q}")
    u1 = hist.count(symbol, 1)
    if u1 == 0:
        raise ZenoEstimatorError(
            f"V_obs undefined: no {symbol.value.upper()} runs of length 1",
            details={"symbol": symbol.value},
        )
    return hist.count(symbol, q) / u1


def v_obs_stderr(hist: RunHistogram, symbol: Outcome, q: int) -> float:
    """Delta-method standard error of :func:`v_obs`, treating U(q) and U(1)
    as independent Poisson counts."""
    value = v_obs(hist, symbol, q)
    if q == 1:
        return 0.0
    uq = hist.count(symbol, q)
    if uq == 0:
        return 1.0 / hist.count(symbol, 1)
    return value * math.sqrt(1.0 / uq + 1.0 / hist.count(symbol, 1))


def log_survival_regression(
    hist: RunHistogram,
    symbol: Outcome,
    min_count: int = MIN_OBSERVED,
) -> LogSurvivalFit:
    """Fit ``log V_obs(q) = intercept + slope * q`` over bins with U(q) >= min_count.

    For a measured system the points lie on a line with slope ``log p``.
    """
    qs = [q for q, c in sorted(hist.counts(symbol).items()) if c >= min_count]
    if len(qs) < 2:
        raise ZenoEstimatorError(
            f"need at least two {symbol.value.upper()} bins with U(q) >= {min_count}",
            details={"bins": len(qs)},
        )
    x = np.array(qs, dtype=float)
    y = np.log([v_obs(hist, symbol, q) for q in qs])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (intercept + slope * x)
    return LogSurvivalFit(
        slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        n_points=len(qs),
    )


def geometric_stay_estimate(runs: Union[Sequence[int], np.ndarray]) -> float:
    """Maximum-likelihood stay probability of geometric run lengths.

    ``(sum(q_j) - m) / sum(q_j)`` over the ``m`` observed runs.
    """
    lengths = np.asarray(runs, dtype=float)
    total = float(lengths.sum())
    if lengths.size == 0 or total <= 0:
        raise ZenoValidationError("need at least one run of positive length")
    return (total - lengths.size) / total


def _expand_counts(counts: Dict[int, int]) -> np.ndarray:
    """Run lengths listed once per observed run."""
    return np.repeat(
        np.fromiter(counts.keys(), dtype=np.int64, count=len(counts)),
        np.fromiter(counts.values(), dtype=np.int64, count=len(counts)),
    )


def _marginal_terms(p0: float, p1: float, initial_on: float) -> Tuple[float, float, float]:
    """Stationary ON weight ``s``, eigenvalue ``lam`` and ``gap = 1 - lam`` of the chain.

    The ON marginal at record t (1-based) is ``s + (initial_on - s) * lam**(t-1)``.
    """
    gap = (1.0 - p0) + (1.0 - p1)
    lam = 1.0 - gap
    if gap == 0.0:
        return initial_on, lam, gap
    return (1.0 - p1) / gap, lam, gap


def _geometric_sum(lam: float, gap: float, n: np.ndarray) -> np.ndarray:
    """``sum(lam**k for k in range(n))`` elementwise."""
    if gap == 0.0:
        return n.astype(float)
    if gap < 0.5:
        return -np.expm1(n * math.log1p(-gap)) / gap
    return (1.0 - np.power(lam, n)) / gap


def _expected_run_arrays(
    p0: float,
    p1: float,
    length: int,
    initial_on: float,
    q_max: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Expected numbers of ON and OFF runs of length 1..q_max in one record."""
    s_on, lam, gap = _marginal_terms(p0, p1, initial_on)
    start = {1: initial_on, 0: 1.0 - initial_on}
    stationary = {1: s_on, 0: 1.0 - s_on}
    stay = {1: p0, 0: p1}

    q = np.arange(1, q_max + 1)
    result = []
    for sym in (1, 0):
        other = 1 - sym
        p_i, p_j = stay[sym], stay[other]
        lead = np.power(p_i, q - 1)

        # Marginal and cumulative marginal of the other symbol.
        t_right = np.maximum(length - q, 1)
        drift = start[other] - stationary[other]
        m_right = stationary[other] + drift * np.power(lam, t_right - 1)
        n_interior = np.maximum(length - q - 1, 0)
        c_interior = stationary[other] * n_interior + drift * _geometric_sum(lam, gap, n_interior)

        left = start[sym] * lead * (1.0 - p_i)
        right = m_right * (1.0 - p_j) * lead
        interior = (1.0 - p_j) * c_interior * lead * (1.0 - p_i)
        expected = np.where(q < length, left + right + interior, 0.0)
        expected = np.where(q == length, start[sym] * lead, expected)
        result.append(expected)
    return result[0], result[1]


def _expected_run_totals(
    p0: float, p1: float, length: int, initial_on: float
) -> Tuple[float, float]:
    """Expected total numbers of ON and OFF runs in one record."""
    s_on, lam, gap = _marginal_terms(p0, p1, initial_on)
    n = np.array([length - 1])
    geo = float(_geometric_sum(lam, gap, n)[0])
    cum_on = s_on * (length - 1) + (initial_on - s_on) * geo
    cum_off = (length - 1) - cum_on
    total_on = initial_on + (1.0 - p1) * cum_off
    total_off = (1.0 - initial_on) + (1.0 - p0) * cum_on
    return total_on, total_off


def expected_run_counts(
    p0: float,
    p1: float,
    length: int,
    initial_on: float = 1.0,
) -> Dict[Tuple[Outcome, int], float]:
    """Exact expected number of maximal runs of each symbol and length.

    The record has ``length`` outcomes of a two-state chain that stays ON
    with probability ``p0`` and OFF with probability ``p1``; its first
    outcome is ON with probability ``initial_on`` (1 for an atom prepared in
    state 0). Runs touching either end of the record are counted.

    Raises:
        ZenoValidationError: On ``length < 1`` or probabilities outside [0, 1].
    """
    if length < 1:
        raise ZenoValidationError(f"length must be >= 1, got {length}")
    for name, value in (("p0", p0), ("p1", p1), ("initial_on", initial_on)):
        if not (0.0 <= value <= 1.0):
            raise ZenoValidationError(f"{name} must lie in [0, 1], got {value}")

    on, off = _expected_run_arrays(p0, p1, length, initial_on, length)
    counts: Dict[Tuple[Outcome, int], float] = {}
    for q in range(1, length + 1):
        counts[(Outcome.ON, q)] = float(on[q - 1])
        counts[(Outcome.OFF, q)] = float(off[q - 1])
    return counts


def model_survival(
    p0: float,
    p1: float,
    length: int,
    q_max: int,
    initial_on: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Finite-length model counterpart of ``V_obs``: ``E(q) / E(1)`` per symbol.

    Entries are NaN where ``E(1)`` vanishes.
    """
    q_max = min(q_max, length)
    on, off = _expected_run_arrays(p0, p1, length, initial_on, q_max)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_on = on / on[0] if on[0] > 0 else np.full_like(on, np.nan)
        ratio_off = off / off[0] if off[0] > 0 else np.full_like(off, np.nan)
    return ratio_on, ratio_off


def _tail_cut(expected: np.ndarray, scale: float) -> int:
    """Number of leading bins whose expected count reaches ``MIN_EXPECTED``."""
    below = np.flatnonzero(expected * scale < MIN_EXPECTED)
    return int(below[0]) if below.size else int(expected.size)


class _RunLikelihood:
    """Multinomial negative log-likelihood of binned run counts."""

    def __init__(
        self,
        hist: RunHistogram,
        known: PartialDriveConfig,
        envelope: EnvelopeForm,
        cut_on: int,
        cut_off: int,
    ):
        self.known = known
        self.envelope = envelope
        self.length = hist.trajectory_length
        self.cut_on = max(cut_on, 1)
        self.cut_off = max(cut_off, 1)
        self.observed = np.concatenate(
            (
                self._binned(hist.counts_on, self.cut_on),
                self._binned(hist.counts_off, self.cut_off),
            )
        )

    @staticmethod
    def _binned(counts: Dict[int, int], cut: int) -> np.ndarray:
        bins = np.zeros(cut + 1)
        for q, c in counts.items():
            bins[min(q, cut + 1) - 1] += c
        return bins

    def probabilities(self, theta: float, f0: float, f1: float) -> np.ndarray:
        cfg = self.known.with_theta(theta)
        p0, p1 = stay_probabilities(cfg, f0, f1, self.envelope)
        p0 = min(max(p0, _P_FLOOR), 1.0 - _P_FLOOR)
        p1 = min(max(p1, _P_FLOOR), 1.0 - _P_FLOOR)
        q_max = max(self.cut_on, self.cut_off)
        on, off = _expected_run_arrays(p0, p1, self.length, 1.0, q_max)
        total_on, total_off = _expected_run_totals(p0, p1, self.length, 1.0)
        head_on, head_off = on[: self.cut_on], off[: self.cut_off]
        expected = np.concatenate(
            (
                head_on,
                [max(total_on - head_on.sum(), 0.0)],
                head_off,
                [max(total_off - head_off.sum(), 0.0)],
            )
        )
        return expected / expected.sum()

    def __call__(self, theta: float, f0: float, f1: float) -> float:
        probs = np.maximum(self.probabilities(theta, f0, f1), 1e-300)
        mask = self.observed > 0
        return float(-np.sum(self.observed[mask] * np.log(probs[mask])))


def _inward_steps(x: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Forward-difference steps, negated where a forward step would leave the box."""
    step = DIFF_STEP * np.maximum(1.0, np.abs(x))
    return np.where(x + step > upper, -step, step)


def _fisher_information(
    probabilities: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    upper: np.ndarray,
    n_runs: float,
) -> np.ndarray:
    """Expected information of ``n_runs`` multinomial draws at ``x``.

    ``I = n_runs * J.T @ diag(1 / pi) @ J`` with ``J`` the Jacobian of the bin
    probabilities ``pi``; bins with ``pi = 0`` carry no information.
    """
    pi = probabilities(x)
    jac = approx_fprime(x, probabilities, epsilon=_inward_steps(x, upper))
    mask = pi > 0
    return n_runs * (jac[mask].T @ (jac[mask] / pi[mask, None]))


def fit_survival(
    hist: RunHistogram,
    cfg_known: Optional[PartialDriveConfig] = None,
    f0: float = 1.0,
    f1: float = 1.0,
    fit_f0: bool = False,
    envelope: EnvelopeForm = EnvelopeForm.EXACT,
    max_iterations: int = MAX_ITERATIONS,
) -> FitResult:
    """Fit nutation angle and fidelities to observed run counts.

    Maximises the multinomial likelihood of the binned run counts against
    :func:`expected_run_counts` with ``(gamma_ph, big_gamma, tau)`` from
    ``cfg_known``. ``theta`` is confined to (0, pi].

    Run statistics pin down the two stay probabilities only, so one fidelity
    is held: by default ``(theta, f1)`` are fitted with ``f0`` fixed, and with
    ``fit_f0`` set ``(theta, f0)`` are fitted with ``f1`` fixed. The held
    parameter gets a zero row and column in the covariance.
    The covariance of the free pair is the inverse expected Fisher
    information of the binned counts at the optimum.

    Raises:
        ZenoFitError: If the data cannot identify the model, the optimiser
            exhausts its iteration budget, or the Fisher information is singular.
    """
    known = cfg_known or PartialDriveConfig()
    for symbol in (Outcome.ON, Outcome.OFF):
        distinct = len([q for q, c in hist.counts(symbol).items() if c > 0])
        if distinct < 2:
            raise ZenoFitError(
                f"model is unidentifiable: {symbol.value.upper()} runs take "
                f"{distinct} distinct length(s), at least 2 are needed",
                details={"symbol": symbol.value, "distinct_lengths": distinct},
            )

    p0_start = geometric_stay_estimate(_expand_counts(hist.counts_on))
    p1_start = geometric_stay_estimate(_expand_counts(hist.counts_off))
    # The held fidelity fixes theta through its own stay probability.
    p_held, f_held, p_free = (p1_start, f1, p0_start) if fit_f0 else (p0_start, f0, p1_start)
    flip = min(max((1.0 - p_held) / f_held, 1e-6), 1.0)
    theta_start = min(max(2.0 * math.asin(math.sqrt(flip)), _THETA_BOUNDS[0]), _THETA_BOUNDS[1])
    flip_theta = math.sin(0.5 * theta_start) ** 2
    f_start = min(max((1.0 - p_free) / flip_theta, 0.05), 1.0)
    logger.debug(
        "Warm start p0=%.6g p1=%.6g theta=%.6g f=%.6g", p0_start, p1_start, theta_start, f_start
    )

    if fit_f0:
        fitted: Tuple[str, ...] = ("theta", "f0")
        start = {"theta": theta_start, "f0": f_start, "f1": f1}
    else:
        fitted = ("theta", "f1")
        start = {"theta": theta_start, "f0": f0, "f1": f_start}
    bounds = {"theta": _THETA_BOUNDS, "f0": _FIDELITY_BOUNDS, "f1": _FIDELITY_BOUNDS}

    scale = float(hist.n_trajectories)
    p0_w, p1_w = stay_probabilities(
        known.with_theta(theta_start), start["f0"], start["f1"], envelope
    )
    on_w, off_w = _expected_run_arrays(
        min(max(p0_w, 0.0), 1.0), min(max(p1_w, 0.0), 1.0), hist.trajectory_length, 1.0,
        min(hist.trajectory_length, hist.max_run),
    )
    likelihood = _RunLikelihood(
        hist, known, envelope, _tail_cut(on_w, scale), _tail_cut(off_w, scale)
    )

    def unpack(x: np.ndarray) -> Tuple[float, float, float]:
        values = dict(start)
        values.update(zip(fitted, x.tolist()))
        return values["theta"], values["f0"], values["f1"]

    def objective(x: np.ndarray) -> float:
        return likelihood(*unpack(x))

    x0 = np.array([start[name] for name in fitted])
    result = minimize(
        objective,
        x0,
        method="L-BFGS-B",
        bounds=[bounds[name] for name in fitted],
        options={"maxiter": max_iterations},
    )
    diagnostics = {
        "iterations": int(result.nit),
        "message": str(result.message),
        "warm_start": {**start, "p0": p0_start, "p1": p1_start},
    }
    if not np.all(np.isfinite(result.x)) or not math.isfinite(result.fun):
        raise ZenoFitError("fit produced non-finite estimates", details=diagnostics)
    if not result.success and result.nit >= max_iterations:
        raise ZenoFitError(
            f"fit did not converge within {max_iterations} iterations", details=diagnostics
        )
    if not result.success:
        logger.warning("Optimizer stopped early: %s", result.message)

    def bin_probabilities(x: np.ndarray) -> np.ndarray:
        return likelihood.probabilities(*unpack(x))

    upper = np.array([bounds[name][1] for name in fitted])
    info = _fisher_information(
        bin_probabilities, result.x, upper, float(likelihood.observed.sum())
    )
    if not np.all(np.isfinite(info)):
        raise ZenoFitError("Fisher information at the optimum is not finite", details=diagnostics)
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError as exc:
        raise ZenoFitError(
            f"Fisher information at the optimum is not positive definite: {exc}",
            details=diagnostics,
        )
    cov_free = np.linalg.inv(info)

    covariance = np.zeros((3, 3))
    idx = [PARAMETER_NAMES.index(name) for name in fitted]
    covariance[np.ix_(idx, idx)] = cov_free

    theta_hat, f0_hat, f1_hat = unpack(result.x)
    model = survival_model(known.with_theta(theta_hat), f0_hat, f1_hat, envelope)
    logger.info(
        "Fit finished after %d iterations: theta=%.6g f0=%.6g f1=%.6g",
        result.nit, theta_hat, f0_hat, f1_hat,
    )
    return FitResult(
        theta_hat=theta_hat,
        f0_hat=f0_hat,
        f1_hat=f1_hat,
        p0_hat=model.p0,
        p1_hat=model.p1,
        objective=float(result.fun),
        covariance=covariance.tolist(),
        fitted=fitted,
        converged=bool(result.success),
        iterations=int(result.nit),
    )

