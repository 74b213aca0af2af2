"""Two-level atom dynamics.

Numerical propagation of the optical Bloch equations for a driven, relaxing
two-level atom, and the closed-form survival and excitation laws that the
propagator is checked against.
"""

import logging
import math
from typing import Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import ZenoError, ZenoValidationError
from .models import EPS_NUM, BlochState, DriveConfig, EnvelopeForm, SurvivalModel

logger = logging.getLogger(__name__)

# Integrator tolerances; together they keep the global error well under
# 1e-9 per radian of nutation.
RTOL = 1e-11
ATOL = 1e-13


def _bloch_rhs(
    t: float,
    y: np.ndarray,
    omega: float,
    delta: float,
    gamma: float,
    big_gamma: float,
) -> np.ndarray:
    u, v, w = y
    return np.array(
        [
            delta * v - gamma * u,
            -delta * u + omega * w - gamma * v,
            -omega * v - big_gamma * (w + 1.0),
        ]
    )


def _check_q(q: int) -> None:
    if isinstance(q, bool) or not isinstance(q, (int, np.integer)):
        raise ZenoValidationError(f"q must be an integer, got {q!r}")
    if q < 0:
        raise ZenoValidationError(f"q must be non-negative, got {q}")


def bloch_propagate(state: BlochState, cfg: DriveConfig, duration: float) -> BlochState:
    """Evolve a Bloch vector under constant drive for ``duration`` seconds.

    Integrates

        du/dt = delta*v - gamma*u
        dv/dt = -delta*u + omega*w - gamma*v
        dw/dt = -omega*v - big_gamma*(w + 1)

    with ``gamma = gamma_ph + big_gamma / 2`` using an adaptive 8th order
    Runge-Kutta scheme.

    Args:
        state: Initial Bloch vector (left unchanged)
        cfg: Drive parameters
        duration: Evolution time in seconds, non-negative

    Returns:
        The evolved Bloch vector.

    Raises:
        ZenoValidationError: If the state or duration is not finite, or the
            duration is negative.
    """
    if not all(math.isfinite(x) for x in (state.u, state.v, state.w)):
        raise ZenoValidationError("Bloch state has non-finite components")
    if not math.isfinite(duration) or duration < 0:
        raise ZenoValidationError(f"duration must be finite and non-negative, got {duration}")
    if duration == 0:
        return state

    sol = solve_ivp(
        _bloch_rhs,
        (0.0, duration),
        state.as_array(),
        method="DOP853",
        args=(cfg.omega, cfg.delta, cfg.gamma, cfg.big_gamma),
        rtol=RTOL,
        atol=ATOL,
    )
    if not sol.success:
        raise ZenoError(f"Bloch integration failed: {sol.message}", details={"status": sol.status})
    final = sol.y[:, -1]
    logger.debug("Propagated %s for %g s in %d evaluations", state, duration, sol.nfev)

    norm = float(np.linalg.norm(final))
    if norm > 1.0:
        if norm > 1.0 + EPS_NUM:
            logger.warning("Bloch norm drifted to %.12f; projecting back onto the sphere", norm)
        final = final / norm
    return BlochState.from_array(final)


def effective_theta(cfg: DriveConfig) -> float:
    """Generalised nutation angle ``sqrt(omega**2 + delta**2) * tau``."""
    return math.hypot(cfg.omega, cfg.delta) * cfg.tau


def excitation_probability(cfg: DriveConfig) -> float:
    """Probability that one drive pulse takes state 0 to state 1.

    Lossless drives use the generalised Rabi formula; with relaxation the
    Bloch equations are integrated instead.
    """
    if not cfg.is_lossless:
        return bloch_propagate(BlochState.ground(), cfg, cfg.tau).excited_population

    omega_eff_sq = cfg.omega * cfg.omega + cfg.delta * cfg.delta
    if omega_eff_sq == 0.0:
        return 0.0
    weight = cfg.omega * cfg.omega / omega_eff_sq
    return weight * math.sin(0.5 * effective_theta(cfg)) ** 2


def survival_coherent(q: int, theta: float) -> float:
    """Probability of finding the unobserved atom in its initial state.

    The ``q`` pulses act as one coherent nutation: ``cos(q * theta / 2)**2``.
    """
    _check_q(q)
    return math.cos(0.5 * q * theta) ** 2


def survival_measured_ideal(q: int, theta: float) -> float:
    """Probability of ``q`` stays in a row when each pulse is followed by a
    projective measurement: ``cos(theta / 2)**(2 q)``."""
    _check_q(q)
    p = math.cos(0.5 * theta) ** 2
    return p**q


def _envelope_terms(theta: float, a: float, b: float) -> Tuple[float, float, float, bool]:
    """Damped nutation angle, ``cos``-like term and ``sin(x)/x``-like term.

    In the overdamped branch the angle is imaginary and the trigonometric
    functions turn hyperbolic.
    """
    disc = theta * theta - (a - b) ** 2
    if disc >= 0.0:
        theta_d = math.sqrt(disc)
        cos_term = math.cos(theta_d)
        sinc_term = math.sin(theta_d) / theta_d if theta_d > 0.0 else 1.0
        return theta_d, cos_term, sinc_term, False
    theta_d = math.sqrt(-disc)
    return theta_d, math.cosh(theta_d), math.sinh(theta_d) / theta_d, True


def _relaxation_terms(cfg: DriveConfig) -> Tuple[float, float, float]:
    """Return ``(B0, a, b)`` for a drive with relaxation."""
    gamma = cfg.gamma
    denom = cfg.omega * cfg.omega + cfg.big_gamma * gamma
    b0 = 0.5 * cfg.omega * cfg.omega / denom if denom > 0.0 else 0.0
    a = 0.5 * gamma * cfg.tau
    b = 0.5 * cfg.big_gamma * cfg.tau
    return b0, a, b


def stay_probabilities(
    cfg: DriveConfig,
    f0: float,
    f1: float,
    envelope: EnvelopeForm = EnvelopeForm.EXACT,
) -> Tuple[float, float]:
    """Unclamped, unvalidated ``(p0, p1)`` of the relaxation model.

    Used by the fitter, which probes fidelities slightly outside (0, 1].
    """
    theta = cfg.theta
    if cfg.is_lossless:
        flip = math.sin(0.5 * theta) ** 2
        stay = math.cos(0.5 * theta) ** 2
        p0 = stay if f0 == 1.0 else 1.0 - f0 * flip
        p1 = stay if f1 == 1.0 else 1.0 - f1 * flip
        return p0, p1

    b0, a, b = _relaxation_terms(cfg)
    b1 = 1.0 - b0
    _, cos_term, sinc_term, _ = _envelope_terms(theta, a, b)
    decay = math.exp(-(a + b))
    if envelope is EnvelopeForm.EXACT:
        k0 = a + b
        k1 = a + b - 2.0 * b / b1
    else:
        k0 = k1 = 0.0
    env0 = decay * (cos_term + k0 * sinc_term)
    env1 = decay * (cos_term + k1 * sinc_term)
    return 1.0 - f0 * b0 * (1.0 - env0), 1.0 - f1 * b1 * (1.0 - env1)


def _clamp_probability(name: str, value: float) -> float:
    if 0.0 <= value <= 1.0:
        return value
    clamped = min(1.0, max(0.0, value))
    logger.warning("Clamped %s = %.15g to %g", name, value, clamped)
    return clamped


def survival_model(
    cfg: DriveConfig,
    f0: float = 1.0,
    f1: float = 1.0,
    envelope: EnvelopeForm = EnvelopeForm.EXACT,
) -> SurvivalModel:
    """Per-measurement stay probabilities of a resonantly driven, relaxing atom.

    With ``B0 = (omega**2 / 2) / (omega**2 + big_gamma * gamma)``,
    ``B1 = 1 - B0``, ``a = gamma * tau / 2``, ``b = big_gamma * tau / 2`` and
    ``theta_damped**2 = (omega * tau)**2 - (a - b)**2``::

        p_i = 1 - f_i * B_i * (1 - exp(-(a + b)) * (cos(theta_damped) + s_i * sin(theta_damped)))

    The ``COSINE`` envelope drops the ``s_i`` quadrature terms. The ``EXACT``
    envelope keeps them (``s_0 = (a + b) / theta_damped``,
    ``s_1 = (a + b - 2 b / B1) / theta_damped``), which is the exact resonant
    solution of the Bloch equations for a pulse started in state ``i``.

    Detuning is ignored; the model describes resonant drive only.

    Raises:
        ZenoValidationError: If a fidelity lies outside (0, 1].
    """
    for name, value in (("f0", f0), ("f1", f1)):
        if not (0.0 < value <= 1.0):
            raise ZenoValidationError(f"{name} must lie in (0, 1], got {value}")
    if not cfg.is_resonant:
        logger.warning("survival_model ignores detuning delta=%g", cfg.delta)

    theta = cfg.theta
    if cfg.is_lossless:
        b0, a, b = 0.5, 0.0, 0.0
        theta_d, overdamped = theta, False
    else:
        b0, a, b = _relaxation_terms(cfg)
        theta_d, _, _, overdamped = _envelope_terms(theta, a, b)
        if overdamped:
            logger.warning(
                "Overdamped drive: (a - b)**2 = %.6g exceeds (omega*tau)**2 = %.6g",
                (a - b) ** 2,
                theta * theta,
            )

    p0, p1 = stay_probabilities(cfg, f0, f1, envelope)
    return SurvivalModel(
        p0=_clamp_probability("p0", p0),
        p1=_clamp_probability("p1", p1),
        b0=b0,
        b1=1.0 - b0,
        a=a,
        b=b,
        theta_damped=theta_d,
        f0=f0,
        f1=f1,
        overdamped=overdamped,
        envelope=envelope,
    )
