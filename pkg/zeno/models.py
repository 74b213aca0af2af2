"""Data models for two-level drive/probe simulations using Pydantic."""

import math
from enum import Enum
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from .exceptions import ZenoValidationError

# Numerical slack allowed on the Bloch norm.
EPS_NUM = 1e-9

PARAMETER_NAMES: Tuple[str, str, str] = ("theta", "f0", "f1")


class ZenoBaseModel(BaseModel):
    """Base model for zeno objects with common configuration."""
    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        allow_inf_nan=False,
        populate_by_name=True,
    )


class Outcome(str, Enum):
    """Result of one probe pulse.

    ON means resonance fluorescence was seen (projected onto state 0),
    OFF is the null signal (projected onto state 1).
    """

    ON = "on"
    OFF = "off"

    @property
    def symbol(self) -> str:
        """File encoding of the outcome ('1' for ON, '0' for OFF)."""
        return "1" if self is Outcome.ON else "0"

    @property
    def code(self) -> int:
        return 1 if self is Outcome.ON else 0

    @classmethod
    def from_code(cls, code: int) -> "Outcome":
        return cls.ON if code else cls.OFF


class Mode(str, Enum):
    """How a trajectory is generated."""

    MARKOV = "markov"
    FULL_QUANTUM = "full_quantum"


class EnvelopeForm(str, Enum):
    """Which damped-nutation envelope the survival model uses."""

    EXACT = "exact"
    COSINE = "cosine"


class BlochState(ZenoBaseModel):
    """Rotating-frame Bloch vector of the two-level atom.

    ``w = -1`` is state 0 (ground, bright under the probe) and ``w = +1`` is
    state 1 (metastable, dark).
    """
    u: float = 0.0
    v: float = 0.0
    w: float = -1.0

    @model_validator(mode="after")
    def _check_norm(self) -> "BlochState":
        if self.u * self.u + self.v * self.v + self.w * self.w > 1.0 + EPS_NUM:
            raise ValueError(f"Bloch vector ({self.u}, {self.v}, {self.w}) lies outside the sphere")
        return self

    @classmethod
    def ground(cls) -> "BlochState":
        return cls(u=0.0, v=0.0, w=-1.0)

    @classmethod
    def excited(cls) -> "BlochState":
        return cls(u=0.0, v=0.0, w=1.0)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BlochState":
        u, v, w = (float(x) for x in values)
        return cls(u=u, v=v, w=w)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w], dtype=float)

    @property
    def norm(self) -> float:
        return math.sqrt(self.u * self.u + self.v * self.v + self.w * self.w)

    @property
    def excited_population(self) -> float:
        """Population of state 1, ``(1 + w) / 2``."""
        return min(1.0, max(0.0, 0.5 * (1.0 + self.w)))


class DriveConfig(ZenoBaseModel):
    """Drive-pulse physics. All frequencies are angular (rad/s)."""
    omega: float = Field(0.0, ge=0.0)  # Rabi frequency
    delta: float = 0.0  # detuning, drive minus resonance
    tau: float = Field(1.0, gt=0.0)  # pulse length (s)
    gamma_ph: float = Field(0.0, ge=0.0)  # drive-light phase diffusion rate
    big_gamma: float = Field(0.0, ge=0.0)  # inversion decay rate

    @classmethod
    def from_theta(cls, theta: float, tau: float = 1.0, **kwargs: Any) -> "DriveConfig":
        """Build a config whose resonant pulse area ``omega * tau`` is ``theta``."""
        return cls(omega=theta / tau, tau=tau, **kwargs)

    @property
    def gamma(self) -> float:
        """Transverse relaxation rate ``gamma_ph + big_gamma / 2``."""
        return self.gamma_ph + 0.5 * self.big_gamma

    @property
    def theta(self) -> float:
        """Resonant nutation angle ``omega * tau``."""
        return self.omega * self.tau

    @property
    def is_lossless(self) -> bool:
        return self.gamma_ph == 0.0 and self.big_gamma == 0.0

    @property
    def is_resonant(self) -> bool:
        return self.delta == 0.0


class PartialDriveConfig(ZenoBaseModel):
    """Drive parameters known in advance when fitting run statistics."""
    tau: float = Field(1.0, gt=0.0)
    gamma_ph: float = Field(0.0, ge=0.0)
    big_gamma: float = Field(0.0, ge=0.0)

    def with_theta(self, theta: float) -> DriveConfig:
        return DriveConfig(
            omega=theta / self.tau,
            tau=self.tau,
            gamma_ph=self.gamma_ph,
            big_gamma=self.big_gamma,
        )


class SurvivalModel(ZenoBaseModel):
    """Per-measurement stay probabilities of the relaxation model."""
    p0: float = Field(ge=0.0, le=1.0)
    p1: float = Field(ge=0.0, le=1.0)
    b0: float = Field(ge=0.0, le=1.0)
    b1: float = Field(ge=0.0, le=1.0)
    a: float = Field(ge=0.0)
    b: float = Field(ge=0.0)
    theta_damped: float = Field(ge=0.0)
    f0: float = Field(gt=0.0, le=1.0)
    f1: float = Field(gt=0.0, le=1.0)
    overdamped: bool = False
    envelope: EnvelopeForm = EnvelopeForm.EXACT

    @model_validator(mode="after")
    def _check_weights(self) -> "SurvivalModel":
        if abs(self.b0 + self.b1 - 1.0) > 1e-12:
            raise ValueError(f"b0 + b1 must be 1, got {self.b0 + self.b1}")
        return self

    def stay_probability(self, outcome: Outcome) -> float:
        return self.p0 if outcome is Outcome.ON else self.p1


def _as_outcome_codes(value: Any) -> np.ndarray:
    if isinstance(value, np.ndarray):
        codes = value.astype(np.uint8, copy=True)
    elif isinstance(value, (str, bytes)):
        raw = value.encode("ascii") if isinstance(value, str) else value
        codes = np.frombuffer(raw, dtype=np.uint8) - np.uint8(ord("0"))
    else:
        codes = np.fromiter(
            (item.code if isinstance(item, Outcome) else int(item) for item in value),
            dtype=np.uint8,
        )
    if codes.ndim != 1:
        raise ValueError("outcomes must be one-dimensional")
    if codes.size and int(codes.max()) > 1:
        raise ValueError("outcomes may only contain ON (1) and OFF (0)")
    codes.setflags(write=False)
    return codes


class Trajectory(ZenoBaseModel):
    """Ordered record of probe outcomes plus the provenance needed to regenerate it."""
    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        allow_inf_nan=False,
        arbitrary_types_allowed=True,
    )

    outcomes: np.ndarray  # uint8, 1 = ON, 0 = OFF
    seed: int = Field(ge=0, lt=2**64)
    index: int = Field(0, ge=0)
    config: DriveConfig
    f0: float = Field(1.0, gt=0.0, le=1.0)
    f1: float = Field(1.0, gt=0.0, le=1.0)
    mode: Mode = Mode.MARKOV

    @field_validator("outcomes", mode="before")
    @classmethod
    def _coerce_outcomes(cls, value: Any) -> np.ndarray:
        return _as_outcome_codes(value)

    def __len__(self) -> int:
        return int(self.outcomes.size)

    def outcome_list(self) -> List[Outcome]:
        return [Outcome.from_code(code) for code in self.outcomes.tolist()]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.outcomes, other.outcomes)
            and self.seed == other.seed
            and self.index == other.index
            and self.config == other.config
            and self.f0 == other.f0
            and self.f1 == other.f1
            and self.mode == other.mode
        )

    __hash__ = None  # type: ignore[assignment]

    def to_symbols(self) -> str:
        """Outcomes as a string of '1' (ON) and '0' (OFF)."""
        return (self.outcomes + np.uint8(ord("0"))).tobytes().decode("ascii")


class MeasurementRecord(ZenoBaseModel):
    """A trajectory together with its adjacent-pair transition counts."""
    trajectory: Trajectory
    transitions_up: int = Field(ge=0)  # ON -> OFF, an act of excitation
    transitions_down: int = Field(ge=0)  # OFF -> ON, an act of de-excitation

    @model_validator(mode="after")
    def _check_alternation(self) -> "MeasurementRecord":
        if abs(self.transitions_up - self.transitions_down) > 1:
            raise ValueError("excitations and de-excitations must alternate")
        return self


class RunHistogram(ZenoBaseModel):
    """Counts U(q) of maximal runs of q equal outcomes, per symbol.

    Runs touching either end of a trajectory are included.
    """
    counts_on: Dict[int, int] = Field(default_factory=dict)
    counts_off: Dict[int, int] = Field(default_factory=dict)
    trajectory_length: int = Field(ge=1)
    n_trajectories: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_partition(self) -> "RunHistogram":
        for counts in (self.counts_on, self.counts_off):
            for q, count in counts.items():
                if q < 1 or count < 0:
                    raise ValueError(f"invalid run count U({q}) = {count}")
        covered = sum(q * c for q, c in self.counts_on.items())
        covered += sum(q * c for q, c in self.counts_off.items())
        if covered != self.trajectory_length * self.n_trajectories:
            raise ValueError(
                f"runs cover {covered} measurements, expected "
                f"{self.trajectory_length * self.n_trajectories}"
            )
        if abs(self.total_runs(Outcome.ON) - self.total_runs(Outcome.OFF)) > self.n_trajectories:
            raise ValueError("ON and OFF runs must alternate within each trajectory")
        return self

    def counts(self, symbol: Outcome) -> Dict[int, int]:
        return self.counts_on if symbol is Outcome.ON else self.counts_off

    def count(self, symbol: Outcome, q: int) -> int:
        return self.counts(symbol).get(q, 0)

    def total_runs(self, symbol: Outcome) -> int:
        return sum(self.counts(symbol).values())

    @property
    def max_run(self) -> int:
        return max(list(self.counts_on) + list(self.counts_off) + [0])

    def merge(self, other: "RunHistogram") -> "RunHistogram":
        """Combine with a histogram of trajectories of the same length."""
        if other.trajectory_length != self.trajectory_length:
            raise ZenoValidationError(
                "cannot merge histograms of trajectory lengths "
                f"{self.trajectory_length} and {other.trajectory_length}"
            )
        merged_on = dict(self.counts_on)
        for q, c in other.counts_on.items():
            merged_on[q] = merged_on.get(q, 0) + c
        merged_off = dict(self.counts_off)
        for q, c in other.counts_off.items():
            merged_off[q] = merged_off.get(q, 0) + c
        return RunHistogram(
            counts_on=dict(sorted(merged_on.items())),
            counts_off=dict(sorted(merged_off.items())),
            trajectory_length=self.trajectory_length,
            n_trajectories=self.n_trajectories + other.n_trajectories,
        )


class FitResult(ZenoBaseModel):
    """Point estimates and local uncertainty of a run-statistics fit.

    The covariance is ordered (theta, f0, f1); parameters held fixed
    during the fit have zero rows and columns.
    """
    theta_hat: float
    f0_hat: float = Field(gt=0.0, le=1.0)
    f1_hat: float = Field(gt=0.0, le=1.0)
    p0_hat: float = Field(ge=0.0, le=1.0)
    p1_hat: float = Field(ge=0.0, le=1.0)
    objective: float
    covariance: List[List[float]]
    fitted: Tuple[str, ...] = ("theta", "f1")
    converged: bool = True
    iterations: int = 0

    @field_validator("covariance")
    @classmethod
    def _check_shape(cls, value: List[List[float]]) -> List[List[float]]:
        if len(value) != 3 or any(len(row) != 3 for row in value):
            raise ValueError("covariance must be 3x3")
        return value

    def stderr(self, name: str) -> float:
        i = PARAMETER_NAMES.index(name)
        return math.sqrt(max(self.covariance[i][i], 0.0))

    def confidence_interval(self, name: str, level: float = 0.95) -> Tuple[float, float]:
        value = {"theta": self.theta_hat, "f0": self.f0_hat, "f1": self.f1_hat}[name]
        half = float(stats.norm.ppf(0.5 + level / 2.0)) * self.stderr(name)
        return value - half, value + half


class SpectrumPoint(ZenoBaseModel):
    """One detuning point of a stroboscopic excitation spectrum."""
    delta: float  # rad/s
    p_analytic: float
    p_montecarlo: float
    stderr: float
    samples: int

    @property
    def detuning_hz(self) -> float:
        return self.delta / (2.0 * math.pi)


class ScalingPoint(ZenoBaseModel):
    """Transition probability for a total pulse split into N measured pieces."""
    n: int = Field(ge=1)
    p_analytic: float
    p_montecarlo: float
    stderr: float
    p_small_angle: float
    samples: int
