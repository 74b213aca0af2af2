"""Experiment configuration files and runtime settings."""

import json
import logging
import math
import os
from typing import Any, Dict, List, Optional

from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource

from .exceptions import ZenoConfigError
from .models import DriveConfig, Mode, ZenoBaseModel

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


def hz_to_rad_s(value: float) -> float:
    return TWO_PI * value


class ZenoSettings(BaseSettings):
    """Runtime settings, read from ``ZENO_*`` environment variables."""
    model_config = SettingsConfigDict(env_prefix="ZENO_", extra="ignore")

    workers: int = Field(1, ge=1)
    log_level: str = "WARNING"
    delimiter: str = "\t"


class DriveSection(ZenoBaseModel):
    """The ``[drive]`` table, in laboratory units.

    The drive strength is given by exactly one of ``rabi_frequency_hz``,
    ``omega_rad_s`` or ``theta`` (pulse area); the detuning by at most one
    of ``detuning_hz`` and ``delta_rad_s``. Rates are in 1/s.
    """
    rabi_frequency_hz: Optional[float] = Field(None, ge=0.0)
    omega_rad_s: Optional[float] = Field(None, ge=0.0)
    theta: Optional[float] = Field(None, ge=0.0)
    detuning_hz: Optional[float] = None
    delta_rad_s: Optional[float] = None
    pulse_length_s: float = Field(gt=0.0)
    dephasing_rate: float = Field(0.0, ge=0.0)
    decay_rate: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_groups(self) -> "DriveSection":
        strength = [
            name
            for name in ("rabi_frequency_hz", "omega_rad_s", "theta")
            if getattr(self, name) is not None
        ]
        if len(strength) != 1:
            raise ValueError(
                "exactly one of rabi_frequency_hz, omega_rad_s, theta is required, "
                f"got {strength or 'none'}"
            )
        if self.detuning_hz is not None and self.delta_rad_s is not None:
            raise ValueError("give at most one of detuning_hz, delta_rad_s")
        return self

    def to_drive_config(self) -> DriveConfig:
        """Convert to angular units; the only place Hz become rad/s."""
        if self.rabi_frequency_hz is not None:
            omega = hz_to_rad_s(self.rabi_frequency_hz)
        elif self.omega_rad_s is not None:
            omega = self.omega_rad_s
        else:
            omega = self.theta / self.pulse_length_s
        if self.detuning_hz is not None:
            delta = hz_to_rad_s(self.detuning_hz)
        else:
            delta = self.delta_rad_s or 0.0
        return DriveConfig(
            omega=omega,
            delta=delta,
            tau=self.pulse_length_s,
            gamma_ph=self.dephasing_rate,
            big_gamma=self.decay_rate,
        )


class RunSection(ZenoBaseModel):
    """The ``[run]`` table."""
    f0: float = Field(1.0, gt=0.0, le=1.0)
    f1: float = Field(1.0, gt=0.0, le=1.0)
    n_measurements: int = Field(500, ge=1)
    n_trajectories: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    mode: Mode = Mode.MARKOV


class ExperimentConfig(ZenoBaseModel):
    """Complete description of a simulation run."""
    drive: DriveSection
    run: RunSection = RunSection()

    @property
    def f0(self) -> float:
        return self.run.f0

    @property
    def f1(self) -> float:
        return self.run.f1

    @property
    def n_measurements(self) -> int:
        return self.run.n_measurements

    @property
    def n_trajectories(self) -> int:
        return self.run.n_trajectories

    @property
    def seed(self) -> int:
        return self.run.seed

    @property
    def mode(self) -> Mode:
        return self.run.mode

    def drive_config(self) -> DriveConfig:
        return self.drive.to_drive_config()

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with ``[run]`` keys replaced; ``None`` values are ignored.

        Raises:
            ZenoConfigError: If an override is not a valid ``[run]`` value.
        """
        updates = {key: value for key, value in overrides.items() if value is not None}
        if not updates:
            return self
        try:
            run = RunSection.model_validate({**self.run.model_dump(), **updates})
        except ValidationError as exc:
            raise _config_error(exc, prefix="run") from exc
        return self.model_copy(update={"run": run})


def _config_error(exc: ValidationError, prefix: Optional[str] = None) -> ZenoConfigError:
    first = exc.errors()[0]
    loc: List[str] = [str(part) for part in first["loc"]]
    if prefix:
        loc.insert(0, prefix)
    field = ".".join(loc) or None
    if first["type"] == "extra_forbidden":
        message = f"unknown key '{field}'"
    else:
        message = f"invalid value for '{field}': {first['msg']}" if field else first["msg"]
    return ZenoConfigError(message, field=field, details={"errors": exc.errors(include_url=False)})


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a config mapping.

    Raises:
        ZenoConfigError: Naming the first offending dotted key.
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise _config_error(exc) from exc


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read and validate a TOML experiment file.

    Raises:
        ZenoConfigError: If the file is missing, not valid TOML, or holds
            missing, unknown or out-of-range keys.
    """
    if not os.path.exists(path):
        raise ZenoConfigError(f"config file not found: {path}")
    try:
        source = TomlConfigSettingsSource(ZenoSettings, toml_file=path)
    except ValueError as exc:
        raise ZenoConfigError(f"{path} is not valid TOML: {exc}") from exc
    logger.debug("Loaded config from %s", path)
    return parse_experiment_config(dict(source.toml_data))


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return json.dumps(str(value))


def dump_experiment_config(config: ExperimentConfig) -> str:
    """TOML text that :func:`load_experiment_config` reads back unchanged."""
    lines: List[str] = []
    for section in ("drive", "run"):
        lines.append(f"[{section}]")
        values = getattr(config, section).model_dump(mode="json", exclude_none=True)
        for key, value in values.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def save_experiment_config(config: ExperimentConfig, path: str) -> None:
    config_dir = os.path.dirname(path)
    if config_dir and not os.path.exists(config_dir):
        os.makedirs(config_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_experiment_config(config))
