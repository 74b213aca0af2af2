"""Trajectory file format and storage backends.

A trajectory file looks like::

    # zeno-trajectories v1
    # config: {"drive": {...}, "run": {...}}
    > 0
    1110011111...
    > 1
    1111100011...

One character per measurement, '1' for ON and '0' for OFF.
"""

import logging
import os
import re
from abc import ABC, abstractmethod
from typing import List, Optional

from pydantic import ValidationError

from .config import ExperimentConfig
from .exceptions import ZenoFormatError
from .models import Trajectory, ZenoBaseModel

logger = logging.getLogger(__name__)

MAGIC = "# zeno-trajectories v1"
CONFIG_PREFIX = "# config: "
RECORD_PREFIX = "> "

_BODY = re.compile(r"[01]+")
_INDEX = re.compile(r"\d+")


class TrajectoryFile(ZenoBaseModel):
    """A set of trajectories generated under one experiment config."""
    config: ExperimentConfig
    trajectories: List[Trajectory]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrajectoryFile):
            return NotImplemented
        return self.config == other.config and self.trajectories == other.trajectories

    __hash__ = None  # type: ignore[assignment]


def dumps_trajectories(data: TrajectoryFile) -> str:
    lines = [MAGIC, CONFIG_PREFIX + data.config.model_dump_json()]
    for trajectory in data.trajectories:
        lines.append(f"{RECORD_PREFIX}{trajectory.index}")
        lines.append(trajectory.to_symbols())
    return "\n".join(lines) + "\n"


def loads_trajectories(text: str) -> TrajectoryFile:
    """Parse the text of a trajectory file.

    Raises:
        ZenoFormatError: With the 1-based line number of the first problem.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines or lines[0] != MAGIC:
        raise ZenoFormatError(f"expected header '{MAGIC}'", line_number=1)
    if len(lines) < 2 or not lines[1].startswith(CONFIG_PREFIX):
        raise ZenoFormatError(f"expected '{CONFIG_PREFIX.strip()}' line", line_number=2)
    try:
        config = ExperimentConfig.model_validate_json(lines[1][len(CONFIG_PREFIX):])
    except ValidationError as exc:
        raise ZenoFormatError(f"invalid config header: {exc.errors()[0]['msg']}", line_number=2)

    drive = config.drive_config()
    trajectories: List[Trajectory] = []
    lineno = 3
    while lineno <= len(lines):
        header = lines[lineno - 1]
        if not header.startswith(RECORD_PREFIX) or not _INDEX.fullmatch(
            header[len(RECORD_PREFIX):]
        ):
            raise ZenoFormatError(f"expected '> <index>', got {header[:40]!r}", line_number=lineno)
        index = int(header[len(RECORD_PREFIX):])
        if lineno == len(lines):
            raise ZenoFormatError(f"trajectory {index} has no body", line_number=lineno + 1)
        body = lines[lineno]
        if not _BODY.fullmatch(body):
            bad = next((i for i, ch in enumerate(body) if ch not in "01"), 0)
            raise ZenoFormatError(
                f"invalid record {body[bad:bad + 1]!r} at column {bad + 1}; expected '0' or '1'",
                line_number=lineno + 1,
            )
        if len(body) != config.n_measurements:
            raise ZenoFormatError(
                f"trajectory {index} has {len(body)} records, expected {config.n_measurements}",
                line_number=lineno + 1,
            )
        trajectories.append(
            Trajectory(
                outcomes=body,
                seed=config.seed,
                index=index,
                config=drive,
                f0=config.f0,
                f1=config.f1,
                mode=config.mode,
            )
        )
        lineno += 2
    return TrajectoryFile(config=config, trajectories=trajectories)


class TrajectoryStorage(ABC):
    """Abstract base class for trajectory storage."""

    @abstractmethod
    def load(self) -> TrajectoryFile:
        """Load trajectories from storage."""
        pass

    @abstractmethod
    def save(self, data: TrajectoryFile) -> None:
        """Save trajectories to storage."""
        pass


class FileTrajectoryStorage(TrajectoryStorage):
    """Trajectory storage backed by a text file."""

    def __init__(self, filename: str):
        self.filename = filename

    def load(self) -> TrajectoryFile:
        if not os.path.exists(self.filename):
            raise ZenoFormatError(f"trajectory file not found: {self.filename}")
        with open(self.filename, "r", encoding="ascii", newline="") as f:
            try:
                text = f.read()
            except UnicodeDecodeError as exc:
                raise ZenoFormatError(f"{self.filename} is not an ASCII file: {exc}")
        data = loads_trajectories(text)
        logger.debug("Read %d trajectories from %s", len(data.trajectories), self.filename)
        return data

    def save(self, data: TrajectoryFile) -> None:
        out_dir = os.path.dirname(self.filename)
        if out_dir and not os.path.exists(out_dir):
            os.makedirs(out_dir, exist_ok=True)
        with open(self.filename, "w", encoding="ascii", newline="\n") as f:
            f.write(dumps_trajectories(data))
        logger.info("Wrote %d trajectories to %s", len(data.trajectories), self.filename)


class MemoryTrajectoryStorage(TrajectoryStorage):
    """In-memory trajectory storage for tests or short-lived scripts."""

    def __init__(self, data: Optional[TrajectoryFile] = None):
        self._data = data

    def load(self) -> TrajectoryFile:
        if self._data is None:
            raise ZenoFormatError("no trajectories stored")
        return self._data

    def save(self, data: TrajectoryFile) -> None:
        self._data = data
