"""Unit tests for the trajectory file format and storage backends."""

import os
import tempfile

import pytest

from zeno.config import DriveSection, ExperimentConfig, RunSection
from zeno.exceptions import ZenoFormatError
from zeno.models import Mode
from zeno.protocol import generate_batch
from zeno.storage import (
    FileTrajectoryStorage,
    MemoryTrajectoryStorage,
    TrajectoryFile,
    dumps_trajectories,
    loads_trajectories,
)


@pytest.fixture
def data():
    config = ExperimentConfig(
        drive=DriveSection(theta=2.0, pulse_length_s=1e-6, dephasing_rate=1e5),
        run=RunSection(f1=0.9, n_measurements=40, n_trajectories=3, seed=2**64 - 2),
    )
    trajectories = generate_batch(
        config.drive_config(),
        f0=config.f0,
        f1=config.f1,
        n=config.n_measurements,
        n_trajectories=config.n_trajectories,
        seed=config.seed,
        mode=config.mode,
    )
    return TrajectoryFile(config=config, trajectories=trajectories)


def _header(n_measurements: int = 4) -> str:
    config = ExperimentConfig(
        drive=DriveSection(theta=2.0, pulse_length_s=1.0),
        run=RunSection(n_measurements=n_measurements),
    )
    return "# zeno-trajectories v1\n# config: " + config.model_dump_json() + "\n"


class TestTrajectoryFormat:
    """Test cases for dumps_trajectories and loads_trajectories."""

    def test_round_trip(self, data):
        """Test parsing a serialized file gives back the same trajectories."""
        parsed = loads_trajectories(dumps_trajectories(data))
        assert parsed == data
        assert parsed.trajectories[0].seed == 2**64 - 2
        assert dumps_trajectories(parsed) == dumps_trajectories(data)

    def test_layout(self, data):
        """Test the header lines and one body line per trajectory."""
        lines = dumps_trajectories(data).splitlines()
        assert lines[0] == "# zeno-trajectories v1"
        assert lines[1].startswith("# config: {")
        assert lines[2] == "> 0"
        assert len(lines[3]) == 40
        assert set(lines[3]) <= {"0", "1"}
        assert len(lines) == 2 + 2 * 3

    def test_full_quantum_provenance(self, data):
        """Test mode and fidelities come back from the header."""
        config = data.config.with_overrides(mode=Mode.FULL_QUANTUM)
        text = dumps_trajectories(TrajectoryFile(config=config, trajectories=[]))
        parsed = loads_trajectories(text + "> 0\n" + "1" * 40 + "\n")
        traj = parsed.trajectories[0]
        assert traj.mode is Mode.FULL_QUANTUM
        assert traj.f1 == 0.9
        assert traj.config == config.drive_config()

    def test_bad_magic(self):
        """Test a missing header is reported on line 1."""
        with pytest.raises(ZenoFormatError, match="line 1"):
            loads_trajectories("hello\n")

    def test_bad_config_header(self):
        """Test an unreadable config header is reported on line 2."""
        with pytest.raises(ZenoFormatError) as excinfo:
            loads_trajectories('# zeno-trajectories v1\n# config: {"drive": 1}\n')
        assert excinfo.value.line_number == 2

    def test_bad_symbol(self):
        """Test a stray character is reported with its line number."""
        text = _header() + "> 0\n1101\n> 1\n10x1\n"
        with pytest.raises(ZenoFormatError) as excinfo:
            loads_trajectories(text)
        assert excinfo.value.line_number == 6
        assert "'x'" in str(excinfo.value)

    def test_wrong_length(self):
        """Test a record of the wrong length is rejected."""
        with pytest.raises(ZenoFormatError, match="expected 4") as excinfo:
            loads_trajectories(_header() + "> 0\n110\n")
        assert excinfo.value.line_number == 4

    def test_missing_body(self):
        """Test a trajectory header without a body is rejected."""
        with pytest.raises(ZenoFormatError) as excinfo:
            loads_trajectories(_header() + "> 0\n")
        assert excinfo.value.line_number == 4

    def test_bad_index_line(self):
        """Test a malformed index line is rejected."""
        with pytest.raises(ZenoFormatError) as excinfo:
            loads_trajectories(_header() + "# 0\n1101\n")
        assert excinfo.value.line_number == 3


class TestStorage:
    """Test cases for the storage backends."""

    def test_file_storage(self, data):
        """Test a file backend writes and reads the same data."""
        with tempfile.TemporaryDirectory() as tmp:
            storage = FileTrajectoryStorage(os.path.join(tmp, "runs", "out.traj"))
            storage.save(data)
            assert storage.load() == data

    def test_file_storage_missing(self):
        """Test loading a missing file is a format error."""
        with pytest.raises(ZenoFormatError, match="not found"):
            FileTrajectoryStorage("no/such/file.traj").load()

    def test_memory_storage(self, data):
        """Test the in-memory backend keeps what it was given."""
        storage = MemoryTrajectoryStorage()
        with pytest.raises(ZenoFormatError):
            storage.load()
        storage.save(data)
        assert storage.load() is data
