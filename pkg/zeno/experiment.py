"""High-level orchestration of simulation and analysis runs."""

import logging
import math
from typing import List, Optional, Sequence

from .config import ExperimentConfig, ZenoSettings, hz_to_rad_s, load_experiment_config
from .dynamics import survival_model
from .exceptions import ZenoError, ZenoValidationError
from .models import (
    FitResult,
    Outcome,
    PartialDriveConfig,
    RunHistogram,
    SpectrumPoint,
    ZenoBaseModel,
)
from .protocol import generate_batch, spectrum_scan
from .statistics import accumulate_runs, fit_survival, model_survival, v_obs
from .storage import FileTrajectoryStorage, TrajectoryFile, TrajectoryStorage

logger = logging.getLogger(__name__)

# Default scan half-width, as detuning times pulse length.
SPECTRUM_HALF_WIDTH = 4.0 * math.pi


class HistogramRow(ZenoBaseModel):
    """One line of the analysis table; ratios are ``None`` where undefined."""
    q: int
    u_on: int
    u_off: int
    v_on: Optional[float] = None
    v_off: Optional[float] = None
    model_on: Optional[float] = None
    model_off: Optional[float] = None


class AnalysisReport(ZenoBaseModel):
    """Run statistics of a set of trajectories, with an optional fit."""
    histogram: RunHistogram
    rows: List[HistogramRow]
    fit: Optional[FitResult] = None
    fit_error: Optional[str] = None


def _ratio(hist: RunHistogram, symbol: Outcome, q: int) -> Optional[float]:
    if hist.count(symbol, 1) == 0:
        return None
    return v_obs(hist, symbol, q)


def _finite(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def analyze_trajectories(files: Sequence[TrajectoryFile], fit: bool = False) -> AnalysisReport:
    """Histogram the runs of all trajectories in ``files`` and compare them
    with the finite-length model.

    The model columns use the fitted stay probabilities when ``fit`` is set
    and the fit succeeds, otherwise those of the first file's config. A
    failed fit is reported in ``fit_error`` and re-raised by the caller if
    it needs to.

    Raises:
        ZenoValidationError: If no trajectories are given or their lengths differ.
    """
    trajectories = [t for f in files for t in f.trajectories]
    if not trajectories:
        raise ZenoValidationError("no trajectories to analyze")
    hist = accumulate_runs(trajectories)
    config = files[0].config

    result: Optional[FitResult] = None
    error: Optional[str] = None
    if fit:
        drive = config.drive_config()
        known = PartialDriveConfig(
            tau=drive.tau, gamma_ph=drive.gamma_ph, big_gamma=drive.big_gamma
        )
        try:
            result = fit_survival(hist, known, f0=config.f0)
        except ZenoError as exc:
            error = exc.message
            logger.warning("Fit failed: %s", exc.message)

    if result is not None:
        p0, p1 = result.p0_hat, result.p1_hat
    else:
        model = survival_model(config.drive_config(), config.f0, config.f1)
        p0, p1 = model.p0, model.p1
    q_max = hist.max_run
    model_on, model_off = model_survival(p0, p1, hist.trajectory_length, q_max)

    rows = [
        HistogramRow(
            q=q,
            u_on=hist.count(Outcome.ON, q),
            u_off=hist.count(Outcome.OFF, q),
            v_on=_ratio(hist, Outcome.ON, q),
            v_off=_ratio(hist, Outcome.OFF, q),
            model_on=_finite(model_on[q - 1]),
            model_off=_finite(model_off[q - 1]),
        )
        for q in range(1, q_max + 1)
    ]
    return AnalysisReport(histogram=hist, rows=rows, fit=result, fit_error=error)


class ZenoExperiment:
    """Runs the simulations described by one experiment config.

    Worker count comes from the constructor argument, then from
    ``ZENO_WORKERS``, then defaults to one thread.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        workers: Optional[int] = None,
        settings: Optional[ZenoSettings] = None,
        storage: Optional[TrajectoryStorage] = None,
    ):
        self.config = config
        self.settings = settings or ZenoSettings()
        self.workers = workers or self.settings.workers
        self.storage = storage

    @classmethod
    def from_file(cls, path: str, **kwargs) -> "ZenoExperiment":
        """Load the config at ``path``; keyword arguments go to the constructor."""
        return cls(load_experiment_config(path), **kwargs)

    def simulate(self) -> TrajectoryFile:
        """Generate ``n_trajectories`` trajectories of ``n_measurements`` each."""
        config = self.config
        logger.info(
            "Simulating %d x %d measurements (mode=%s, seed=%d, workers=%d)",
            config.n_trajectories,
            config.n_measurements,
            config.mode.value,
            config.seed,
            self.workers,
        )
        trajectories = generate_batch(
            config.drive_config(),
            f0=config.f0,
            f1=config.f1,
            n=config.n_measurements,
            n_trajectories=config.n_trajectories,
            seed=config.seed,
            mode=config.mode,
            workers=self.workers,
        )
        data = TrajectoryFile(config=config, trajectories=trajectories)
        if self.storage is not None:
            self.storage.save(data)
        return data

    def save(self, data: TrajectoryFile, path: Optional[str] = None) -> None:
        """Write ``data`` to ``path``, or to the configured storage."""
        storage = FileTrajectoryStorage(path) if path else self.storage
        if storage is None:
            raise ZenoValidationError("no output path or storage configured")
        storage.save(data)

    def spectrum(
        self,
        min_hz: Optional[float] = None,
        max_hz: Optional[float] = None,
        step_hz: float = 20e3,
        samples: int = 10_000,
    ) -> List[SpectrumPoint]:
        """Scan the detuning in Hz; the default range is ``|delta * tau| <= 4 pi``."""
        drive = self.config.drive_config()
        half_width_hz = SPECTRUM_HALF_WIDTH / (2.0 * math.pi * drive.tau)
        lo = -half_width_hz if min_hz is None else min_hz
        hi = half_width_hz if max_hz is None else max_hz
        return spectrum_scan(
            drive,
            hz_to_rad_s(lo),
            hz_to_rad_s(hi),
            hz_to_rad_s(step_hz),
            samples,
            seed=self.config.seed,
        )
