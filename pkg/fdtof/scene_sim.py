import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .freq_domain import ESTIMATORS, FdConfig, estimate_depth_fd
from .phase_tof import PhaseConfig, estimate_depth_phase, four_bucket, mark_wrapped, phase_to_depth
from .signal_model import (
    DegenerateSignalError,
    FdTofError,
    FrequencySweep,
    InvalidArgumentError,
    NoiseSpec,
    PathComponent,
    PrimalSignal,
    ScenePoint,
    add_noise,
    bucket_taus,
    synth_fd_sweep,
    synth_phase_correlation,
    synth_slow_sweep,
)
from .slow_tof import DEGENERATE, SlowCaptureConfig, estimate_depth_slow

__doc__ = """Per-pixel scene simulation and depth-map reconstruction.

## Scenes
Procedural depth maps (uniform, ramp, tilted plane, sphere on a plane) with an
optional second return per pixel to mimic interreflections.

## Capture and reconstruction
`simulate_capture` synthesizes one signal per pixel in the chosen mode, with
per-pixel noise seeds from `pixel_seed`. `reconstruct` estimates every pixel
independently; pixels whose estimation fails are flagged invalid.

## Metrics and experiments
PSNR over valid pixels, percent-error statistics, and the Monte Carlo SNR sweep
comparing the phase and frequency-domain arms.
"""


class UndefinedMetricError(FdTofError):
    """The metric has no valid pixel to work on"""

    pass


class PixelError(FdTofError):
    """Failure while processing one pixel"""

    def __init__(self, row: int, col: int, error: Exception):
        super().__init__(f"pixel ({row}, {col}): {error}")
        self.row = row
        self.col = col


class Estimator(enum.Enum):
    FOUR_BUCKET = 'four_bucket'
    INTERP = 'interp'
    QUINN_FERNANDES = 'qf'
    SLOW_TOF = 'slow'


@dataclass(frozen=True)
class PhaseTof:
    f_mod: float

    def __post_init__(self):
        PhaseConfig(self.f_mod)


@dataclass(frozen=True)
class FdTof:
    sweep: FrequencySweep


@dataclass(frozen=True)
class SlowTof:
    sweep: FrequencySweep
    exposure: float

    def __post_init__(self):
        SlowCaptureConfig(self.exposure, self.sweep)


CaptureMode = Union[PhaseTof, FdTof, SlowTof]

COMPATIBLE_ESTIMATORS = {
    PhaseTof: (Estimator.FOUR_BUCKET,),
    FdTof: (Estimator.INTERP, Estimator.QUINN_FERNANDES),
    SlowTof: (Estimator.SLOW_TOF,),
}


#######################################
# SCENES


def _grid(value, shape: Tuple[int, int], name: str) -> np.ndarray:
    try:
        array = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
    except ValueError as e:
        raise InvalidArgumentError(f"{name} does not fit a {shape} grid: {e}") from e
    if not np.all(np.isfinite(array)) or np.any(array < 0):
        raise InvalidArgumentError(f"{name} must be finite and non-negative")
    return array


@dataclass(eq=False)
class SceneSpec:
    """Ground truth depth (meters) and amplitude per pixel

    The optional second return of a pixel is given by its depth and amplitude.
    """

    depth: np.ndarray
    amplitude: Any = 1.0
    ambient: float = 0.0
    multipath_depth: Optional[np.ndarray] = None
    multipath_amplitude: Any = None

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=float)
        if depth.ndim != 2 or depth.size == 0:
            raise InvalidArgumentError(f"Scene depth must be a 2-D grid, got shape {depth.shape}")
        self.depth = _grid(depth, depth.shape, 'depth')
        self.amplitude = _grid(self.amplitude, depth.shape, 'amplitude')
        if not (math.isfinite(self.ambient) and self.ambient >= 0):
            raise InvalidArgumentError(f"Invalid ambient {self.ambient}")
        if self.multipath_depth is not None:
            self.multipath_depth = _grid(self.multipath_depth, depth.shape, 'multipath depth')
            self.multipath_amplitude = _grid(
                0.0 if self.multipath_amplitude is None else self.multipath_amplitude,
                depth.shape,
                'multipath amplitude',
            )

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def point(self, row: int, col: int) -> ScenePoint:
        paths = [PathComponent.from_depth(self.depth[row, col], self.amplitude[row, col])]
        if self.multipath_depth is not None:
            paths.append(
                PathComponent.from_depth(
                    self.multipath_depth[row, col], self.multipath_amplitude[row, col]
                )
            )
        return ScenePoint(tuple(paths), self.ambient)

    def truth(self) -> "DepthMap":
        return DepthMap(self.depth.copy(), self.amplitude.copy())

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "SceneSpec":
        return scene_from_dict(data)

    @classmethod
    def from_depth_map(cls, truth: "DepthMap", ambient: float = 0.0) -> "SceneSpec":
        """Scene whose returns follow a depth map, invalid pixels put at depth zero"""
        return cls(np.where(truth.valid, truth.depth, 0.0), truth.amplitude, ambient)

    def to_json(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'depth_m': self.depth.tolist(),
            'amplitude': self.amplitude.tolist(),
            'ambient': self.ambient,
        }
        if self.multipath_depth is not None:
            data['multipath_depth_m'] = self.multipath_depth.tolist()
            data['multipath_amplitude'] = self.multipath_amplitude.tolist()
        return data


def uniform_scene(
    height: int, width: int, depth: float, amplitude: float = 1.0, ambient: float = 0.0
) -> SceneSpec:
    return SceneSpec(np.full((height, width), float(depth)), amplitude, ambient)


def ramp_scene(
    height: int,
    width: int,
    d_min: float,
    d_max: float,
    amplitude: float = 1.0,
    ambient: float = 0.0,
) -> SceneSpec:
    """Depth increasing linearly from the left column to the right one"""
    row = np.linspace(d_min, d_max, width)
    return SceneSpec(np.tile(row, (height, 1)), amplitude, ambient)


def plane_scene(
    height: int,
    width: int,
    d_center: float,
    slope_x: float = 0.0,
    slope_y: float = 0.0,
    amplitude: float = 1.0,
    ambient: float = 0.0,
) -> SceneSpec:
    """Tilted plane, slopes in meters of depth per pixel"""
    rows, cols = np.mgrid[0:height, 0:width]
    depth = d_center + slope_x * (cols - (width - 1) / 2) + slope_y * (rows - (height - 1) / 2)
    return SceneSpec(depth, amplitude, ambient)


def sphere_scene(
    height: int,
    width: int,
    background: float,
    center_depth: float,
    radius: float,
    pixel_pitch: float,
    amplitude: float = 1.0,
    ambient: float = 0.0,
) -> SceneSpec:
    """Sphere in front of a flat background, seen orthographically

    :param pixel_pitch: Lateral size of one pixel in meters
    """
    rows, cols = np.mgrid[0:height, 0:width]
    rho2 = ((rows - (height - 1) / 2) ** 2 + (cols - (width - 1) / 2) ** 2) * pixel_pitch**2
    surface = center_depth - np.sqrt(np.maximum(radius**2 - rho2, 0.0))
    depth = np.where(rho2 < radius**2, np.minimum(surface, background), background)
    return SceneSpec(depth, amplitude, ambient)


def with_multipath(scene: SceneSpec, extra_path: float, ratio: float) -> SceneSpec:
    """Add a second return, extra_path meters longer and ratio times weaker"""
    return SceneSpec(
        scene.depth,
        scene.amplitude,
        scene.ambient,
        multipath_depth=scene.depth + extra_path / 2,
        multipath_amplitude=scene.amplitude * ratio,
    )


SCENE_KINDS = {
    'uniform': uniform_scene,
    'ramp': ramp_scene,
    'plane': plane_scene,
    'sphere': sphere_scene,
}


def scene_from_dict(data: Dict[str, Any]) -> SceneSpec:
    """Build a scene from a document

    Either explicit grids (`depth_m`, optional `amplitude`, `ambient`,
    `multipath_depth_m`, `multipath_amplitude`) or a procedural `kind` with its
    parameters, plus an optional `multipath` object (`extra_path_m`, `ratio`).
    """
    data = dict(data)
    multipath = data.pop('multipath', None)
    try:
        if 'kind' in data:
            kind = data.pop('kind')
            if kind not in SCENE_KINDS:
                raise InvalidArgumentError(f"Unknown scene kind {kind!r}")
            scene = SCENE_KINDS[kind](**data)
        else:
            scene = SceneSpec(
                np.asarray(data['depth_m'], dtype=float),
                data.get('amplitude', 1.0),
                data.get('ambient', 0.0),
                data.get('multipath_depth_m'),
                data.get('multipath_amplitude'),
            )
    except (KeyError, TypeError) as e:
        raise InvalidArgumentError(f"Invalid scene field: {e}") from e
    if multipath:
        scene = with_multipath(scene, multipath['extra_path_m'], multipath['ratio'])
    return scene


#######################################
# DEPTH MAPS


@dataclass(eq=False)
class DepthMap:
    """Depth (meters) and amplitude per pixel, invalid pixels hold NaN"""

    depth: np.ndarray
    amplitude: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        if self.depth.ndim != 2 or self.depth.shape != self.amplitude.shape:
            raise InvalidArgumentError("Depth and amplitude maps must be 2-D of the same shape")
        if self.valid is None:
            self.valid = np.isfinite(self.depth)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.depth.shape:
            raise InvalidArgumentError("The validity mask does not match the map")
        known = self.depth[self.valid]
        if not np.all(np.isfinite(known)) or np.any(known < 0):
            raise InvalidArgumentError("Valid pixels need a finite non-negative depth")
        self.depth = np.where(self.valid, self.depth, np.nan)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def invalid_count(self) -> int:
        return int(np.count_nonzero(~self.valid))


@dataclass(eq=False)
class CaptureCube:
    """Simulated signals of every pixel, samples indexed [row, col, sample]"""

    mode: CaptureMode
    signal_kind: Any
    coordinates: np.ndarray
    samples: np.ndarray

    def signal(self, row: int, col: int) -> PrimalSignal:
        return PrimalSignal(self.signal_kind, self.coordinates, self.samples[row, col])


def pixel_seed(seed: int, row: int, col: int) -> int:
    """Noise seed of a pixel

    The global seed is the entropy of a numpy SeedSequence whose spawn key is
    (row, col); the first 64-bit word of its state is the pixel seed.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(row, col))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def synthesize(point: ScenePoint, mode: CaptureMode) -> PrimalSignal:
    """Noiseless signal of a scene point in a capture mode"""
    if isinstance(mode, PhaseTof):
        return synth_phase_correlation(point, mode.f_mod, bucket_taus(mode.f_mod, 4))
    if isinstance(mode, FdTof):
        return synth_fd_sweep(point, mode.sweep)
    if isinstance(mode, SlowTof):
        return synth_slow_sweep(point, mode.sweep, mode.exposure)
    raise InvalidArgumentError(f"Unknown capture mode {mode!r}")


def simulate_capture(
    scene: SceneSpec, mode: CaptureMode, noise: NoiseSpec = NoiseSpec()
) -> CaptureCube:
    """Synthesize the signal of every pixel, noise seeded per pixel"""
    cube: Optional[np.ndarray] = None
    signal = None
    dark = 0
    for row in range(scene.height):
        for col in range(scene.width):
            try:
                signal = synthesize(scene.point(row, col), mode)
                signal = add_noise(
                    signal, NoiseSpec(noise.snr_db, pixel_seed(noise.seed, row, col))
                )
            except DegenerateSignalError:
                # no AC light reaches the pixel, it stays dark and noiseless
                dark += 1
            except FdTofError as e:
                raise PixelError(row, col, e) from e
            if cube is None:
                cube = np.empty((scene.height, scene.width, len(signal)))
            cube[row, col] = signal.samples
    assert cube is not None and signal is not None
    if dark:
        logging.getLogger(__name__).warning("%d pixels receive no modulated light", dark)
    logging.getLogger(__name__).info(
        "Simulated %dx%d capture in %s mode", scene.height, scene.width, type(mode).__name__
    )
    return CaptureCube(mode, signal.domain_kind, signal.coordinates, cube)


def _estimate_pixel(
    signal: PrimalSignal, mode: CaptureMode, estimator: Estimator, fd: FdConfig
) -> Tuple[float, float]:
    if estimator == Estimator.FOUR_BUCKET:
        assert isinstance(mode, PhaseTof)
        estimate = phase_to_depth(four_bucket(*signal.samples), mode.f_mod)
        if estimate.degenerate:
            raise FdTofError("zero AC amplitude")
        return estimate.depth, estimate.amplitude
    if estimator == Estimator.SLOW_TOF:
        assert isinstance(mode, SlowTof)
        peak = estimate_depth_slow(signal, SlowCaptureConfig(mode.exposure, mode.sweep))
        if peak.flagged(DEGENERATE):
            raise FdTofError("no depth tone")
        return peak.depth, peak.amplitude
    peak = fd.estimate(signal)
    return peak.depth, peak.amplitude


def reconstruct(
    cube: CaptureCube,
    estimator: Union[Estimator, str],
    zero_pad_factor: int = 4,
    window: str = 'hann',
) -> DepthMap:
    """Estimate every pixel independently; failing pixels are flagged invalid"""
    log = logging.getLogger(__name__)
    try:
        estimator = Estimator(estimator)
    except ValueError:
        raise InvalidArgumentError(f"Unknown estimator {estimator!r}") from None
    if estimator not in COMPATIBLE_ESTIMATORS[type(cube.mode)]:
        raise InvalidArgumentError(
            f"Estimator {estimator.value} cannot process a {type(cube.mode).__name__} capture"
        )
    fd = FdConfig(
        sweep=getattr(cube.mode, 'sweep', FdConfig().sweep),
        estimator=estimator.value if estimator.value in ESTIMATORS else 'qf',
        zero_pad_factor=zero_pad_factor,
        window=window,
    )
    height, width = cube.samples.shape[:2]
    depth = np.full((height, width), np.nan)
    amplitude = np.zeros((height, width))
    for row in range(height):
        for col in range(width):
            try:
                depth[row, col], amplitude[row, col] = _estimate_pixel(
                    cube.signal(row, col), cube.mode, estimator, fd
                )
            except FdTofError as e:
                log.debug("Pixel (%d, %d) invalid: %s", row, col, e)
    result = DepthMap(depth, amplitude)
    if result.invalid_count():
        log.warning("%d of %d pixels could not be estimated", result.invalid_count(), depth.size)
    return result


#######################################
# METRICS


def _matched(reconstructed: DepthMap, truth: DepthMap) -> np.ndarray:
    if reconstructed.depth.shape != truth.depth.shape:
        raise InvalidArgumentError(
            f"Map shapes differ: {reconstructed.depth.shape} and {truth.depth.shape}"
        )
    return reconstructed.valid & truth.valid


def psnr(reconstructed: DepthMap, truth: DepthMap) -> float:
    """10 log10(peak² / MSE) over valid pixels, peak being the largest true depth

    Identical maps give +inf.
    """
    mask = _matched(reconstructed, truth)
    if not mask.any():
        raise UndefinedMetricError("No valid pixel to compare")
    peak = float(truth.depth[truth.valid].max())
    if peak <= 0:
        raise UndefinedMetricError("The true depth range is empty")
    mse = float(np.mean((reconstructed.depth[mask] - truth.depth[mask]) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(peak**2 / mse)


def percent_error(estimate, truth) -> np.ndarray:
    """|estimate - truth| / truth x 100"""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.abs(estimate - truth) / truth * 100


def constant_baseline(truth: DepthMap) -> DepthMap:
    """Map holding the mean true depth everywhere"""
    mean = float(np.mean(truth.depth[truth.valid]))
    return DepthMap(np.where(truth.valid, mean, np.nan), np.zeros_like(truth.amplitude))


HISTOGRAM_EDGES = [0.0, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, math.inf]


def depth_metrics(reconstructed: DepthMap, truth: DepthMap) -> Dict[str, Any]:
    """Summary of a reconstruction against its ground truth

    Every pixel with a true depth counts. Invalid estimates have an infinite
    percent error, so they fall outside every error bound and into the median;
    the mean, RMSE and histogram cover the valid estimates only.
    """
    mask = _matched(reconstructed, truth)
    ok = reconstructed.valid[truth.valid]
    errors = np.where(
        ok, percent_error(reconstructed.depth[truth.valid], truth.depth[truth.valid]), math.inf
    )
    finite = errors[ok]
    total = errors.size
    counts, _ = np.histogram(finite[np.isfinite(finite)], bins=HISTOGRAM_EDGES)
    residual = reconstructed.depth[mask] - truth.depth[mask]
    return {
        'pixels': total,
        'invalid_pixels': total - int(np.count_nonzero(ok)),
        'psnr_db': psnr(reconstructed, truth),
        'rmse_m': float(np.sqrt(np.mean(residual**2))) if finite.size else math.nan,
        'median_percent_error': float(np.median(errors)),
        'mean_percent_error': float(finite.mean()) if finite.size else math.nan,
        'fraction_within_1_percent': float(np.count_nonzero(errors <= 1.0)) / total,
        'percent_error_histogram': {
            'edges_percent': HISTOGRAM_EDGES,
            'counts': counts.tolist(),
        },
    }


#######################################
# SNR SWEEP


@dataclass(frozen=True)
class ReportRow:
    """Statistics of one estimator at one SNR"""

    estimator: str
    snr_db: float
    trials: int
    failures: int
    median_percent_error: float
    mean_percent_error: float
    rmse_m: float
    wrapped: int = 0
    psnr_db: Optional[float] = None

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidArgumentError("A report row needs at least one trial")


@dataclass
class ExperimentReport:
    """Rows of an SNR sweep, one per estimator and SNR level"""

    depth: float
    rows: List[ReportRow] = field(default_factory=list)

    def row(self, estimator: str, snr_db: float) -> ReportRow:
        for row in self.rows:
            if row.estimator == estimator and row.snr_db == snr_db:
                return row
        raise KeyError((estimator, snr_db))

    def estimators(self) -> List[str]:
        return list(dict.fromkeys(row.estimator for row in self.rows))

    def medians(self, estimator: str) -> List[float]:
        """Median percent errors of an estimator, ordered by SNR"""
        rows = sorted((r for r in self.rows if r.estimator == estimator), key=lambda r: r.snr_db)
        return [r.median_percent_error for r in rows]


def trial_seed(seed: int, trial: int) -> int:
    """Noise seed of a Monte Carlo trial, shared by every SNR level"""
    sequence = np.random.SeedSequence(seed, spawn_key=(trial,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _summarize(
    name: str, snr_db: float, depth: float, estimates: Sequence[float], wrapped: int
) -> ReportRow:
    values = np.asarray(estimates, dtype=float)
    ok = np.isfinite(values)
    errors = np.where(ok, percent_error(values, depth), math.inf)
    finite = errors[ok]
    return ReportRow(
        estimator=name,
        snr_db=snr_db,
        trials=values.size,
        failures=int(np.count_nonzero(~ok)),
        median_percent_error=float(np.median(errors)),
        mean_percent_error=float(finite.mean()) if finite.size else math.nan,
        rmse_m=float(np.sqrt(np.mean((values[ok] - depth) ** 2))) if finite.size else math.nan,
        wrapped=wrapped,
    )


def snr_sweep_experiment(
    depth: float,
    snr_levels: Sequence[float],
    trials: int,
    phase_cfg: PhaseConfig = PhaseConfig(),
    fd_cfg: FdConfig = FdConfig(),
    seed: int = 0,
) -> ExperimentReport:
    """Percent depth error of the phase and frequency-domain arms across SNR levels

    Both arms see the same single-path scene point. Trial t uses the noise seed
    `trial_seed(seed, t)` at every SNR level.
    """
    log = logging.getLogger(__name__)
    if not (math.isfinite(depth) and depth > 0):
        raise InvalidArgumentError(f"Depth must be positive, got {depth}")
    if trials < 1:
        raise InvalidArgumentError(f"At least one trial is needed, got {trials}")
    if trials < 100:
        log.warning("Only %d trials, statistics will be rough", trials)
    if not snr_levels:
        raise InvalidArgumentError("No SNR level given")
    point = ScenePoint((PathComponent.from_depth(depth),))
    seeds = [trial_seed(seed, t) for t in range(trials)]
    report = ExperimentReport(depth)
    for snr in snr_levels:
        phase_estimates = []
        fd_estimates = []
        wrapped = 0
        for trial_noise in seeds:
            noise = NoiseSpec(snr, trial_noise)
            estimate = estimate_depth_phase(
                point, phase_cfg.f_mod, noise, phase_cfg.reference_amplitude
            )
            wrapped += mark_wrapped(estimate, depth, phase_cfg.f_mod).wrapped
            phase_estimates.append(estimate.depth)
            try:
                fd_estimates.append(estimate_depth_fd(point, fd_cfg, noise).depth)
            except FdTofError as e:
                log.debug("FD trial failed at %s dB: %s", snr, e)
                fd_estimates.append(math.nan)
        report.rows.append(_summarize('four_bucket', snr, depth, phase_estimates, wrapped))
        report.rows.append(_summarize(fd_cfg.estimator, snr, depth, fd_estimates, 0))
        log.info(
            "SNR %s dB: median error %.4g %% (phase) / %.4g %% (%s)",
            snr,
            report.rows[-2].median_percent_error,
            report.rows[-1].median_percent_error,
            fd_cfg.estimator,
        )
    return report


__all__ = [
    'UndefinedMetricError',
    'PixelError',
    'Estimator',
    'PhaseTof',
    'FdTof',
    'SlowTof',
    'CaptureMode',
    'SceneSpec',
    'DepthMap',
    'CaptureCube',
    'uniform_scene',
    'ramp_scene',
    'plane_scene',
    'sphere_scene',
    'with_multipath',
    'scene_from_dict',
    'pixel_seed',
    'synthesize',
    'simulate_capture',
    'reconstruct',
    'psnr',
    'percent_error',
    'constant_baseline',
    'depth_metrics',
    'ReportRow',
    'ExperimentReport',
    'trial_seed',
    'snr_sweep_experiment',
]
