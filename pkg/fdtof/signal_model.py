import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

__doc__ = """Forward models for the three time-of-flight architectures.

All frequencies are ordinary frequencies in Hz; the 2π factors are written out.
The emitted signal has unit amplitude, every gain lives in the path amplitudes.
"""

SPEED_OF_LIGHT = 299792458.0


class FdTofError(RuntimeError):
    """Error raised by the toolkit"""

    pass


class InvalidArgumentError(FdTofError, ValueError):
    """Invalid argument or configuration"""

    pass


class DegenerateSignalError(FdTofError):
    """The signal carries no AC power"""

    pass


def _check_finite(name: str, *values) -> None:
    for value in values:
        if not np.all(np.isfinite(value)):
            raise InvalidArgumentError(f"{name} must be finite")


#######################################
# TYPES


@dataclass(frozen=True)
class PathComponent:
    """One optical return: amplitude and round-trip path length in meters"""

    amplitude: float
    path_length: float

    def __post_init__(self):
        _check_finite('PathComponent', self.amplitude, self.path_length)
        if self.amplitude < 0 or self.path_length < 0:
            raise InvalidArgumentError(
                f"Negative path component ({self.amplitude}, {self.path_length})"
            )

    @classmethod
    def from_depth(cls, depth: float, amplitude: float = 1.0) -> "PathComponent":
        return cls(amplitude=amplitude, path_length=2.0 * depth)

    @property
    def depth(self) -> float:
        return self.path_length / 2.0

    @property
    def delay(self) -> float:
        """Round-trip delay in seconds"""
        return self.path_length / SPEED_OF_LIGHT


@dataclass(frozen=True)
class ScenePoint:
    """What a single pixel sees: K >= 1 returns plus ambient light

    Paths are kept sorted by path length.
    """

    paths: Tuple[PathComponent, ...]
    ambient: float = 0.0

    def __post_init__(self):
        paths = tuple(self.paths)
        if not paths:
            raise InvalidArgumentError("A scene point needs at least one path")
        _check_finite('ambient', self.ambient)
        if self.ambient < 0:
            raise InvalidArgumentError(f"Negative ambient {self.ambient}")
        object.__setattr__(self, 'paths', tuple(sorted(paths, key=lambda p: p.path_length)))

    @classmethod
    def at_depths(
        cls, depths: Iterable[float], amplitude: float = 1.0, ambient: float = 0.0
    ) -> "ScenePoint":
        return cls(tuple(PathComponent.from_depth(d, amplitude) for d in depths), ambient)

    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.paths])

    def path_lengths(self) -> np.ndarray:
        return np.array([p.path_length for p in self.paths])


@dataclass(frozen=True)
class FrequencySweep:
    """Uniform sweep of modulation frequencies, endpoints included"""

    f_min: float
    f_max: float
    n_samples: int

    def __post_init__(self):
        _check_finite('FrequencySweep', self.f_min, self.f_max)
        if self.f_min <= 0:
            raise InvalidArgumentError(f"f_min must be positive, got {self.f_min}")
        if self.f_max <= self.f_min:
            raise InvalidArgumentError(
                f"f_max ({self.f_max}) must be greater than f_min ({self.f_min})"
            )
        if int(self.n_samples) != self.n_samples or self.n_samples < 3:
            raise InvalidArgumentError(f"A sweep needs at least 3 samples, got {self.n_samples}")
        object.__setattr__(self, 'n_samples', int(self.n_samples))

    @classmethod
    def parse(cls, value: str) -> "FrequencySweep":
        """Parse a sweep written as f_min:f_max:n"""
        parts = value.split(':')
        if len(parts) != 3:
            raise InvalidArgumentError(f"Sweep must be written f_min:f_max:n, got {value!r}")
        try:
            return cls(float(parts[0]), float(parts[1]), int(float(parts[2])))
        except ValueError as e:
            raise InvalidArgumentError(f"Invalid sweep {value!r}: {e}") from e

    def __str__(self) -> str:
        return f"{self.f_min:g}:{self.f_max:g}:{self.n_samples}"

    def bandwidth(self) -> float:
        return self.f_max - self.f_min

    @property
    def spacing(self) -> float:
        return self.bandwidth() / (self.n_samples - 1)

    @property
    def center(self) -> float:
        return (self.f_min + self.f_max) / 2.0

    def frequencies(self) -> np.ndarray:
        return np.linspace(self.f_min, self.f_max, self.n_samples)


class DomainKind(enum.Enum):
    """Coordinate a primal signal is sampled against"""

    PHASE_SHIFT = 'phase_shift'
    MODULATION_FREQUENCY = 'modulation_frequency'


@dataclass(frozen=True, eq=False)
class PrimalSignal:
    """Real samples indexed by seconds of correlation shift or Hz of modulation"""

    domain_kind: DomainKind
    coordinates: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        coordinates = np.asarray(self.coordinates, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if coordinates.ndim != 1 or coordinates.shape != samples.shape:
            raise InvalidArgumentError(
                f"Coordinates {coordinates.shape} and samples {samples.shape} do not match"
            )
        if coordinates.size == 0:
            raise InvalidArgumentError("Empty signal")
        _check_finite('coordinates', coordinates)
        _check_finite('samples', samples)
        if np.any(np.diff(coordinates) <= 0):
            raise InvalidArgumentError("Coordinates must be strictly increasing")
        object.__setattr__(self, 'coordinates', coordinates)
        object.__setattr__(self, 'samples', samples)

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> "PrimalSignal":
        return PrimalSignal(self.domain_kind, self.coordinates, samples)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise at a given AC signal-to-noise ratio"""

    snr_db: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise InvalidArgumentError(f"Invalid SNR {self.snr_db}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgumentError(f"Seed must be a non-negative integer, got {self.seed}")

    @property
    def noiseless(self) -> bool:
        return self.snr_db == math.inf


#######################################
# SYNTHESIS


def bucket_taus(f_mod: float, n_buckets: int = 4) -> np.ndarray:
    """Correlation shifts spread evenly over one modulation period"""
    if n_buckets < 3:
        raise InvalidArgumentError(f"At least 3 buckets are needed, got {n_buckets}")
    return np.arange(n_buckets) / (n_buckets * f_mod)


def synth_phase_correlation(point: ScenePoint, f_mod: float, taus) -> PrimalSignal:
    """Correlation of emitted and received signals at the given shifts

    :param point: The scene point
    :param f_mod: Modulation frequency in Hz
    :param taus: Strictly increasing correlation shifts in seconds
    :return: Signal in the phase-shift domain
    """
    taus = np.asarray(taus, dtype=float)
    _check_finite('f_mod', f_mod)
    _check_finite('taus', taus)
    if f_mod <= 0:
        raise InvalidArgumentError(f"Modulation frequency must be positive, got {f_mod}")
    if taus.ndim != 1 or taus.size == 0:
        raise InvalidArgumentError("At least one correlation shift is needed")
    phases = 2 * np.pi * point.path_lengths() * f_mod / SPEED_OF_LIGHT
    arg = 2 * np.pi * f_mod * taus[:, None] + phases[None, :]
    samples = 0.5 * np.cos(arg) @ point.amplitudes() + point.ambient
    return PrimalSignal(DomainKind.PHASE_SHIFT, taus, samples)


def synth_fd_sweep(point: ScenePoint, sweep: FrequencySweep) -> PrimalSignal:
    """Received signal at zero phase shift while sweeping the modulation frequency

    Each path oscillates along the sweep with a period of c / z Hz.
    """
    freqs = sweep.frequencies()
    arg = 2 * np.pi * np.outer(freqs, point.path_lengths()) / SPEED_OF_LIGHT
    samples = 0.5 * np.cos(arg) @ point.amplitudes() + point.ambient
    return PrimalSignal(DomainKind.MODULATION_FREQUENCY, freqs, samples)


def synth_slow_sweep(point: ScenePoint, sweep: FrequencySweep, exposure: float) -> PrimalSignal:
    """Frequency sweep seen by an integrating camera with a fixed exposure

    Each path contributes two sinusoids, at delays z/c and z/c + exposure, under an
    envelope decaying as 1/f.
    """
    _check_finite('exposure', exposure)
    if exposure <= 0:
        raise InvalidArgumentError(f"Exposure must be positive, got {exposure}")
    freqs = sweep.frequencies()
    delays = point.path_lengths() / SPEED_OF_LIGHT
    omega = 2 * np.pi * freqs[:, None]
    terms = (np.sin(omega * (exposure + delays[None, :])) - np.sin(omega * delays[None, :])) / omega
    samples = terms @ point.amplitudes() + point.ambient * exposure
    return PrimalSignal(DomainKind.MODULATION_FREQUENCY, freqs, samples)


#######################################
# NOISE


def add_noise(signal: PrimalSignal, noise: NoiseSpec) -> PrimalSignal:
    """Add white Gaussian noise so that 10 log10(P_AC / σ²) equals the SNR

    P_AC is the variance of the noiseless samples. The realization depends only on
    the signal, the SNR and the seed.
    """
    if len(signal) < 2:
        raise InvalidArgumentError("Noise needs a signal with at least 2 samples")
    if noise.noiseless:
        return signal
    samples = signal.samples
    p_ac = float(np.var(samples))
    if p_ac <= np.finfo(float).eps * float(np.mean(samples**2)):
        raise DegenerateSignalError("The signal has no AC power to set the noise level")
    sigma = math.sqrt(p_ac / 10 ** (noise.snr_db / 10))
    logging.getLogger(__name__).debug(
        "Noise sigma %g for %s dB (seed %d)", sigma, noise.snr_db, noise.seed
    )
    rng = np.random.default_rng(noise.seed)
    return signal.with_samples(samples + rng.normal(0.0, sigma, samples.size))


__all__ = [
    'SPEED_OF_LIGHT',
    'FdTofError',
    'InvalidArgumentError',
    'DegenerateSignalError',
    'PathComponent',
    'ScenePoint',
    'FrequencySweep',
    'DomainKind',
    'PrimalSignal',
    'NoiseSpec',
    'bucket_taus',
    'synth_phase_correlation',
    'synth_fd_sweep',
    'synth_slow_sweep',
    'add_noise',
]
