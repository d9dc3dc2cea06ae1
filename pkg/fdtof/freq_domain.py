import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import scipy.optimize
import scipy.signal

from .signal_model import (
    SPEED_OF_LIGHT,
    DegenerateSignalError,
    DomainKind,
    FdTofError,
    FrequencySweep,
    InvalidArgumentError,
    NoiseSpec,
    PrimalSignal,
    ScenePoint,
    add_noise,
    synth_fd_sweep,
)

__doc__ = """Frequency-domain time of flight.

Sweeping the modulation frequency turns every return into a tone along the
sweep. The dual coordinate (kappa) is expressed in seconds of delay, so a path
of length z shows up at kappa = z / c and its depth is kappa c / 2.

## Estimators
- `estimate_tone_interp`: periodogram peak refined by parabolic interpolation
  on the log-magnitude.
- `estimate_tone_qf`: iterative Quinn-Fernandes refinement of a single tone.
- `separate_multipath`: one refined peak per detected return.

## Resolution
`axial_resolution` gives the bandwidth-limited path separation 1.2 c / B,
`merge_threshold` measures it on synthesized two-tone sums.
"""

WINDOWS = ('hann', 'boxcar')
"""Largest sidelobe of each window, relative to the main lobe, with some margin"""
SIDELOBE_FLOOR = {'hann': 0.1, 'boxcar': 0.5}
MEDIAN_FACTOR = 6.0
QF_MAX_ITERATIONS = 20
QF_TOLERANCE = 1e-6

NOT_CONVERGED = 'not_converged'


class InsufficientBandwidthError(FdTofError):
    """Less than one cycle of the tone fits in the sweep"""

    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Magnitude over the dual coordinate, in seconds of delay"""

    kappa: np.ndarray
    magnitude: np.ndarray
    spacing: float
    n_samples: int
    window: str = 'hann'

    def __post_init__(self):
        if self.kappa.shape != self.magnitude.shape:
            raise InvalidArgumentError("Kappa and magnitude lengths differ")

    @property
    def bin_width(self) -> float:
        return float(self.kappa[1] - self.kappa[0])

    @property
    def resolution(self) -> float:
        """Width of one bin without zero padding"""
        return 1.0 / (self.n_samples * self.spacing)

    def median(self) -> float:
        return float(np.median(self.magnitude))

    def peak_quality(self, k: int) -> float:
        """Magnitude of bin k over the spectral median, at least 1"""
        median = self.median()
        if median <= 0:
            return math.inf
        return max(1.0, float(self.magnitude[k]) / median)


@dataclass(frozen=True)
class TonePeak:
    """One tone found along the sweep: depth in meters, amplitude of the tone"""

    depth: float
    amplitude: float
    peak_quality: float
    iterations: int = 0
    flags: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.depth >= 0:
            raise InvalidArgumentError(f"Invalid depth {self.depth}")

    @property
    def path_length(self) -> float:
        return 2.0 * self.depth

    @property
    def delay(self) -> float:
        return self.path_length / SPEED_OF_LIGHT

    def flagged(self, flag: str) -> bool:
        return flag in self.flags


def delay_to_depth(delay: float) -> float:
    return max(delay, 0.0) * SPEED_OF_LIGHT / 2.0


def sweep_spacing(signal: PrimalSignal, min_samples: int = 8) -> float:
    """Check the signal is a uniform frequency sweep and return its spacing"""
    if signal.domain_kind != DomainKind.MODULATION_FREQUENCY:
        raise InvalidArgumentError(f"Expected a frequency sweep, got {signal.domain_kind.value}")
    if len(signal) < min_samples:
        raise InvalidArgumentError(f"At least {min_samples} samples needed, got {len(signal)}")
    steps = np.diff(signal.coordinates)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise InvalidArgumentError("Frequency samples are not uniformly spaced")
    return float(signal.coordinates[-1] - signal.coordinates[0]) / (len(signal) - 1)


def check_cycles(signal: PrimalSignal, delay: float) -> None:
    """Require one full cycle of the tone within the swept bandwidth"""
    bandwidth = float(signal.coordinates[-1] - signal.coordinates[0])
    cycles = bandwidth * delay
    negative = signal.samples < signal.samples.mean()
    crossings = int(np.count_nonzero(negative[1:] != negative[:-1]))
    if cycles < 1 or crossings < 2:
        raise InsufficientBandwidthError(
            "Tone at %.3g s spans %.2f cycles over %.3g Hz (%d zero crossings)"
            % (delay, cycles, bandwidth, crossings)
        )


#######################################
# SPECTRUM


def periodogram(
    signal: PrimalSignal, zero_pad_factor: int = 4, window: str = 'hann'
) -> Spectrum:
    """Magnitude spectrum of a frequency sweep

    The mean is removed first. Magnitudes are scaled by the window's coherent gain,
    so a tone of amplitude A peaks near A. Zero padding only refines the grid.
    """
    spacing = sweep_spacing(signal)
    if zero_pad_factor < 1 or int(zero_pad_factor) != zero_pad_factor:
        raise InvalidArgumentError(f"Invalid zero padding factor {zero_pad_factor}")
    if window not in WINDOWS:
        raise InvalidArgumentError(f"Unknown window {window!r}, use one of {WINDOWS}")
    n = len(signal)
    taper = scipy.signal.get_window(window, n, fftbins=False)
    centered = signal.samples - signal.samples.mean()
    n_fft = n * int(zero_pad_factor)
    magnitude = 2.0 * np.abs(np.fft.rfft(centered * taper, n_fft)) / taper.sum()
    kappa = np.fft.rfftfreq(n_fft, d=spacing)
    return Spectrum(kappa, magnitude, spacing, n, window)


def _parabolic(log_mag: np.ndarray, k: int) -> Tuple[float, float]:
    """Vertex of the parabola through bins k-1, k, k+1 as (offset, height)"""
    if k <= 0 or k >= log_mag.size - 1:
        return 0.0, float(log_mag[k])
    a, b, c = log_mag[k - 1], log_mag[k], log_mag[k + 1]
    denom = a - 2 * b + c
    if denom == 0:
        return 0.0, float(b)
    offset = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return offset, float(b - 0.25 * (a - c) * offset)


def refine_peak(spectrum: Spectrum, k: int) -> Tuple[float, float]:
    """Interpolated delay and amplitude of the peak at bin k"""
    log_mag = np.log(np.maximum(spectrum.magnitude, np.finfo(float).tiny))
    offset, height = _parabolic(log_mag, k)
    return float(spectrum.kappa[k]) + offset * spectrum.bin_width, math.exp(height)


def find_spectral_peaks(
    spectrum: Spectrum,
    max_k: int,
    median_factor: float = MEDIAN_FACTOR,
    relative_floor: Optional[float] = None,
    max_delay: Optional[float] = None,
) -> np.ndarray:
    """Bins of the strongest local maxima, sorted by delay

    A peak must exceed median_factor times the spectral median and a fraction of
    the spectrum maximum that clears the window sidelobes.
    """
    magnitude = spectrum.magnitude
    top = float(magnitude.max())
    if top <= 0:
        return np.array([], dtype=int)
    if relative_floor is None:
        relative_floor = SIDELOBE_FLOOR[spectrum.window]
    height = max(median_factor * spectrum.median(), relative_floor * top)
    peaks, _ = scipy.signal.find_peaks(magnitude, height=height)
    if max_delay is not None:
        peaks = peaks[spectrum.kappa[peaks] <= max_delay]
    strongest = peaks[np.argsort(magnitude[peaks])[::-1][:max_k]]
    logging.getLogger(__name__).debug(
        "Peaks above %g: %s", height, spectrum.kappa[np.sort(strongest)]
    )
    return np.sort(strongest)


#######################################
# SINGLE TONE


def estimate_tone_interp(
    signal: PrimalSignal, zero_pad_factor: int = 4, window: str = 'hann'
) -> TonePeak:
    """Strongest tone of the periodogram, refined by parabolic interpolation"""
    spectrum = periodogram(signal, zero_pad_factor, window)
    if spectrum.magnitude.max() <= 0:
        raise DegenerateSignalError("The sweep carries no tone")
    k = int(np.argmax(spectrum.magnitude[1:])) + 1
    delay, amplitude = refine_peak(spectrum, k)
    check_cycles(signal, delay)
    return TonePeak(delay_to_depth(delay), amplitude, spectrum.peak_quality(k))


def _tone_basis(n: int, omega: float) -> np.ndarray:
    t = np.arange(n)
    return np.column_stack([np.cos(omega * t), np.sin(omega * t), np.ones(n)])


def _tone_fit(samples: np.ndarray, omega: float) -> Tuple[float, float]:
    """Amplitude and residual energy of the best sinusoid plus offset at omega"""
    basis = _tone_basis(samples.size, omega)
    coef, *_ = np.linalg.lstsq(basis, samples, rcond=None)
    residual = samples - basis @ coef
    return float(np.hypot(coef[0], coef[1])), float(np.dot(residual, residual))


def _analytic(samples: np.ndarray, omega: float) -> np.ndarray:
    """Complex tone left after removing the offset and the negative-frequency image at omega"""
    t = np.arange(samples.size)
    coef, *_ = np.linalg.lstsq(_tone_basis(samples.size, omega), samples, rcond=None)
    image = 0.5 * (coef[0] + 1j * coef[1]) * np.exp(-1j * omega * t)
    return samples - coef[2] - image


def _polish(samples: np.ndarray, omega: float, bin_omega: float) -> float:
    """Least squares frequency within one bin of omega"""
    lo = max(-1.0, (1e-9 - omega) / bin_omega)
    hi = min(1.0, (math.pi - 1e-9 - omega) / bin_omega)
    result = scipy.optimize.minimize_scalar(
        lambda u: _tone_fit(samples, omega + u * bin_omega)[1],
        bounds=(lo, hi),
        method='bounded',
        options={'xatol': 1e-10},
    )
    return omega + float(result.x) * bin_omega if result.success else omega


def estimate_tone_qf(
    signal: PrimalSignal,
    init: Optional[float] = None,
    max_iterations: int = QF_MAX_ITERATIONS,
    tolerance: float = QF_TOLERANCE,
    zero_pad_factor: int = 4,
    window: str = 'hann',
) -> TonePeak:
    """Quinn-Fernandes single-tone estimate

    The iteration runs on the analytic sweep: the offset and the negative-frequency
    image fitted at the current frequency are removed, which leaves a complex tone.
    Each step filters it through the resonator 1 / (1 - b z^-1) with b = exp(i omega)
    and moves b by twice the normalized correlation of the tone with the delayed
    filter output; the new omega is the argument of b. A noiseless tone is a fixed
    point, so starting on it converges at once. Iterations stop when omega moves by
    less than `tolerance` of a bin, and the result is polished by least squares
    within one bin.

    :param signal: Frequency sweep
    :param init: Initial tone position in seconds of delay (default: interpolated
           periodogram peak)
    :param max_iterations: Iteration cap, the last iterate is flagged when reached
    :param tolerance: Convergence threshold as a fraction of one bin
    :return: The refined tone, with a peak quality of 1 when it did not converge
    """
    log = logging.getLogger(__name__)
    spacing = sweep_spacing(signal)
    spectrum = periodogram(signal, zero_pad_factor, window)
    if init is None:
        start = estimate_tone_interp(signal, zero_pad_factor, window)
        init = start.delay
    k = int(np.clip(np.rint(init / spectrum.bin_width), 1, spectrum.kappa.size - 1))
    quality = spectrum.peak_quality(k)

    y = signal.samples - signal.samples.mean()
    n = y.size
    omega = 2 * math.pi * init * spacing
    if not 0 < omega < math.pi:
        raise InvalidArgumentError(f"Initial delay {init} outside the sampled band")
    bin_omega = 2 * math.pi / n
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        tone = _analytic(y, omega)
        b = complex(math.cos(omega), math.sin(omega))
        xi = scipy.signal.lfilter([1.0], [1.0, -b], tone)
        prev = np.concatenate(([0.0], xi[:-1]))
        b += 2 * complex(np.vdot(prev, tone)) / float(np.vdot(prev, prev).real)
        new_omega = min(abs(math.atan2(b.imag, b.real)), math.pi - 1e-9)
        log.debug("QF iteration %d: omega %.12g -> %.12g", iterations, omega, new_omega)
        step = abs(new_omega - omega)
        omega = max(new_omega, 1e-9)
        if step < tolerance * bin_omega:
            converged = True
            break

    flags: Tuple[str, ...] = ()
    if not converged:
        log.warning("Quinn-Fernandes did not converge in %d iterations", max_iterations)
        flags = (NOT_CONVERGED,)
        quality = 1.0
    omega = _polish(y, omega, bin_omega)
    delay = omega / (2 * math.pi * spacing)
    check_cycles(signal, delay)
    return TonePeak(delay_to_depth(delay), _tone_fit(y, omega)[0], quality, iterations, flags)


ESTIMATORS: Dict[str, Callable[..., TonePeak]] = {
    'interp': estimate_tone_interp,
    'qf': estimate_tone_qf,
}


#######################################
# MULTIPATH


def separate_multipath(
    signal: PrimalSignal,
    max_k: int = 2,
    zero_pad_factor: int = 4,
    window: str = 'hann',
    median_factor: float = MEDIAN_FACTOR,
    relative_floor: Optional[float] = None,
) -> List[TonePeak]:
    """Up to max_k returns found as separate tones, sorted by depth

    Each peak is refined like `estimate_tone_interp`. An empty list means no peak
    stood out of the spectrum.
    """
    if max_k < 1:
        raise InvalidArgumentError(f"max_k must be at least 1, got {max_k}")
    spectrum = periodogram(signal, zero_pad_factor, window)
    peaks = []
    for k in find_spectral_peaks(spectrum, max_k, median_factor, relative_floor):
        delay, amplitude = refine_peak(spectrum, int(k))
        peaks.append(TonePeak(delay_to_depth(delay), amplitude, spectrum.peak_quality(int(k))))
    peaks.sort(key=lambda p: p.depth)
    if peaks:
        check_cycles(signal, peaks[0].delay)
    return peaks


def axial_resolution(sweep: FrequencySweep) -> float:
    """Smallest resolvable path-length difference, 1.2 c / bandwidth"""
    bandwidth = sweep.bandwidth()
    if not bandwidth > 0:
        raise InvalidArgumentError("The sweep has no bandwidth")
    return 1.2 * SPEED_OF_LIGHT / bandwidth


def _centered_tones(sweep: FrequencySweep, delays) -> PrimalSignal:
    """Unit tones that are in phase at the centre of the sweep"""
    freqs = sweep.frequencies()
    samples = np.cos(2 * np.pi * np.outer(freqs - sweep.center, delays)).sum(axis=1)
    return PrimalSignal(DomainKind.MODULATION_FREQUENCY, freqs, samples)


def measured_fwhm(
    sweep: FrequencySweep, zero_pad_factor: int = 32, window: str = 'boxcar'
) -> float:
    """Full width at half maximum of a single tone's spectrum, as a path length"""
    delay = 0.25 / sweep.spacing
    spectrum = periodogram(_centered_tones(sweep, [delay]), zero_pad_factor, window)
    magnitude = spectrum.magnitude
    k = int(np.argmax(magnitude))
    half = magnitude[k] / 2
    lo = k
    while lo > 0 and magnitude[lo] > half:
        lo -= 1
    hi = k
    while hi < magnitude.size - 1 and magnitude[hi] > half:
        hi += 1
    kappa = spectrum.kappa
    left = np.interp(half, [magnitude[lo], magnitude[lo + 1]], [kappa[lo], kappa[lo + 1]])
    right = np.interp(half, [magnitude[hi], magnitude[hi - 1]], [kappa[hi], kappa[hi - 1]])
    return float(right - left) * SPEED_OF_LIGHT


def merge_threshold(
    sweep: FrequencySweep,
    zero_pad_factor: int = 32,
    window: str = 'boxcar',
    tolerance: float = 0.005,
) -> float:
    """Path separation below which two equal returns show a single peak

    Two unit tones, in phase at the sweep centre, are placed around a quarter of the
    sampled delay band and their separation is bisected.
    """
    log = logging.getLogger(__name__)
    bound = axial_resolution(sweep)
    center = 0.25 / sweep.spacing

    def resolved(separation: float) -> bool:
        half = separation / SPEED_OF_LIGHT / 2
        signal = _centered_tones(sweep, [center - half, center + half])
        peaks = separate_multipath(
            signal, 2, zero_pad_factor, window, relative_floor=SIDELOBE_FLOOR['boxcar']
        )
        return len(peaks) == 2

    lo, hi = 0.2 * bound, 3.0 * bound
    if resolved(lo) or not resolved(hi):
        raise FdTofError(f"No merge transition between {lo:.3g} and {hi:.3g} m")
    while hi - lo > tolerance * bound:
        mid = (lo + hi) / 2
        if resolved(mid):
            hi = mid
        else:
            lo = mid
    log.info("Merge threshold %.4g m (bound %.4g m)", hi, bound)
    return hi


#######################################
# PIPELINE


@dataclass(frozen=True)
class FdConfig:
    """Parameters of the frequency-domain arm"""

    sweep: FrequencySweep = FrequencySweep(10e6, 1e9, 256)
    estimator: str = 'qf'
    zero_pad_factor: int = 4
    window: str = 'hann'

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise InvalidArgumentError(
                f"Unknown estimator {self.estimator!r}, use one of {sorted(ESTIMATORS)}"
            )
        if self.window not in WINDOWS:
            raise InvalidArgumentError(f"Unknown window {self.window!r}")

    def estimate(self, signal: PrimalSignal) -> TonePeak:
        return ESTIMATORS[self.estimator](
            signal, zero_pad_factor=self.zero_pad_factor, window=self.window
        )


def estimate_depth_fd(
    point: ScenePoint, cfg: FdConfig = FdConfig(), noise: NoiseSpec = NoiseSpec()
) -> TonePeak:
    """Sweep a scene point, add noise and estimate its depth"""
    signal = add_noise(synth_fd_sweep(point, cfg.sweep), noise)
    return cfg.estimate(signal)


__all__ = [
    'WINDOWS',
    'InsufficientBandwidthError',
    'Spectrum',
    'TonePeak',
    'FdConfig',
    'ESTIMATORS',
    'periodogram',
    'refine_peak',
    'find_spectral_peaks',
    'estimate_tone_interp',
    'estimate_tone_qf',
    'separate_multipath',
    'axial_resolution',
    'measured_fwhm',
    'merge_threshold',
    'estimate_depth_fd',
]
