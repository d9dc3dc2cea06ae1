import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.optimize
import scipy.signal

from .freq_domain import (
    Spectrum,
    TonePeak,
    check_cycles,
    delay_to_depth,
    find_spectral_peaks,
    periodogram,
    refine_peak,
    sweep_spacing,
)
from .signal_model import FdTofError, FrequencySweep, InvalidArgumentError, PrimalSignal

__doc__ = """Time of flight with a conventional integrating camera.

Integrating over an exposure t_E turns each return into two tones along the
sweep, at delays z/c and z/c + t_E, under an envelope decaying as 1/f.
Multiplying by 2πf flattens the envelope, the depth tone is the lower one.
"""

DEGENERATE = 'degenerate'
EXPOSURE_CONSISTENT = 'exposure_consistent'
EXPOSURE_OUT_OF_BAND = 'exposure_out_of_band'
EXPOSURE_UNRESOLVED = 'exposure_unresolved'

"""Envelope maxima kept for the decay fit, relative to the upper envelope"""
ENVELOPE_TOLERANCE = 0.95


class InconsistentExposureError(FdTofError):
    """The two tones of a return are not separated by the exposure"""

    pass


class InsufficientCyclesError(FdTofError):
    """Not enough envelope maxima to fit a decay"""

    pass


@dataclass(frozen=True)
class SlowCaptureConfig:
    """Exposure and sweep of an integrating camera capture

    The exposure is the same for every frame of the sweep. `max_delay` bounds the
    depth search band; by default it stays clear of the exposure tone.
    """

    exposure: float
    sweep: FrequencySweep
    max_delay: Optional[float] = None
    zero_pad_factor: int = 4

    def __post_init__(self):
        if not (math.isfinite(self.exposure) and self.exposure > 0):
            raise InvalidArgumentError(f"Exposure must be positive, got {self.exposure}")
        if self.max_delay is not None and not self.max_delay > 0:
            raise InvalidArgumentError(f"Invalid max_delay {self.max_delay}")


def exposure_alias_delay(cfg: SlowCaptureConfig) -> float:
    """Delay where the exposure tone appears on the sampled sweep"""
    spacing = cfg.sweep.spacing
    cycles = (cfg.exposure * spacing) % 1.0
    return min(cycles, 1.0 - cycles) / spacing


def search_band(cfg: SlowCaptureConfig) -> Tuple[float, bool]:
    """Upper delay of the depth search and whether the exposure tone lies inside it"""
    sweep = cfg.sweep
    nyquist = 0.5 / sweep.spacing
    guard = 4.0 / sweep.bandwidth()
    if cfg.max_delay is not None:
        band = min(cfg.max_delay, nyquist)
        return band, cfg.exposure + guard <= band
    if cfg.exposure + guard < nyquist:
        return nyquist, True
    # the exposure tone of a return at z/c folds to alias +- z/c
    band = exposure_alias_delay(cfg) / 2
    if band < guard:
        raise InvalidArgumentError(
            "Exposure %g s aliases to %.3g s on this sweep, no room for depths; "
            "change the sweep sampling or set max_delay" % (cfg.exposure, 2 * band)
        )
    return band, False


def _whiten(signal: PrimalSignal, cfg: SlowCaptureConfig) -> Tuple[PrimalSignal, Spectrum]:
    sweep_spacing(signal)
    freqs = cfg.sweep.frequencies()
    if freqs.size != len(signal) or not np.allclose(signal.coordinates, freqs, rtol=1e-9):
        raise InvalidArgumentError(f"The signal was not sampled on the sweep {cfg.sweep}")
    # the ambient term becomes a ramp after whitening, detrend removes it
    whitened = scipy.signal.detrend(2 * np.pi * freqs * signal.samples, type='linear')
    flat = signal.with_samples(whitened)
    return flat, periodogram(flat, cfg.zero_pad_factor, 'hann')


def _in_band_peaks(
    signal: PrimalSignal, cfg: SlowCaptureConfig
) -> Tuple[PrimalSignal, Spectrum, List[Tuple[float, float, int]], bool]:
    """Whitened signal, its spectrum, every in-band (delay, amplitude, bin) and
    whether the exposure tone is in band"""
    flat, spectrum = _whiten(signal, cfg)
    band, exposure_in_band = search_band(cfg)
    found = []
    for k in find_spectral_peaks(spectrum, spectrum.kappa.size, max_delay=band):
        delay, amplitude = refine_peak(spectrum, int(k))
        found.append((delay, amplitude, int(k)))
    return flat, spectrum, found, exposure_in_band


def estimate_depth_slow(signal: PrimalSignal, cfg: SlowCaptureConfig) -> TonePeak:
    """Depth of a single return from an integrating-camera sweep

    The samples are whitened by 2πf, the ambient ramp is removed and the lower of
    the two tones gives z/c. When the exposure tone also falls in the search band,
    its distance to the depth tone must match the exposure.
    """
    log = logging.getLogger(__name__)
    flat, spectrum, found, exposure_in_band = _in_band_peaks(signal, cfg)
    if not found:
        log.info("No tone below the exposure band, reporting zero depth")
        return TonePeak(0.0, 0.0, 1.0, flags=(DEGENERATE,))
    delay, amplitude, k = found[0]
    quality = spectrum.peak_quality(k)
    flags: Tuple[str, ...] = (EXPOSURE_OUT_OF_BAND,)
    if exposure_in_band:
        tolerance = max(0.01 * cfg.exposure, spectrum.resolution)
        if abs(delay - cfg.exposure) <= tolerance:
            return TonePeak(0.0, amplitude, quality, flags=(DEGENERATE, EXPOSURE_CONSISTENT))
        partners = [d for d, _, _ in found[1:] if abs(d - delay - cfg.exposure) <= tolerance]
        if partners:
            flags = (EXPOSURE_CONSISTENT,)
        elif cfg.exposure < 2 * spectrum.resolution:
            flags = (EXPOSURE_UNRESOLVED,)
        else:
            raise InconsistentExposureError(
                "No tone at %.4g s to match the depth tone at %.4g s with exposure %g s"
                % (delay + cfg.exposure, delay, cfg.exposure)
            )
    check_cycles(flat, delay)
    log.debug("Slow TOF tone at %.6g s, flags %s", delay, flags)
    return TonePeak(delay_to_depth(delay), amplitude, quality, flags=flags)


def tone_delays(signal: PrimalSignal, cfg: SlowCaptureConfig) -> List[float]:
    """Delays of every tone in the search band, ascending"""
    return [delay for delay, _, _ in _in_band_peaks(signal, cfg)[2]]


def separate_multipath_slow(
    signal: PrimalSignal, cfg: SlowCaptureConfig, max_k: int = 3
) -> List[TonePeak]:
    """Depths of up to max_k returns, sorted, exposure tones excluded"""
    if max_k < 1:
        raise InvalidArgumentError(f"max_k must be at least 1, got {max_k}")
    flat, spectrum, found, exposure_in_band = _in_band_peaks(signal, cfg)
    if exposure_in_band:
        # drop the exposure partner of every depth tone
        delays = [d for d, _, _ in found]
        tolerance = max(0.01 * cfg.exposure, spectrum.resolution)
        found = [
            p for p in found if not any(abs(p[0] - d - cfg.exposure) <= tolerance for d in delays)
        ]
    found = sorted(found, key=lambda p: -spectrum.magnitude[p[2]])[:max_k]
    peaks = sorted(
        (TonePeak(delay_to_depth(d), a, spectrum.peak_quality(k)) for d, a, k in found),
        key=lambda p: p.depth,
    )
    if peaks:
        check_cycles(flat, peaks[0].delay)
    return peaks


def verify_amplitude_decay(signal: PrimalSignal) -> float:
    """Log-log slope of the AC envelope along the sweep

    Local maxima of |AC| are taken, the tightest line above them in log-log space
    is found by linear programming and the maxima within a few percent of that
    line are fitted by least squares. A 1/f envelope gives -1, a flat one 0.
    """
    sweep_spacing(signal)
    ac = np.abs(signal.samples - np.median(signal.samples))
    maxima, _ = scipy.signal.find_peaks(ac)
    if maxima.size < 3:
        raise InsufficientCyclesError(f"Only {maxima.size} envelope maxima in the sweep")
    x = np.log(signal.coordinates[maxima])
    y = np.log(ac[maxima])
    result = scipy.optimize.linprog(
        c=[x.sum(), x.size],
        A_ub=-np.column_stack([x, np.ones_like(x)]),
        b_ub=-y,
        bounds=[(None, None), (None, None)],
        method='highs',
    )
    if not result.success:
        raise FdTofError(f"Upper envelope fit failed: {result.message}")
    slope, intercept = result.x
    near = y >= slope * x + intercept + math.log(ENVELOPE_TOLERANCE)
    if np.count_nonzero(near) < 3:
        raise InsufficientCyclesError("Fewer than 3 maxima lie on the envelope")
    exponent = float(np.polyfit(x[near], y[near], 1)[0])
    logging.getLogger(__name__).debug(
        "Decay exponent %.4f from %d of %d maxima", exponent, np.count_nonzero(near), x.size
    )
    return exponent


__all__ = [
    'InconsistentExposureError',
    'InsufficientCyclesError',
    'SlowCaptureConfig',
    'exposure_alias_delay',
    'search_band',
    'estimate_depth_slow',
    'tone_delays',
    'separate_multipath_slow',
    'verify_amplitude_decay',
]
