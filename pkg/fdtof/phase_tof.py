import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence, Tuple, Union

import numpy as np

from .signal_model import (
    SPEED_OF_LIGHT,
    InvalidArgumentError,
    NoiseSpec,
    ScenePoint,
    add_noise,
    bucket_taus,
    synth_phase_correlation,
)

__doc__ = """Conventional phase-based time of flight.

Phase and amplitude come from N-bucket correlation samples, depth from
d = c φ / (4π f). Depth is only known modulo the ambiguity distance c / (2f).
"""

TWO_PI = 2 * math.pi


def _canonical_phase(phase: float) -> float:
    phase = math.fmod(phase, TWO_PI)
    if phase < 0:
        phase += TWO_PI
    # fmod of a tiny negative value rounds back to 2π
    return 0.0 if phase >= TWO_PI else phase


@dataclass(frozen=True)
class Phasor:
    """Amplitude and phase of a sinusoid, phase in [0, 2π)"""

    amplitude: float
    phase: float
    degenerate: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.amplitude) and math.isfinite(self.phase)):
            raise InvalidArgumentError("Phasor values must be finite")
        if self.amplitude < 0:
            raise InvalidArgumentError(f"Negative phasor amplitude {self.amplitude}")
        object.__setattr__(self, 'phase', _canonical_phase(self.phase))

    @classmethod
    def from_complex(cls, value: complex, scale: float = 1.0) -> "Phasor":
        """Phasor of a complex value, degenerate when it vanishes against scale"""
        if abs(value) <= 1e-12 * scale:
            return cls(0.0, 0.0, degenerate=True)
        return cls(abs(value), math.atan2(value.imag, value.real))

    def to_complex(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class DepthEstimate:
    """Depth of one scene point with its amplitude and a confidence in [0, 1]"""

    depth: float
    amplitude: float
    wrapped: bool = False
    confidence: float = 1.0
    degenerate: bool = False

    def __post_init__(self):
        if not self.depth >= 0:
            raise InvalidArgumentError(f"Invalid depth {self.depth}")
        if not 0 <= self.confidence <= 1:
            raise InvalidArgumentError(f"Confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PhaseConfig:
    """Parameters of the phase-TOF arm"""

    f_mod: float = 50e6
    reference_amplitude: float = 0.5

    def __post_init__(self):
        if not (self.f_mod > 0 and math.isfinite(self.f_mod)):
            raise InvalidArgumentError(f"Modulation frequency must be positive, got {self.f_mod}")
        if not self.reference_amplitude > 0:
            raise InvalidArgumentError("Reference amplitude must be positive")


def four_bucket(c1: float, c2: float, c3: float, c4: float) -> Phasor:
    """Phasor from correlation samples at 2πfτ = 0, π/2, π, 3π/2

    The amplitude is half the path amplitude, (1/2) sqrt((c4-c2)² + (c1-c3)²).
    """
    if not all(math.isfinite(c) for c in (c1, c2, c3, c4)):
        raise InvalidArgumentError("Bucket samples must be finite")
    y = c4 - c2
    x = c1 - c3
    if x == 0 and y == 0:
        return Phasor(0.0, 0.0, degenerate=True)
    return Phasor(0.5 * math.hypot(x, y), math.atan2(y, x))


def n_bucket(samples: Sequence[float]) -> Tuple[Phasor, float]:
    """Phasor and ambient from N >= 3 samples evenly spread over one period

    Three samples are the minimum that pin down amplitude, phase and ambient.
    For four samples the phasor equals four_bucket.
    """
    values = np.asarray(samples, dtype=float)
    if values.ndim != 1 or values.size < 3:
        raise InvalidArgumentError("At least 3 bucket samples are needed")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("Bucket samples must be finite")
    first = complex(np.fft.fft(values)[1]) * 2 / values.size
    phasor = Phasor.from_complex(first, scale=float(np.abs(values).sum()) or 1.0)
    return phasor, float(values.mean())


def phase_to_depth(
    ph: Phasor, f_mod: float, reference_amplitude: float = 0.5
) -> DepthEstimate:
    """Depth from a single-frequency phase: d = c φ / (4π f)

    The result cannot tell if the phase wrapped, `wrapped` stays false.
    """
    if not f_mod > 0:
        raise InvalidArgumentError(f"Modulation frequency must be positive, got {f_mod}")
    depth = SPEED_OF_LIGHT * ph.phase / (2 * TWO_PI * f_mod)
    confidence = 0.0 if ph.degenerate else min(1.0, ph.amplitude / reference_amplitude)
    return DepthEstimate(
        depth=depth, amplitude=ph.amplitude, confidence=confidence, degenerate=ph.degenerate
    )


def ambiguity_distance(f_mod: float) -> float:
    """Depth beyond which a single-frequency phase wraps: c / (2f)"""
    if not f_mod > 0:
        raise InvalidArgumentError(f"Modulation frequency must be positive, got {f_mod}")
    return SPEED_OF_LIGHT / (2 * f_mod)


def depth_per_radian(f_mod: float) -> float:
    """Depth change caused by one radian of phase error, c / (4π f)"""
    return ambiguity_distance(f_mod) / TWO_PI


def mark_wrapped(estimate: DepthEstimate, true_depth: float, f_mod: float) -> DepthEstimate:
    """Set the wrapped flag using a known true depth"""
    return replace(estimate, wrapped=true_depth >= ambiguity_distance(f_mod))


def multipath_phasor(paths: Sequence[Union[Phasor, Tuple[float, float]]]) -> Phasor:
    """Phasor measured when several returns interfere

    The returns add as complex numbers, the phase is the quadrant-aware arctangent
    of Σ α sin φ over Σ α cos φ.
    """
    if not paths:
        raise InvalidArgumentError("At least one path is needed")
    total = 0j
    scale = 0.0
    for path in paths:
        if isinstance(path, Phasor):
            total += path.to_complex()
            scale += path.amplitude
        else:
            amplitude, phase = path
            total += amplitude * complex(math.cos(phase), math.sin(phase))
            scale += abs(amplitude)
    return Phasor.from_complex(total, scale=scale or 1.0)


def estimate_depth_phase(
    point: ScenePoint,
    f_mod: float,
    noise: NoiseSpec = NoiseSpec(),
    reference_amplitude: float = 0.5,
) -> DepthEstimate:
    """Four-bucket capture of a scene point followed by phase-to-depth conversion"""
    signal = synth_phase_correlation(point, f_mod, bucket_taus(f_mod, 4))
    signal = add_noise(signal, noise)
    ph = four_bucket(*signal.samples)
    estimate = phase_to_depth(ph, f_mod, reference_amplitude)
    logging.getLogger(__name__).debug(
        "Phase %.6f rad at %g Hz -> depth %.6f m", ph.phase, f_mod, estimate.depth
    )
    return estimate


__all__ = [
    'Phasor',
    'DepthEstimate',
    'PhaseConfig',
    'four_bucket',
    'n_bucket',
    'phase_to_depth',
    'ambiguity_distance',
    'depth_per_radian',
    'mark_wrapped',
    'multipath_phasor',
    'estimate_depth_phase',
]
