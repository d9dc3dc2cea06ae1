import logging
import math
from typing import Union

from .freq_domain import FdConfig, InsufficientBandwidthError, estimate_depth_fd  # noqa
from .phase_tof import PhaseConfig, estimate_depth_phase  # noqa
from .signal_model import (  # noqa
    SPEED_OF_LIGHT,
    DegenerateSignalError,
    FdTofError,
    FrequencySweep,
    InvalidArgumentError,
    NoiseSpec,
    PathComponent,
    ScenePoint,
    add_noise,
    synth_slow_sweep,
)
from .slow_tof import SlowCaptureConfig, estimate_depth_slow  # noqa

__doc__ = """Frequency-domain time of flight simulation and depth estimation."""


def measure_depth(
    depth: float,
    mode: str = 'fd',
    snr_db: float = math.inf,
    seed: int = 0,
    sweep: Union[str, FrequencySweep, None] = None,
    f_mod: float = 50e6,
    exposure: float = 1e-3,
    estimator: str = 'qf',
    **kw,
) -> float:
    """Simulate one return at a depth and estimate it back.

    Modes:
    - phase: four-bucket phase TOF at f_mod, depth wraps beyond c / (2 f_mod)
    - fd: frequency sweep estimated with `estimator` (interp or qf)
    - slow: integrating camera sweep with the given exposure

    :param depth: The true depth in meters
    :param mode: phase, fd or slow
    :param snr_db: AC signal to noise ratio (default: noiseless)
    :param seed: Noise seed
    :param sweep: Sweep as a FrequencySweep or "f_min:f_max:n" (default: 10 MHz to 1 GHz,
           256 samples, 4096 for slow)
    :return: The estimated depth in meters
    """
    if kw:
        logging.warning('Unknown measure_depth() parameters: %s', list(kw.keys()))
    if sweep is None:
        sweep = FrequencySweep(10e6, 1e9, 4096 if mode == 'slow' else 256)
    elif isinstance(sweep, str):
        sweep = FrequencySweep.parse(sweep)
    point = ScenePoint((PathComponent.from_depth(depth),))
    noise = NoiseSpec(snr_db, seed)
    if mode == 'phase':
        return estimate_depth_phase(point, f_mod, noise).depth
    if mode == 'fd':
        return estimate_depth_fd(point, FdConfig(sweep, estimator), noise).depth
    if mode == 'slow':
        signal = add_noise(synth_slow_sweep(point, sweep, exposure), noise)
        return estimate_depth_slow(signal, SlowCaptureConfig(exposure, sweep)).depth
    raise InvalidArgumentError(f"Unknown mode {mode!r}")


__all__ = [
    'SPEED_OF_LIGHT',
    'FdTofError',
    'InvalidArgumentError',
    'DegenerateSignalError',
    'InsufficientBandwidthError',
    'FrequencySweep',
    'NoiseSpec',
    'PathComponent',
    'ScenePoint',
    'PhaseConfig',
    'FdConfig',
    'SlowCaptureConfig',
    'measure_depth',
]
