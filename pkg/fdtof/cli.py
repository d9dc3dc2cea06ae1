import argparse
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .format import (
    FormatError,
    atomic_write,
    decode_depth_pgm,
    decode_json,
    decode_signals,
    encode_amplitude_pgm,
    encode_depth_pgm,
    format_json,
    format_report,
    format_signals,
    report_document,
)
from .freq_domain import (
    FdConfig,
    axial_resolution,
    measured_fwhm,
    merge_threshold,
)
from .phase_tof import PhaseConfig, ambiguity_distance, four_bucket, n_bucket, phase_to_depth
from .scene_sim import (
    CaptureMode,
    FdTof,
    PhaseTof,
    SceneSpec,
    SlowTof,
    constant_baseline,
    depth_metrics,
    psnr,
    reconstruct,
    simulate_capture,
    snr_sweep_experiment,
    synthesize,
    trial_seed,
)
from .signal_model import (
    DomainKind,
    FdTofError,
    FrequencySweep,
    InvalidArgumentError,
    NoiseSpec,
    PathComponent,
    PrimalSignal,
    ScenePoint,
    add_noise,
)
from .slow_tof import (
    SlowCaptureConfig,
    estimate_depth_slow,
    search_band,
    verify_amplitude_decay,
)

__doc__ = """Command line of the toolkit.

Every run resolves its parameters from the command defaults, an optional
`--config` JSON document and the explicit flags, in that order, and records
them as `<out>.config.json` next to its outputs.
Runs that add noise (a finite `--snr`) need an explicit `--seed`.

Exit codes: 0 on success, 1 when the run failed (an `<out>.error.json` document
is written), 2 on usage or configuration errors.
"""

log = logging.getLogger(__name__)

MODE_ESTIMATORS = {'phase': 'four_bucket', 'fd': 'qf', 'slow': 'slow'}

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'synth': {
        'mode': 'fd',
        'depth': [],
        'amplitude': 1.0,
        'ambient': 0.0,
        'sweep': '10e6:1e9:256',
        'f_mod': 50e6,
        'exposure': 1e-3,
        'snr': math.inf,
        'seed': None,
        'out': None,
    },
    'estimate': {
        'input': None,
        'mode': None,
        'estimator': None,
        'f_mod': None,
        'exposure': 1e-3,
        'zero_pad': 4,
        'window': 'hann',
        'seed': 0,
        'out': None,
    },
    'compare': {
        'depth': [1.0],
        'snr': [1.0, 5.0, 10.0, 20.0, 30.0],
        'trials': 1000,
        'f_mod': 50e6,
        'sweep': '10e6:1e9:256',
        'estimator': 'qf',
        'seed': None,
        'out': None,
    },
    'scene': {
        'scene': None,
        'mode': 'fd',
        'estimator': None,
        'sweep': '10e6:1e9:256',
        'f_mod': 50e6,
        'exposure': 1e-3,
        'snr': math.inf,
        'zero_pad': 4,
        'window': 'hann',
        'seed': None,
        'out': None,
    },
    'resolve': {
        'sweep': '10e6:110e6:256',
        'window': 'boxcar',
        'seed': 0,
        'out': None,
    },
    'slowtof': {
        'depth': [],
        'amplitude': 1.0,
        'ambient': 0.0,
        'sweep': '10e6:1e9:4096',
        'exposure': 1e-3,
        'snr': math.inf,
        'seed': None,
        'out': None,
    },
}

OPTION_TYPES: Dict[str, Callable[[Any], Any]] = {
    'depth': float,
    'amplitude': float,
    'ambient': float,
    'f_mod': float,
    'exposure': float,
    'snr': float,
    'trials': int,
    'seed': int,
    'zero_pad': int,
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters of one run"""

    command: str
    parameters: Dict[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.parameters[key]

    def to_json(self) -> Dict[str, Any]:
        return {'command': self.command, 'parameters': self.parameters}


#######################################
# CONFIGURATION


def _coerce(key: str, value: Any, default: Any) -> Any:
    """Convert a configuration value to the type of its option, lists for list options"""
    convert = OPTION_TYPES.get(key, str)
    if isinstance(default, list) and not isinstance(value, list):
        value = [value]
    elif isinstance(value, list) and not isinstance(default, list):
        raise InvalidArgumentError(f"{key} takes a single value, got {value!r}")
    try:
        if isinstance(value, list):
            return [convert(v) for v in value]
        return None if value is None else convert(value)
    except (TypeError, ValueError) as e:
        raise InvalidArgumentError(f"Invalid value for {key}: {value!r}") from e


def _noisy(snr: Any) -> bool:
    levels = snr if isinstance(snr, list) else [snr]
    return any(level is not None and level != math.inf for level in levels)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Command defaults, then the --config document, then explicit flags"""
    parameters = dict(COMMAND_DEFAULTS[args.command])
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise InvalidArgumentError(f"Cannot read configuration {args.config}: {e}") from e
        document = decode_json(text, args.config)
        if isinstance(document, dict) and 'parameters' in document:
            # a recorded run configuration
            document = document['parameters']
        if not isinstance(document, dict):
            raise FormatError(f"Configuration {args.config} must be a JSON object")
        for key, value in document.items():
            name = key.lstrip('-').replace('-', '_')
            if name not in parameters:
                log.warning("Ignoring unknown configuration key %r", key)
                continue
            parameters[name] = _coerce(name, value, COMMAND_DEFAULTS[args.command][name])
    for name, value in vars(args).items():
        if name in parameters and value is not None:
            parameters[name] = value
    if not parameters.get('out'):
        raise InvalidArgumentError("An output path is required (--out)")
    if parameters['seed'] is None:
        if _noisy(parameters.get('snr')):
            raise InvalidArgumentError("A noisy run needs an explicit --seed")
        parameters['seed'] = 0
    if parameters['seed'] < 0:
        raise InvalidArgumentError("The seed must be non-negative")
    return RunConfig(args.command, parameters)


def _sibling(out: str, suffix: str) -> Path:
    """Path next to out sharing its stem"""
    path = Path(out)
    return path.with_name((path.stem if path.suffix else path.name) + suffix)


def _sweep(config: RunConfig) -> FrequencySweep:
    return FrequencySweep.parse(config['sweep'])


def _capture_mode(config: RunConfig) -> CaptureMode:
    mode = config['mode']
    if mode == 'phase':
        return PhaseTof(config['f_mod'])
    if mode == 'fd':
        return FdTof(_sweep(config))
    if mode == 'slow':
        return SlowTof(_sweep(config), config['exposure'])
    raise InvalidArgumentError(f"Unknown mode {mode!r}")


def _depths(config: RunConfig) -> List[float]:
    depths = config['depth']
    if not depths:
        raise InvalidArgumentError("At least one --depth is needed")
    return depths


def _point(config: RunConfig, depth: float) -> ScenePoint:
    return ScenePoint((PathComponent.from_depth(depth, config['amplitude']),), config['ambient'])


def _peak_document(peak) -> Dict[str, Any]:
    return {
        'depth_m': peak.depth,
        'delay_s': peak.delay,
        'amplitude': peak.amplitude,
        'peak_quality': peak.peak_quality,
        'iterations': peak.iterations,
        'flags': list(peak.flags),
    }


#######################################
# COMMANDS


def cmd_synth(config: RunConfig) -> None:
    """Write the signals of single-return points, one object id per depth"""
    mode = _capture_mode(config)
    signals = []
    for object_id, depth in enumerate(_depths(config)):
        signal = synthesize(_point(config, depth), mode)
        noise = NoiseSpec(config['snr'], trial_seed(config['seed'], object_id))
        signals.append((object_id, add_noise(signal, noise)))
    atomic_write(config['out'], format_signals(signals))
    log.info("Wrote %d %s signals to %s", len(signals), config['mode'], config['out'])


def _estimate_phase(signal: PrimalSignal, f_mod: Optional[float]) -> Dict[str, Any]:
    if f_mod is None:
        # buckets evenly spread over one period
        f_mod = 1.0 / (len(signal) * float(np.mean(np.diff(signal.coordinates))))
    if len(signal) == 4:
        phasor = four_bucket(*signal.samples)
        ambient = float(signal.samples.mean())
    else:
        phasor, ambient = n_bucket(signal.samples)
    estimate = phase_to_depth(phasor, f_mod)
    return {
        'depth_m': estimate.depth,
        'amplitude': estimate.amplitude,
        'phase_rad': phasor.phase,
        'ambient': ambient,
        'confidence': estimate.confidence,
        'degenerate': estimate.degenerate,
        'f_mod_hz': f_mod,
        'ambiguity_distance_m': ambiguity_distance(f_mod),
    }


def _sweep_of(signal: PrimalSignal) -> FrequencySweep:
    return FrequencySweep(signal.coordinates[0], signal.coordinates[-1], len(signal))


def cmd_estimate(config: RunConfig) -> None:
    """Estimate the depth of every object of a signal file"""
    try:
        text = Path(config['input'] or '').read_text()
    except OSError as e:
        raise InvalidArgumentError(f"Cannot read signals {config['input']!r}: {e}") from e
    signals = decode_signals(text)
    kinds = {signal.domain_kind for signal in signals.values()}
    if DomainKind.PHASE_SHIFT in kinds:
        mode = 'phase'
    else:
        mode = 'slow' if config['mode'] == 'slow' else 'fd'
    if config['mode'] not in (None, mode):
        raise InvalidArgumentError(f"A {config['mode']} estimate cannot read a {mode} signal")
    estimator = config['estimator'] or MODE_ESTIMATORS[mode]
    if mode == 'fd' and estimator not in ('interp', 'qf'):
        raise InvalidArgumentError(f"Estimator {estimator} cannot process a sweep")
    if mode != 'fd' and estimator != MODE_ESTIMATORS[mode]:
        raise InvalidArgumentError(f"Estimator {estimator} cannot process a {mode} signal")
    objects = []
    for object_id, signal in signals.items():
        if mode == 'phase':
            result = _estimate_phase(signal, config['f_mod'])
        elif mode == 'slow':
            cfg = SlowCaptureConfig(config['exposure'], _sweep_of(signal))
            result = _peak_document(estimate_depth_slow(signal, cfg))
        else:
            fd = FdConfig(_sweep_of(signal), estimator, config['zero_pad'], config['window'])
            result = _peak_document(fd.estimate(signal))
        result['object_id'] = object_id
        objects.append(result)
        log.info("Object %d: depth %.6f m", object_id, result['depth_m'])
    document = {'mode': mode, 'estimator': estimator, 'objects': objects}
    atomic_write(config['out'], format_json(document))


def cmd_compare(config: RunConfig) -> None:
    """Monte Carlo percent error of both arms across SNR levels"""
    if config['trials'] < 1:
        raise InvalidArgumentError(f"At least one trial is needed, got {config['trials']}")
    report = snr_sweep_experiment(
        _depths(config)[0],
        config['snr'],
        config['trials'],
        PhaseConfig(config['f_mod']),
        FdConfig(_sweep(config), config['estimator']),
        config['seed'],
    )
    atomic_write(_sibling(config['out'], '.csv'), format_report(report))
    atomic_write(_sibling(config['out'], '.json'), format_json(report_document(report)))


def cmd_scene(config: RunConfig) -> None:
    """Simulate and reconstruct a scene, write the maps and their metrics"""
    source = Path(config['scene'] or '')
    try:
        data = source.read_bytes()
    except OSError as e:
        raise InvalidArgumentError(f"Cannot read scene {str(source)!r}: {e}") from e
    if source.suffix.lower() == '.pgm':
        truth = decode_depth_pgm(data)
        scene = SceneSpec.from_depth_map(truth)
    else:
        scene = SceneSpec.from_json(decode_json(data.decode('utf-8', 'replace'), str(source)))
        truth = scene.truth()
    mode = _capture_mode(config)
    estimator = config['estimator'] or MODE_ESTIMATORS[config['mode']]
    cube = simulate_capture(scene, mode, NoiseSpec(config['snr'], config['seed']))
    depth_map = reconstruct(cube, estimator, config['zero_pad'], config['window'])
    metrics = depth_metrics(depth_map, truth)
    metrics['baseline_psnr_db'] = psnr(constant_baseline(truth), truth)
    out = Path(config['out'])
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / 'depth.pgm', encode_depth_pgm(depth_map))
    atomic_write(out / 'amplitude.pgm', encode_amplitude_pgm(depth_map.amplitude))
    atomic_write(out / 'metrics.json', format_json(metrics))
    log.info(
        "Scene %dx%d: PSNR %.2f dB, %.2f%% pixels within 1%%",
        scene.height,
        scene.width,
        metrics['psnr_db'],
        100 * metrics['fraction_within_1_percent'],
    )


def cmd_resolve(config: RunConfig) -> None:
    """Axial resolution bound of a sweep against the measured merge threshold"""
    sweep = _sweep(config)
    bound = axial_resolution(sweep)
    threshold = merge_threshold(sweep, window=config['window'])
    document = {
        'sweep': str(sweep),
        'bandwidth_hz': sweep.bandwidth(),
        'axial_resolution_m': bound,
        'merge_threshold_m': threshold,
        'merge_to_bound_ratio': threshold / bound,
        'fwhm_m': measured_fwhm(sweep, window=config['window']),
    }
    atomic_write(_sibling(config['out'], '.json'), format_json(document))


def cmd_slowtof(config: RunConfig) -> None:
    """Integrating-camera sweeps: depths and envelope decay per object"""
    sweep = _sweep(config)
    cfg = SlowCaptureConfig(config['exposure'], sweep)
    band, exposure_in_band = search_band(cfg)
    signals = []
    objects = []
    for object_id, depth in enumerate(_depths(config)):
        signal = synthesize(_point(config, depth), SlowTof(sweep, config['exposure']))
        signal = add_noise(signal, NoiseSpec(config['snr'], trial_seed(config['seed'], object_id)))
        signals.append((object_id, signal))
        result = _peak_document(estimate_depth_slow(signal, cfg))
        result.update(
            object_id=object_id,
            true_depth_m=depth,
            decay_exponent=verify_amplitude_decay(signal),
        )
        objects.append(result)
    document = {
        'sweep': str(sweep),
        'exposure_s': cfg.exposure,
        'search_band_s': band,
        'exposure_in_band': exposure_in_band,
        'objects': objects,
    }
    atomic_write(_sibling(config['out'], '.csv'), format_signals(signals))
    atomic_write(_sibling(config['out'], '.json'), format_json(document))


COMMANDS: Dict[str, Callable[[RunConfig], None]] = {
    'synth': cmd_synth,
    'estimate': cmd_estimate,
    'compare': cmd_compare,
    'scene': cmd_scene,
    'resolve': cmd_resolve,
    'slowtof': cmd_slowtof,
}


#######################################
# PARSER


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="JSON file of parameters, overridden by flags")
    common.add_argument('--out', help="Output path (a directory for scene)")
    common.add_argument('--seed', type=int, help="Noise seed, required with a finite --snr")
    common.add_argument('-v', '--verbose', action='count', default=0)
    common.add_argument('-q', '--quiet', action='count', default=0)

    parser = argparse.ArgumentParser(
        prog='fdtof', description="Frequency-domain time of flight simulation"
    )
    commands = parser.add_subparsers(dest='command', required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        return commands.add_parser(name, parents=[common], help=help, description=help)

    def sweep_options(sub, mode=False):
        sub.add_argument('--sweep', help="Modulation sweep f_min:f_max:n in Hz")
        if mode:
            sub.add_argument('--mode', choices=sorted(MODE_ESTIMATORS))
        sub.add_argument('--f-mod', type=float, help="Phase TOF modulation frequency in Hz")
        sub.add_argument('--exposure', type=float, help="Exposure time in seconds")

    def spectrum_options(sub):
        sub.add_argument('--estimator', choices=['four_bucket', 'interp', 'qf', 'slow'])
        sub.add_argument('--zero-pad', type=int, help="Zero padding factor")
        sub.add_argument('--window', choices=['hann', 'boxcar'])

    sub = add('synth', "Write the signals of points at the given depths")
    sweep_options(sub, mode=True)
    sub.add_argument('--depth', type=float, action='append', help="Depth in meters, repeatable")
    sub.add_argument('--amplitude', type=float)
    sub.add_argument('--ambient', type=float)
    sub.add_argument('--snr', type=float, help="AC signal to noise ratio in dB")

    sub = add('estimate', "Estimate depths from a signal CSV")
    sub.add_argument('--input', help="Signal CSV")
    sub.add_argument('--mode', choices=sorted(MODE_ESTIMATORS))
    sub.add_argument('--f-mod', type=float, help="Modulation frequency of bucket samples")
    sub.add_argument('--exposure', type=float, help="Exposure time in seconds")
    spectrum_options(sub)

    sub = add('compare', "Percent error of phase TOF and FD-TOF across SNR levels")
    sub.add_argument('--depth', type=float, action='append', help="Depth in meters")
    sub.add_argument('--snr', type=float, nargs='+', help="SNR levels in dB")
    sub.add_argument('--trials', type=int, help="Monte Carlo trials per SNR level")
    sub.add_argument('--sweep', help="Modulation sweep f_min:f_max:n in Hz")
    sub.add_argument('--f-mod', type=float, help="Phase TOF modulation frequency in Hz")
    sub.add_argument('--estimator', choices=['interp', 'qf'])

    sub = add('scene', "Simulate and reconstruct a depth map")
    sub.add_argument('--scene', help="Scene JSON or ground truth depth PGM")
    sweep_options(sub, mode=True)
    spectrum_options(sub)
    sub.add_argument('--snr', type=float, help="AC signal to noise ratio in dB")

    sub = add('resolve', "Axial resolution of a sweep")
    sub.add_argument('--sweep', help="Modulation sweep f_min:f_max:n in Hz")
    sub.add_argument('--window', choices=['hann', 'boxcar'])

    sub = add('slowtof', "Depths with an integrating camera")
    sub.add_argument('--depth', type=float, action='append', help="Depth in meters, repeatable")
    sub.add_argument('--sweep', help="Modulation sweep f_min:f_max:n in Hz")
    sub.add_argument('--exposure', type=float, help="Exposure time in seconds")
    sub.add_argument('--amplitude', type=float)
    sub.add_argument('--ambient', type=float)
    sub.add_argument('--snr', type=float, help="AC signal to noise ratio in dB")
    return parser


def _configure_logging(verbose: int, quiet: int) -> None:
    level = logging.WARNING - 10 * verbose + 10 * quiet
    logging.basicConfig(
        level=min(max(level, logging.DEBUG), logging.CRITICAL),
        format='%(levelname)s %(name)s: %(message)s',
    )


def _write_error(config: RunConfig, error: Exception) -> None:
    out = Path(config['out'])
    path = out / 'error.json' if config.command == 'scene' else _sibling(str(out), '.error.json')
    document = {'error': type(error).__name__, 'message': str(error), 'command': config.command}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(path, format_json(document))
    except OSError as e:
        log.error("Cannot write the error document %s: %s", path, e)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose, args.quiet)
    try:
        config = resolve_config(args)
    except FdTofError as e:
        log.error("Invalid configuration: %s", e)
        return 2
    try:
        out = Path(config['out'])
        if args.command == 'scene':
            record = out / 'config.json'
        else:
            record = _sibling(str(out), '.config.json')
        record.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(record, format_json(config.to_json()))
        COMMANDS[args.command](config)
    except InvalidArgumentError as e:
        log.error("%s", e)
        return 2
    except (FdTofError, OSError) as e:
        log.error("%s failed: %s", args.command, e)
        _write_error(config, e)
        return 1
    return 0


__all__ = [
    'RunConfig',
    'resolve_config',
    'build_parser',
    'cmd_synth',
    'cmd_estimate',
    'cmd_compare',
    'cmd_scene',
    'cmd_resolve',
    'cmd_slowtof',
    'main',
]
