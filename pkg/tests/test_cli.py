import json

import numpy as np
import pytest

from fdtof.cli import main
from fdtof.format import decode_pgm, decode_signals, encode_depth_pgm
from fdtof.scene_sim import DepthMap


def read_json(path):
    return json.loads(path.read_text())


def zero_crossings(samples):
    negative = samples < samples.mean()
    return int(np.count_nonzero(negative[1:] != negative[:-1]))


def test_synth_three_objects(tmp_path):
    out = tmp_path / 'signals.csv'
    assert main(['synth', '--depth', '1', '--depth', '2', '--depth', '3', '--out', str(out)]) == 0
    signals = decode_signals(out.read_text())
    counts = [zero_crossings(signals[i].samples) for i in range(3)]
    assert counts[1] / counts[0] == pytest.approx(2, rel=0.05)
    assert counts[2] / counts[0] == pytest.approx(3, rel=0.05)
    record = read_json(tmp_path / 'signals.config.json')
    assert record['command'] == 'synth'
    assert record['parameters']['depth'] == [1.0, 2.0, 3.0]
    assert record['parameters']['sweep'] == '10e6:1e9:256'


def test_synth_deterministic(tmp_path):
    args = ['synth', '--depth', '1.5', '--snr', '10', '--seed', '5']
    assert main(args + ['--out', str(tmp_path / 'a.csv')]) == 0
    assert main(args + ['--out', str(tmp_path / 'b.csv')]) == 0
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()


@pytest.mark.parametrize(
    "args",
    [
        ['synth'],
        ['synth', '--depth', '1'],
        ['synth', '--depth', '1', '--seed', '-1', '--out', 'OUT'],
        ['synth', '--depth', '1', '--sweep', '1e9:1e6:10', '--out', 'OUT'],
        ['synth', '--depth', '1', '--mode', 'sonar', '--out', 'OUT'],
        ['teleport'],
    ],
)
def test_usage_errors(tmp_path, args):
    out = str(tmp_path / 'x.csv')
    assert main([out if a == 'OUT' else a for a in args]) == 2


def test_synth_needs_depth(tmp_path):
    assert main(['synth', '--out', str(tmp_path / 'x.csv')]) == 2


@pytest.mark.parametrize(
    "mode,sweep,depth,tolerance",
    [
        ('phase', '10e6:1e9:256', 1.2, 1e-6),
        ('fd', '10e6:1e9:256', 2.5, 1e-3),
        ('slow', '10e6:1e9:4096', 2.0, 0.05),
    ],
)
def test_synth_then_estimate(tmp_path, mode, sweep, depth, tolerance):
    signals = tmp_path / 'signals.csv'
    result = tmp_path / 'estimate.json'
    args = ['synth', '--mode', mode, '--sweep', sweep, '--depth', str(depth)]
    assert main(args + ['--out', str(signals)]) == 0
    extra = ['--mode', 'slow'] if mode == 'slow' else []
    assert main(['estimate', '--input', str(signals), '--out', str(result)] + extra) == 0
    document = read_json(result)
    assert document['mode'] == mode
    assert document['objects'][0]['depth_m'] == pytest.approx(depth, abs=tolerance)


def test_estimate_interp(tmp_path):
    signals = tmp_path / 'signals.csv'
    assert main(['synth', '--depth', '2', '--out', str(signals)]) == 0
    out = tmp_path / 'estimate.json'
    args = ['estimate', '--input', str(signals), '--out', str(out)]
    assert main(args + ['--estimator', 'interp']) == 0
    assert read_json(out)['estimator'] == 'interp'
    assert main(args + ['--estimator', 'slow']) == 2


def test_estimate_guard_failure(tmp_path):
    signals = tmp_path / 'narrow.csv'
    args = ['synth', '--sweep', '10e6:30e6:256', '--depth', '1', '--out', str(signals)]
    assert main(args) == 0
    out = tmp_path / 'estimate.json'
    assert main(['estimate', '--input', str(signals), '--out', str(out)]) == 1
    error = read_json(tmp_path / 'estimate.error.json')
    assert error['error'] == 'InsufficientBandwidthError'
    assert error['command'] == 'estimate'


def test_estimate_missing_input(tmp_path):
    out = tmp_path / 'estimate.json'
    assert main(['estimate', '--input', str(tmp_path / 'none.csv'), '--out', str(out)]) == 2


def test_compare(tmp_path):
    out = tmp_path / 'compare'
    args = ['compare', '--trials', '5', '--snr', '10', '30', '--seed', '2', '--out', str(out)]
    assert main(args) == 0
    lines = (tmp_path / 'compare.csv').read_text().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith('estimator,snr_db,trials')
    document = read_json(tmp_path / 'compare.json')
    assert [row['estimator'] for row in document['rows']] == ['four_bucket', 'qf'] * 2


def test_compare_no_trials(tmp_path):
    args = ['compare', '--trials', '0', '--seed', '0']
    assert main(args + ['--out', str(tmp_path / 'compare')]) == 2


def test_resolve(tmp_path):
    out = tmp_path / 'resolve.json'
    assert main(['resolve', '--out', str(out)]) == 0
    document = read_json(out)
    assert document['axial_resolution_m'] == pytest.approx(3.6, abs=0.05)
    assert 0.8 <= document['merge_to_bound_ratio'] <= 1.2
    assert main(['resolve', '--sweep', '1e6:1e6:10', '--out', str(out)]) == 2


def test_scene_json(tmp_path):
    scene = tmp_path / 'scene.json'
    scene.write_text(json.dumps({'kind': 'uniform', 'height': 3, 'width': 4, 'depth': 1.5}))
    out = tmp_path / 'run'
    assert main(['scene', '--scene', str(scene), '--out', str(out)]) == 0
    levels, maxval, comments = decode_pgm((out / 'depth.pgm').read_bytes())
    assert maxval == 65535 and comments['depth_scale_m'] == '0.001'
    assert np.all(levels == 1500)
    metrics = read_json(out / 'metrics.json')
    assert metrics['pixels'] == 12 and metrics['invalid_pixels'] == 0
    assert metrics['fraction_within_1_percent'] == 1.0
    assert read_json(out / 'config.json')['parameters']['mode'] == 'fd'
    assert (out / 'amplitude.pgm').exists()


def test_scene_pgm(tmp_path):
    truth = DepthMap(np.array([[1.0, np.nan], [2.0, 2.5]]), np.ones((2, 2)))
    scene = tmp_path / 'truth.pgm'
    scene.write_bytes(encode_depth_pgm(truth))
    out = tmp_path / 'run'
    args = ['scene', '--scene', str(scene), '--mode', 'phase', '--out', str(out)]
    assert main(args) == 0
    levels, _, _ = decode_pgm((out / 'depth.pgm').read_bytes())
    assert levels[0, 0] == 1000 and levels[1, 0] == 2000 and levels[1, 1] == 2500
    metrics = read_json(out / 'metrics.json')
    assert metrics['pixels'] == 3


def test_scene_malformed(tmp_path):
    scene = tmp_path / 'scene.json'
    scene.write_text('{"kind": "uniform",')
    out = tmp_path / 'run'
    assert main(['scene', '--scene', str(scene), '--out', str(out)]) == 1
    error = read_json(out / 'error.json')
    assert error['error'] == 'FormatError'
    assert 'line 1' in error['message']


def test_slowtof(tmp_path):
    out = tmp_path / 'slow.json'
    assert main(['slowtof', '--depth', '1', '--depth', '3', '--out', str(out)]) == 0
    document = read_json(out)
    assert document['exposure_in_band'] is False
    for obj in document['objects']:
        assert obj['depth_m'] == pytest.approx(obj['true_depth_m'], abs=0.05)
        assert obj['decay_exponent'] == pytest.approx(-1.0, abs=0.05)
    assert set(decode_signals((tmp_path / 'slow.csv').read_text())) == {0, 1}


def test_config_file(tmp_path):
    config = tmp_path / 'params.json'
    config.write_text(json.dumps({'depth': [2.0], 'mode': 'phase', 'colour': 'red'}))
    out = tmp_path / 'signals.csv'
    assert main(['synth', '--config', str(config), '--out', str(out)]) == 0
    assert read_json(tmp_path / 'signals.config.json')['parameters']['mode'] == 'phase'
    # explicit flags win over the configuration file
    assert main(['synth', '--config', str(config), '--mode', 'fd', '--out', str(out)]) == 0
    assert read_json(tmp_path / 'signals.config.json')['parameters']['mode'] == 'fd'
    assert out.read_text().startswith('frequency_hz')


def test_config_replay(tmp_path):
    first = tmp_path / 'first.csv'
    args = ['synth', '--depth', '1.1', '--snr', '5', '--seed', '9', '--out', str(first)]
    assert main(args) == 0
    second = tmp_path / 'second.csv'
    record = str(tmp_path / 'first.config.json')
    assert main(['synth', '--config', record, '--out', str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_config_invalid(tmp_path):
    config = tmp_path / 'params.json'
    config.write_text('[1, 2]')
    assert main(['synth', '--config', str(config), '--out', str(tmp_path / 'x.csv')]) == 2
    config.write_text('{"depth": "far"}')
    assert main(['synth', '--config', str(config), '--out', str(tmp_path / 'x.csv')]) == 2


def test_config_scalar_for_list(tmp_path):
    config = tmp_path / 'params.json'
    config.write_text(json.dumps({'snr': 10, 'trials': 2, 'seed': 1}))
    out = tmp_path / 'compare'
    assert main(['compare', '--config', str(config), '--out', str(out)]) == 0
    record = read_json(tmp_path / 'compare.config.json')
    assert record['parameters']['snr'] == [10.0]
    assert [row['snr_db'] for row in read_json(tmp_path / 'compare.json')['rows']] == [10.0] * 2

    config.write_text(json.dumps({'depth': 2.0}))
    signals = tmp_path / 'signals.csv'
    assert main(['synth', '--config', str(config), '--out', str(signals)]) == 0
    assert set(decode_signals(signals.read_text())) == {0}


def test_config_list_for_scalar(tmp_path):
    config = tmp_path / 'params.json'
    config.write_text(json.dumps({'depth': [1.0], 'snr': [10, 20], 'seed': 1}))
    assert main(['synth', '--config', str(config), '--out', str(tmp_path / 'x.csv')]) == 2


@pytest.mark.parametrize(
    "args",
    [
        ['synth', '--depth', '1', '--snr', '10'],
        ['slowtof', '--depth', '1', '--snr', '30'],
        ['compare', '--trials', '2'],
        ['compare', '--trials', '2', '--snr', '10'],
    ],
)
def test_noisy_run_needs_seed(tmp_path, args):
    out = tmp_path / 'run'
    assert main(args + ['--out', str(out)]) == 2
    assert not (tmp_path / 'run.config.json').exists()
    # with a seed the configuration resolves
    assert main(args + ['--seed', '0', '--out', str(out)]) != 2


def test_noiseless_run_records_seed(tmp_path):
    out = tmp_path / 'signals.csv'
    assert main(['synth', '--depth', '1', '--out', str(out)]) == 0
    assert read_json(tmp_path / 'signals.config.json')['parameters']['seed'] == 0
