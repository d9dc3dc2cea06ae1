import json
import math

import numpy as np
import pytest

import fdtof.format as fdtof_format
from fdtof.scene_sim import DepthMap, ExperimentReport, ReportRow
from fdtof.signal_model import DomainKind, FrequencySweep, PrimalSignal, ScenePoint, synth_fd_sweep


@pytest.fixture
def signals():
    sweep = FrequencySweep(10e6, 1e9, 16)
    return [(i, synth_fd_sweep(ScenePoint.at_depths([d]), sweep)) for i, d in ((1, 1.0), (2, 2.5))]


def test_signals_round_trip(signals):
    text = fdtof_format.format_signals(signals)
    assert text.splitlines()[0] == 'frequency_hz,sample,object_id'
    decoded = fdtof_format.decode_signals(text)
    assert list(decoded) == [1, 2]
    for object_id, signal in signals:
        assert decoded[object_id].domain_kind == DomainKind.MODULATION_FREQUENCY
        assert np.array_equal(decoded[object_id].coordinates, signal.coordinates)
        assert np.array_equal(decoded[object_id].samples, signal.samples)


def test_signals_phase_column():
    signal = PrimalSignal(DomainKind.PHASE_SHIFT, [0.0, 5e-9, 1e-8, 1.5e-8], [1, 0.5, 0, 0.5])
    text = fdtof_format.format_signals([(0, signal)])
    assert text.startswith('tau_s,sample,object_id\n')
    assert fdtof_format.decode_signals(text)[0].domain_kind == DomainKind.PHASE_SHIFT


def test_signals_without_object_id():
    decoded = fdtof_format.decode_signals("tau_s,sample\n0,1\n1,0\n2,1\n")
    assert list(decoded) == [0]


@pytest.mark.parametrize(
    "text,message",
    [
        ("frequency_hz,sample,object_id\n1e6,abc,1\n", "Line 2"),
        ("freq,sample\n1,2\n", "frequency_hz or tau_s"),
        ("frequency_hz,sample,object_id\n", "no data row"),
        ("frequency_hz,sample,object_id\n2e6,1,0\n1e6,1,0\n", "Object 0"),
    ],
)
def test_decode_signals_invalid(text, message):
    with pytest.raises(fdtof_format.FormatError, match=message):
        fdtof_format.decode_signals(text)


def test_format_signals_mixed_domains(signals):
    phase = PrimalSignal(DomainKind.PHASE_SHIFT, [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(fdtof_format.FdTofError):
        fdtof_format.format_signals(signals + [(3, phase)])


def test_format_report():
    report = ExperimentReport(1.0, [ReportRow('qf', 10.0, 5, 1, 0.1, 0.2, 0.003, 0)])
    lines = fdtof_format.format_report(report).splitlines()
    assert lines[0].split(',') == fdtof_format.REPORT_COLUMNS
    assert lines[1] == 'qf,10.0,5,1,0.1,0.2,0.003,0'
    document = fdtof_format.report_document(report)
    assert document['rows'][0]['wrapped_trials'] == 0


def test_format_json():
    text = fdtof_format.format_json(
        {'b': np.float64(1.5), 'a': [np.int64(2), math.inf], 'c': np.array([True, False])}
    )
    assert text.endswith('}\n')
    assert json.loads(text) == {'a': [2, 'inf'], 'b': 1.5, 'c': [True, False]}
    assert text.index('"a"') < text.index('"b"')


def test_decode_json_error():
    with pytest.raises(fdtof_format.FormatError, match="line 2 column"):
        fdtof_format.decode_json('{"a": 1,\n}', 'scene.json')


def test_depth_pgm_round_trip():
    levels = np.array([[0, 1, 999], [1000, 65534, 42]])
    depth_map = DepthMap(levels * fdtof_format.DEPTH_SCALE, np.ones(levels.shape))
    data = fdtof_format.encode_depth_pgm(depth_map)
    assert data.startswith(b'P5\n# fdtof depth_scale_m 0.001\n3 2\n65535\n')
    decoded = fdtof_format.decode_depth_pgm(data)
    assert np.array_equal(decoded.depth, depth_map.depth)
    assert decoded.invalid_count() == 0


def test_depth_pgm_invalid_pixel():
    depth_map = DepthMap(np.array([[1.5, np.nan]]), np.ones((1, 2)))
    data = fdtof_format.encode_depth_pgm(depth_map)
    levels, maxval, _ = fdtof_format.decode_pgm(data)
    assert levels.tolist() == [[1500, fdtof_format.INVALID_LEVEL]]
    decoded = fdtof_format.decode_depth_pgm(data)
    assert decoded.valid.tolist() == [[True, False]]


def test_depth_pgm_overflow():
    depth_map = DepthMap(np.array([[70.0]]), np.ones((1, 1)))
    with pytest.raises(fdtof_format.FormatError, match="overflows"):
        fdtof_format.encode_depth_pgm(depth_map)


def test_decode_8bit_pgm():
    levels, maxval, comments = fdtof_format.decode_pgm(b'P5\n# made by hand\n2 1\n255\n\x01\x02')
    assert levels.tolist() == [[1, 2]]
    assert maxval == 255 and comments == {}
    depth_map = fdtof_format.decode_depth_pgm(b'P5\n2 1\n255\n\x01\x02')
    assert depth_map.depth.tolist() == pytest.approx([[0.001, 0.002]])


@pytest.mark.parametrize(
    "data,offset",
    [
        (b'P2\n1 1\n255\n1', 0),
        (b'P5\n4 x\n255\n', 5),
        (b'P5\n1 1\n100\n\xff', 11),
        (b'P5\n2 2\n65535\n\x00\x01', 13),
    ],
)
def test_decode_pgm_malformed(data, offset):
    with pytest.raises(fdtof_format.FormatError, match=f"byte offset {offset}"):
        fdtof_format.decode_pgm(data)


def test_amplitude_pgm():
    data = fdtof_format.encode_amplitude_pgm(np.array([[0.0, 0.25], [0.5, np.nan]]))
    levels, _, comments = fdtof_format.decode_pgm(data)
    assert levels.tolist() == [[0, 32768], [65535, 0]]
    assert float(comments['amplitude_scale']) == pytest.approx(0.5 / 65535)


def test_atomic_write(tmp_path):
    target = tmp_path / 'out.json'
    target.write_text('old')
    fdtof_format.atomic_write(target, '{"new": true}\n')
    assert target.read_text() == '{"new": true}\n'
    fdtof_format.atomic_write(tmp_path / 'raw.pgm', b'P5')
    assert sorted(p.name for p in tmp_path.iterdir()) == ['out.json', 'raw.pgm']
