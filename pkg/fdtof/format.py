import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .scene_sim import DepthMap, ExperimentReport
from .signal_model import DomainKind, FdTofError, PrimalSignal

__doc__ = """Reading and writing of the toolkit files.

Signals and reports are CSV, results and configurations JSON, depth and
amplitude maps 16-bit binary PGM. Every writer replaces its target atomically.
"""

COORDINATE_COLUMNS = {
    DomainKind.MODULATION_FREQUENCY: 'frequency_hz',
    DomainKind.PHASE_SHIFT: 'tau_s',
}

REPORT_COLUMNS = [
    'estimator',
    'snr_db',
    'trials',
    'failures',
    'median_percent_error',
    'mean_percent_error',
    'rmse_m',
    'wrapped_trials',
]

"""Depth of one PGM level in meters"""
DEPTH_SCALE = 0.001
"""PGM level of pixels without a depth"""
INVALID_LEVEL = 65535
MAX_DEPTH = (INVALID_LEVEL - 1) * DEPTH_SCALE

log = logging.getLogger(__name__)


class FormatError(FdTofError, ValueError):
    """Malformed input file"""

    pass


def atomic_write(path: Union[str, Path], data: Union[bytes, str]) -> Path:
    """Write a file through a temporary file renamed over the target"""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode('utf-8')
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or '.')
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    log.debug("Wrote %s (%d bytes)", path, len(data))
    return path


def _number(value: float) -> str:
    return repr(float(value))


#######################################
# SIGNALS


def format_signals(signals: Sequence[Tuple[int, PrimalSignal]]) -> str:
    """CSV with one row per sample: coordinate, sample, object_id

    All signals must share the same domain.
    """
    if not signals:
        raise FdTofError("No signal to format")
    kinds = {signal.domain_kind for _, signal in signals}
    if len(kinds) != 1:
        raise FdTofError("Signals of different domains cannot share a file")
    column = COORDINATE_COLUMNS[kinds.pop()]
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=[column, 'sample', 'object_id'], lineterminator='\n')
    writer.writeheader()
    for object_id, signal in signals:
        for coordinate, sample in zip(signal.coordinates, signal.samples):
            writer.writerow(
                {column: _number(coordinate), 'sample': _number(sample), 'object_id': object_id}
            )
    return out.getvalue()


def decode_signals(text: str) -> Dict[int, PrimalSignal]:
    """Signals of a CSV file keyed by object id, in file order"""
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    kinds = [kind for kind, column in COORDINATE_COLUMNS.items() if column in fields]
    if len(kinds) != 1 or 'sample' not in fields:
        raise FormatError(
            f"Signal CSV needs a frequency_hz or tau_s column and a sample column, got {fields}"
        )
    kind = kinds[0]
    column = COORDINATE_COLUMNS[kind]
    rows: Dict[int, List[Tuple[float, float]]] = {}
    for row in reader:
        line = reader.line_num
        try:
            object_id = int(row.get('object_id') or 0)
            coordinate = float(row[column])
            sample = float(row['sample'])
        except (TypeError, ValueError) as e:
            raise FormatError(f"Line {line}: invalid field value ({e})") from e
        rows.setdefault(object_id, []).append((coordinate, sample))
    if not rows:
        raise FormatError("Signal CSV has no data row")
    signals = {}
    for object_id, values in rows.items():
        array = np.array(values)
        try:
            signals[object_id] = PrimalSignal(kind, array[:, 0], array[:, 1])
        except FdTofError as e:
            raise FormatError(f"Object {object_id}: {e}") from e
    return signals


#######################################
# REPORTS AND DOCUMENTS


def format_report(report: ExperimentReport) -> str:
    """CSV with one row per estimator and SNR level"""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=REPORT_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for row in report.rows:
        writer.writerow(
            {
                'estimator': row.estimator,
                'snr_db': _number(row.snr_db),
                'trials': row.trials,
                'failures': row.failures,
                'median_percent_error': _number(row.median_percent_error),
                'mean_percent_error': _number(row.mean_percent_error),
                'rmse_m': _number(row.rmse_m),
                'wrapped_trials': row.wrapped,
            }
        )
    return out.getvalue()


def report_document(report: ExperimentReport) -> Dict[str, Any]:
    return {
        'depth_m': report.depth,
        'rows': [
            {
                'estimator': row.estimator,
                'snr_db': row.snr_db,
                'trials': row.trials,
                'failures': row.failures,
                'median_percent_error': row.median_percent_error,
                'mean_percent_error': row.mean_percent_error,
                'rmse_m': row.rmse_m,
                'wrapped_trials': row.wrapped,
            }
            for row in report.rows
        ],
    }


def _plain(value: Any) -> Any:
    """JSON-compatible copy, non-finite numbers become strings"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    return value


def format_json(document: Any) -> str:
    return json.dumps(_plain(document), indent=2, sort_keys=True) + '\n'


def decode_json(text: str, source: str = 'document') -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(
            f"Invalid JSON in {source} at line {e.lineno} column {e.colno} "
            f"(byte offset {e.pos}): {e.msg}"
        ) from e


#######################################
# PGM


def _pgm_header(data: bytes) -> Tuple[List[int], Dict[str, str], int]:
    """Width, height, maxval, the `# fdtof key value` comments and the raster offset"""
    if not data.startswith(b'P5'):
        raise FormatError("Not a binary PGM (P5) file at byte offset 0")
    fields: List[int] = []
    comments: Dict[str, str] = {}
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"Truncated PGM header at byte offset {pos}")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
            continue
        if ch == b'#':
            end = data.find(b'\n', pos)
            end = len(data) if end < 0 else end
            words = data[pos + 1 : end].split()
            if len(words) == 3 and words[0] == b'fdtof':
                comments[words[1].decode('ascii', 'replace')] = words[2].decode('ascii', 'replace')
            pos = end
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError(f"Unexpected byte {ch!r} in PGM header at byte offset {start}")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError(f"Missing whitespace before the raster at byte offset {pos}")
    return fields, comments, pos + 1


def decode_pgm(data: bytes) -> Tuple[np.ndarray, int, Dict[str, str]]:
    """Raster levels, maxval and fdtof comments of a binary PGM"""
    (width, height, maxval), comments, offset = _pgm_header(data)
    if width < 1 or height < 1:
        raise FormatError(f"Invalid PGM size {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"Invalid PGM maxval {maxval}")
    dtype = np.dtype('>u2') if maxval > 255 else np.dtype('u1')
    size = width * height * dtype.itemsize
    if len(data) - offset < size:
        raise FormatError(
            f"Truncated PGM raster: {size} bytes expected from byte offset {offset}, "
            f"{len(data) - offset} found"
        )
    levels = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    over = np.flatnonzero(levels > maxval)
    if over.size:
        raise FormatError(
            f"PGM level above maxval at byte offset {offset + int(over[0]) * dtype.itemsize}"
        )
    return levels.reshape(height, width).astype(np.int64), maxval, comments


def encode_pgm(levels: np.ndarray, comments: Optional[Dict[str, str]] = None) -> bytes:
    """16-bit big-endian binary PGM"""
    levels = np.asarray(levels)
    comments = comments or {}
    if levels.ndim != 2:
        raise FdTofError(f"A PGM holds a 2-D raster, got shape {levels.shape}")
    height, width = levels.shape
    header = 'P5\n'
    for key, value in comments.items():
        header += f"# fdtof {key} {value}\n"
    header += f"{width} {height}\n65535\n"
    return header.encode('ascii') + levels.astype('>u2').tobytes()


def encode_depth_pgm(depth_map: DepthMap) -> bytes:
    """Depth map as PGM, one level per millimeter, invalid pixels at 65535"""
    depth = np.where(depth_map.valid, depth_map.depth, 0.0)
    if np.any(depth > MAX_DEPTH):
        raise FormatError(
            f"Depth {float(depth.max()):.4f} m overflows the PGM range ({MAX_DEPTH} m)"
        )
    levels = np.where(depth_map.valid, np.rint(depth / DEPTH_SCALE), INVALID_LEVEL)
    return encode_pgm(levels, {'depth_scale_m': repr(DEPTH_SCALE)})


def decode_depth_pgm(data: bytes) -> DepthMap:
    """Depth map from a PGM, unit amplitude everywhere"""
    levels, maxval, comments = decode_pgm(data)
    try:
        scale = float(comments.get('depth_scale_m', DEPTH_SCALE))
    except ValueError as e:
        raise FormatError(f"Invalid depth_scale_m comment: {e}") from e
    if not (math.isfinite(scale) and scale > 0):
        raise FormatError(f"Invalid depth_scale_m comment: {scale}")
    valid = levels != INVALID_LEVEL if maxval == INVALID_LEVEL else np.ones(levels.shape, bool)
    depth = np.where(valid, levels * scale, np.nan)
    return DepthMap(depth, np.ones(levels.shape), valid)


def encode_amplitude_pgm(amplitude: np.ndarray) -> bytes:
    """Amplitude map scaled so that its maximum is level 65535"""
    amplitude = np.nan_to_num(np.asarray(amplitude, dtype=float), nan=0.0)
    peak = float(amplitude.max(initial=0.0))
    levels = np.rint(amplitude / peak * 65535) if peak > 0 else np.zeros(amplitude.shape)
    return encode_pgm(levels, {'amplitude_scale': repr(peak / 65535)})


__all__ = [
    'FormatError',
    'DEPTH_SCALE',
    'INVALID_LEVEL',
    'MAX_DEPTH',
    'atomic_write',
    'format_signals',
    'decode_signals',
    'format_report',
    'report_document',
    'format_json',
    'decode_json',
    'decode_pgm',
    'encode_pgm',
    'encode_depth_pgm',
    'decode_depth_pgm',
    'encode_amplitude_pgm',
]
