"""Binary matrix files and report serialisation.

Matrix file layout (little-endian)::

    offset  size  field
    0       4     magic  b"HATN"
    4       4     version (uint32) = 1
    8       1     dtype  (uint8)  0 = float32, 1 = float64
    9       3     reserved, zero
    12      8     rows   (uint64)
    20      8     cols   (uint64)
    28      ...   rows * cols values, row-major

float32 files are written by round-to-nearest-even conversion.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence, Union

import numpy as np

MAGIC = b"HATN"
VERSION = 1
HEADER = struct.Struct("<4sIB3sQQ")
HEADER_SIZE = HEADER.size  # 28
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {"f32": 0, "f64": 1}


class MatrixFormatError(ValueError):
    code = "format"


class BadMagicError(MatrixFormatError):
    code = "bad_magic"


class VersionMismatchError(MatrixFormatError):
    code = "version_mismatch"


class BadHeaderError(MatrixFormatError):
    code = "bad_header"


class TruncatedPayloadError(MatrixFormatError):
    code = "truncated_payload"


class NonFiniteValueError(MatrixFormatError):
    code = "non_finite"


PathLike = Union[str, Path]


def encode_matrix(m: np.ndarray, dtype: str = "f64") -> bytes:
    if dtype not in DTYPE_CODES:
        raise ValueError(f"dtype must be one of {sorted(DTYPE_CODES)}")
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("only 2-D matrices can be written")
    if not np.all(np.isfinite(m)):
        raise NonFiniteValueError("matrix contains non-finite values")
    code = DTYPE_CODES[dtype]
    with np.errstate(over="ignore"):
        payload = np.ascontiguousarray(m, dtype=DTYPES[code])
    if not np.all(np.isfinite(payload)):
        raise NonFiniteValueError("values overflow float32")
    header = HEADER.pack(MAGIC, VERSION, code, b"\0\0\0", m.shape[0], m.shape[1])
    return header + payload.tobytes()


def decode_matrix(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not a HATN matrix file")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayloadError("file shorter than header")
    magic, version, code, reserved, rows, cols = HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    if code not in DTYPES:
        raise BadHeaderError(f"unknown dtype code {code}")
    if reserved != b"\0\0\0":
        raise BadHeaderError("reserved header bytes must be zero")
    dt = DTYPES[code]
    expected = rows * cols * dt.itemsize
    available = len(data) - HEADER_SIZE
    if available < expected:
        raise TruncatedPayloadError(f"payload has {available} bytes, expected {expected}")
    if available > expected:
        raise BadHeaderError(f"{available - expected} trailing bytes after payload")
    values = np.frombuffer(data, dtype=dt, count=rows * cols, offset=HEADER_SIZE)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("matrix contains non-finite values")
    return values.astype(np.float64).reshape(rows, cols)


def write_matrix(path: PathLike, m: np.ndarray, dtype: str = "f64") -> None:
    Path(path).write_bytes(encode_matrix(m, dtype))


def read_matrix(path: PathLike) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes())


def _plain(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return _plain(value.item())
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _record(obj) -> dict:
    if is_dataclass(obj):
        return obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    return dict(obj)


def report_json(report) -> str:
    """One JSON object; non-finite floats become ``"inf"``/``"-inf"``/``null``."""
    return json.dumps(_plain(_record(report)), sort_keys=True)


def write_csv(rows: Iterable, stream: IO[str], fieldnames: Sequence[str] = None) -> None:
    """One CSV row per record; nested fields (``params``) are JSON-encoded."""
    records = [_record(r) for r in rows]
    if fieldnames is None:
        fieldnames = list(records[0]) if records else []
    writer = csv.DictWriter(stream, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow(
            {k: json.dumps(_plain(v)) if isinstance(v, dict) else _plain(rec[k]) for k, v in rec.items() if k in fieldnames}
        )
