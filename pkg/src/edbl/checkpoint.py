"""Little-endian binary container for named float64/int64 arrays.

Layout::

    magic      8 bytes  b"EDBLCKPT"
    version    uint32
    count      uint32   number of records
    record*    name_len uint16, name utf-8, dtype uint8 (0=float64, 1=int64),
               ndim uint32, dims uint64 * ndim, raw little-endian values

Model checkpoints and experiment checkpoints (model + exemplar store) share
this container; round trips are bit-exact.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Mapping

import numpy as np

from .exceptions import ParseError

MAGIC = b"EDBLCKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {"f": 0, "i": 1}


def write_arrays(fh: BinaryIO, arrays: Mapping[str, np.ndarray]) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<II", VERSION, len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype.kind)
        if code is None:
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<BI", code, raw.ndim))
        fh.write(struct.pack(f"<{raw.ndim}Q", *raw.shape))
        fh.write(raw.tobytes())


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ParseError("truncated checkpoint")
    return buf


def read_arrays(fh: BinaryIO) -> dict[str, np.ndarray]:
    if _read_exact(fh, len(MAGIC)) != MAGIC:
        raise ParseError("not an edbl checkpoint (bad magic)")
    version, count = struct.unpack("<II", _read_exact(fh, 8))
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
        name = _read_exact(fh, name_len).decode("utf-8")
        code, ndim = struct.unpack("<BI", _read_exact(fh, 5))
        if code not in _DTYPES:
            raise ParseError(f"{name}: unknown dtype code {code}")
        shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim))
        dtype = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = np.frombuffer(_read_exact(fh, n * dtype.itemsize), dtype=dtype)
        out[name] = data.reshape(shape).astype(dtype.newbyteorder("="))
    return out


def save(path, arrays: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        write_arrays(fh, arrays)


def load(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return read_arrays(fh)
