"""Bit-exact tensor container used for all array inputs and outputs.

Layout (little endian throughout):

* 4 magic bytes ``VIPT``
* version, one u8, currently 1
* dtype code, one u8: 1 = f32, 2 = u8, 3 = u16
* ndim, one u8
* ndim u32 dims
* row-major payload of ``prod(dims) * itemsize`` bytes
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, MissingFile, TruncatedPayload, UnsupportedDtype

MAGIC = b"VIPT"
VERSION = 1

_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("u1"), 3: np.dtype("<u2")}
_CODE_BY_KIND = {"<f4": 1, "|u1": 2, "<u2": 3}


def _dtype_code(arr: np.ndarray) -> int:
    key = arr.dtype.newbyteorder("<").str
    if key == "|u1" or key == "<u1":
        return 2
    if key in _CODE_BY_KIND:
        return _CODE_BY_KIND[key]
    raise UnsupportedDtype(f"cannot store dtype {arr.dtype}")


def write_tensor(path, array: np.ndarray) -> None:
    """Write ``array`` (f32, u8, or u16) to ``path``."""
    arr = np.ascontiguousarray(array)
    if arr.dtype == np.float64:
        arr = arr.astype("<f4")
    code = _dtype_code(arr)
    arr = arr.astype(_DTYPE_BY_CODE[code], copy=False)
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`.

    Raises BadMagic, UnsupportedDtype, or TruncatedPayload when the file
    disagrees with the format; the payload length must match the header
    exactly.
    """
    p = Path(path)
    if not p.exists():
        raise MissingFile(str(p))
    blob = p.read_bytes()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{p}: expected {MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < 7:
        raise TruncatedPayload(f"{p}: header cut short")
    version, code, ndim = struct.unpack("<BBB", blob[4:7])
    if version != VERSION:
        raise UnsupportedDtype(f"{p}: unknown format version {version}")
    if code not in _DTYPE_BY_CODE:
        raise UnsupportedDtype(f"{p}: unknown dtype code {code}")
    dims_end = 7 + 4 * ndim
    if len(blob) < dims_end:
        raise TruncatedPayload(f"{p}: dims cut short")
    shape = struct.unpack(f"<{ndim}I", blob[7:dims_end])
    dtype = _DTYPE_BY_CODE[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{p}: payload is {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
