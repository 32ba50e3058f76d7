"""WFR1 dataset files.

Layout (little-endian)::

    b"WFR1" | u32 count | u16 height | u16 width
    count x ( u8 label bitmask | height*width bytes of cells in {0,1,2} )
"""

import struct

import numpy as np

from .._files import atomic_write
from ..exceptions import FormatError
from .wafer import Dataset

MAGIC = b"WFR1"
_HEADER = struct.Struct("<4sIHH")


def dumps_dataset(ds):
    count = len(ds)
    h, w = ds.shape if count else (ds.cells.shape[1:] or (0, 0))
    if h > 0xFFFF or w > 0xFFFF:
        raise ValueError(f"map shape {h}x{w} does not fit the u16 header fields")
    body = np.empty((count, 1 + h * w), dtype=np.uint8)
    body[:, 0] = ds.labels
    body[:, 1:] = ds.cells.reshape(count, h * w)
    return _HEADER.pack(MAGIC, count, h, w) + body.tobytes()


def loads_dataset(buf, provenance=""):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header: {len(buf)} of {_HEADER.size} bytes", len(buf))
    magic, count, h, w = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    record = 1 + h * w
    expected = _HEADER.size + count * record
    if len(buf) < expected:
        full = (len(buf) - _HEADER.size) // record
        raise FormatError(
            f"truncated payload: {count} maps declared, {full} complete",
            _HEADER.size + full * record,
        )
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after last map", expected)
    body = np.frombuffer(buf, dtype=np.uint8, offset=_HEADER.size, count=count * record)
    body = body.reshape(count, record)
    cells = body[:, 1:]
    bad = np.flatnonzero(cells.reshape(-1) > 2)
    if len(bad):
        i, j = divmod(int(bad[0]), h * w)
        offset = _HEADER.size + i * record + 1 + j
        raise FormatError(f"cell value {int(cells[i, j])} not in {{0,1,2}}", offset)
    return Dataset(cells.reshape(count, h, w).copy(), body[:, 0].copy(), provenance)


def write_dataset(ds, path):
    return atomic_write(path, dumps_dataset(ds))


def read_dataset(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    return loads_dataset(buf, provenance=str(path))
