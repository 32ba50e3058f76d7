"""Convert a third-party ``.npz`` wafer archive into a WFR1 dataset.

The archive is a zip container holding two ``.npy`` members: ``arr_0``
with the die grids, shape ``(n, h, w)``, and ``arr_1`` with one-hot
labels, shape ``(n, 8)``, columns in canonical pattern order. The zip is read
with :mod:`zipfile`; the ``.npy`` headers are parsed here so that every
malformation can be reported with a byte offset.
"""

import ast
import struct
import zipfile

import numpy as np

from ..data.io import write_dataset
from ..data.wafer import PATTERNS, Dataset
from ..exceptions import FormatError

NPY_MAGIC = b"\x93NUMPY"
MAPS, LABELS = "arr_0.npy", "arr_1.npy"


def parse_npy(buf, name="array"):
    """Decode one ``.npy`` blob; errors carry the offset inside ``buf``."""
    if buf[:6] != NPY_MAGIC:
        raise FormatError(f"{name}: not an .npy array (bad magic)", 0)
    if len(buf) < 10:
        raise FormatError(f"{name}: truncated .npy preamble", len(buf))
    major = buf[6]
    if major == 1:
        (hlen,), start = struct.unpack_from("<H", buf, 8), 10
    elif major in (2, 3):
        if len(buf) < 12:
            raise FormatError(f"{name}: truncated .npy preamble", len(buf))
        (hlen,), start = struct.unpack_from("<I", buf, 8), 12
    else:
        raise FormatError(f"{name}: unsupported .npy version {major}", 6)
    if start + hlen > len(buf):
        raise FormatError(f"{name}: header runs past end of member", len(buf))
    try:
        header = ast.literal_eval(buf[start:start + hlen].decode("latin1"))
        descr, fortran, shape = header["descr"], header["fortran_order"], tuple(header["shape"])
        dtype = np.dtype(descr)
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise FormatError(f"{name}: unreadable .npy header ({exc})", start) from None
    if dtype.hasobject or dtype.kind not in "biuf":
        raise FormatError(f"{name}: unsupported dtype {descr!r}", start)
    offset = start + hlen
    need = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
    if len(buf) - offset != need:
        raise FormatError(f"{name}: payload is {len(buf) - offset} bytes, expected {need}",
                          min(len(buf), offset + need))
    arr = np.frombuffer(buf, dtype, int(np.prod(shape, dtype=np.int64)), offset)
    return arr.reshape(shape, order="F" if fortran else "C"), offset


def _check_values(arr, allowed, name, offset):
    flat = arr.ravel(order="K")  # file order, also for Fortran-ordered members
    bad = ~np.isin(flat, allowed)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        value = flat[first].item()
        raise FormatError(f"{name}: value {value!r} outside {{{', '.join(map(str, allowed))}}}",
                          offset + first * arr.dtype.itemsize)


def read_external(path):
    """Parse the archive at ``path`` into a :class:`Dataset`."""
    try:
        archive = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise FormatError(f"{path}: not a zip archive ({exc})", 0) from None
    with archive:
        names = set(archive.namelist())
        if not names:
            return Dataset(np.zeros((0, 0, 0), np.uint8), np.zeros(0, np.uint8),
                           provenance=f"converted from {path}")
        missing = {MAPS, LABELS} - names
        if missing:
            raise FormatError(f"{path}: missing member(s) {', '.join(sorted(missing))}", 0)
        arrays = {}
        for member in (MAPS, LABELS):
            info = archive.getinfo(member)
            try:
                buf = archive.read(member)
            except (zipfile.BadZipFile, OSError) as exc:
                raise FormatError(f"{member}: {exc}", info.header_offset) from None
            arrays[member] = parse_npy(buf, member)

    maps, maps_off = arrays[MAPS]
    onehot, labels_off = arrays[LABELS]
    if maps.ndim != 3:
        raise FormatError(f"{MAPS}: expected (n, h, w), got shape {maps.shape}", 0)
    if onehot.shape != (len(maps), len(PATTERNS)):
        raise FormatError(f"{LABELS}: expected shape ({len(maps)}, {len(PATTERNS)}), "
                          f"got {onehot.shape}", 0)
    _check_values(maps, (0, 1, 2), MAPS, maps_off)
    _check_values(onehot, (0, 1), LABELS, labels_off)
    bits = (onehot.astype(np.uint16) << np.arange(len(PATTERNS), dtype=np.uint16)).sum(axis=1)
    return Dataset(maps.astype(np.uint8), bits.astype(np.uint8),
                   provenance=f"converted from {path}")


def convert_external(path, out):
    """Write the archive at ``path`` as WFR1 to ``out``; returns the map count."""
    ds = read_external(path)
    write_dataset(ds, out)
    return len(ds)
