"""Cluster assignment text files and DPM1 model checkpoints.

Assignment file::

    # K=<k>
    <index>, <hard_label>, <p_1>, ..., <p_K>

Labels are 0-based and probabilities are written with ``repr`` so they
round-trip exactly.

DPM1 (little-endian)::

    b"DPM1" | u32 version | u32 n | n bytes UTF-8 JSON (estimator params and
    fit summary) | u32 n_arrays | per array, in ``_ARRAYS`` order:
        u8 ndim | ndim x u32 dims | f64 values, C order
"""

import json
import struct

import numpy as np

from .._files import atomic_write
from ..exceptions import FormatError
from .estimator import DPMMClustering
from .head import MLPHead

MAGIC = b"DPM1"
VERSION = 1
_ARRAYS = ("projection_mean_", "projection_components_", "cluster_counts_", "cluster_means_")
_HEAD = ("center", "scale", "W1", "b1", "W2", "b2")


def format_assignments(P):
    P = np.asarray(P, dtype=float)
    lines = [f"# K={P.shape[1]}"]
    for i, (label, row) in enumerate(zip(P.argmax(axis=1), P)):
        lines.append(", ".join([str(i), str(int(label))] + [repr(float(p)) for p in row]))
    return "\n".join(lines) + "\n"


def write_assignments(P, path):
    return atomic_write(path, format_assignments(P).encode())


def parse_assignments(text):
    """Returns ``(labels, P)``."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# K="):
        raise FormatError("missing '# K=' header line", 0)
    try:
        k = int(lines[0][4:])
    except ValueError:
        raise FormatError(f"bad header {lines[0]!r}", 0) from None
    labels, rows = [], []
    offset = len(lines[0]) + 1
    for n, line in enumerate(lines[1:]):
        fields = [f.strip() for f in line.split(",")]
        try:
            if len(fields) != k + 2 or int(fields[0]) != n:
                raise ValueError
            labels.append(int(fields[1]))
            rows.append([float(f) for f in fields[2:]])
        except ValueError:
            raise FormatError(f"malformed assignment line {n + 1}", offset) from None
        offset += len(line) + 1
    return np.array(labels, dtype=int), np.array(rows, dtype=float).reshape(-1, k)


def read_assignments(path):
    with open(path, encoding="utf-8") as fh:
        return parse_assignments(fh.read())


def _pack(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape) + arr.tobytes()


def dumps_model(model):
    meta = {
        "params": model.get_params(),
        "n_features": model.n_features_in_,
        "n_clusters": model.n_clusters_,
        "head": {"agreement": model.head_.agreement, "epochs": model.head_.epochs,
                 "warning": model.head_.warning},
    }
    raw = json.dumps(meta, sort_keys=True).encode()
    arrays = [getattr(model, a) for a in _ARRAYS] + model.head_.arrays()
    parts = [struct.pack("<4sII", MAGIC, VERSION, len(raw)), raw,
             struct.pack("<I", len(arrays))]
    parts += [_pack(a) for a in arrays]
    return b"".join(parts)


def loads_model(buf):
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError("truncated DPM1 file", pos)
        out = buf[pos:pos + n]
        pos += n
        return out

    magic, version, n_meta = struct.unpack("<4sII", take(12))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported DPM1 version {version}", 4)
    try:
        meta = json.loads(take(n_meta))
    except ValueError as exc:
        raise FormatError(f"unreadable metadata block: {exc}", 12) from None
    (count,) = struct.unpack("<I", take(4))
    if count != len(_ARRAYS) + len(_HEAD):
        raise FormatError(f"expected {len(_ARRAYS) + len(_HEAD)} arrays, found {count}", pos - 4)
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(shape))
        arrays.append(np.frombuffer(take(8 * size), "<f8").reshape(shape).copy())
    if pos != len(buf):
        raise FormatError("trailing bytes after last array", pos)

    model = DPMMClustering(**meta["params"])
    for name, arr in zip(_ARRAYS, arrays):
        setattr(model, name, arr)
    model.cluster_counts_ = model.cluster_counts_.astype(int)
    head = MLPHead(*arrays[len(_ARRAYS):])
    head.agreement = meta["head"]["agreement"]
    head.epochs = meta["head"]["epochs"]
    head.warning = meta["head"]["warning"]
    model.head_ = head
    model.n_features_in_ = meta["n_features"]
    model.n_clusters_ = meta["n_clusters"]
    return model


def save_model(model, path):
    return atomic_write(path, dumps_model(model))


def load_model(path):
    with open(path, "rb") as fh:
        return loads_model(fh.read())
