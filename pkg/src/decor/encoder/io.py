"""Embedding (EMB1) and encoder checkpoint (RCAE) files, little-endian.

EMB1::

    b"EMB1" | u32 count | u32 dim | count*dim f32, row-major

RCAE::

    b"RCAE" | u32 version | u32 n | n bytes UTF-8 JSON (estimator params,
    image size, loss curve) | u32 n_tensors | per tensor, in the module's
    ``named_parameters()`` order:
        u16 name_len | name | u8 dtype (0 = f32, 1 = f64) | u8 ndim |
        ndim x u32 dims | raw values, C order
"""

import json
import struct

import numpy as np
import torch

from .._files import atomic_write
from ..exceptions import FormatError
from .estimator import OrientationInvariantAutoencoder

EMB_MAGIC = b"EMB1"
CKPT_MAGIC = b"RCAE"
CKPT_VERSION = 1
_DT = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def dumps_embeddings(Z):
    Z = np.ascontiguousarray(Z, dtype="<f4")
    if Z.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {Z.shape}")
    return struct.pack("<4sII", EMB_MAGIC, *Z.shape) + Z.tobytes()


def loads_embeddings(buf):
    if len(buf) < 12:
        raise FormatError("truncated EMB1 header", len(buf))
    magic, count, dim = struct.unpack_from("<4sII", buf)
    if magic != EMB_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {EMB_MAGIC!r}", 0)
    need = 12 + 4 * count * dim
    if len(buf) != need:
        raise FormatError(f"payload is {len(buf) - 12} bytes, expected {need - 12}",
                          min(len(buf), need))
    return np.frombuffer(buf, "<f4", count * dim, 12).reshape(count, dim).astype(np.float64)


def write_embeddings(Z, path):
    return atomic_write(path, dumps_embeddings(Z))


def read_embeddings(path):
    with open(path, "rb") as fh:
        return loads_embeddings(fh.read())


def dumps_checkpoint(model):
    header = dict(model.get_params())
    header["fields"] = list(header["fields"])
    header["cae_channels"] = list(header["cae_channels"])
    header["decoder_channels"] = list(header["decoder_channels"])
    header["image_size"] = model.image_size_
    header["loss_curve"] = [float(v) for v in model.loss_curve_]
    meta = json.dumps(header, sort_keys=True).encode()
    parts = [struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(meta)), meta]
    params = list(model.module_.named_parameters())
    parts.append(struct.pack("<I", len(params)))
    for name, p in params:
        arr = p.detach().cpu().numpy()
        code = 0 if arr.dtype == np.float32 else 1
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<BB{arr.ndim}I", code, arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DT[code]).tobytes())
    return b"".join(parts)


def loads_checkpoint(buf):
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError("truncated checkpoint", pos)
        out = buf[pos:pos + n]
        pos += n
        return out

    magic, version, n_meta = struct.unpack("<4sII", take(12))
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}", 0)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    try:
        header = json.loads(take(n_meta))
    except ValueError as exc:
        raise FormatError(f"unreadable config block: {exc}", 12) from None
    image_size = header.pop("image_size")
    loss_curve = header.pop("loss_curve")
    for key in ("fields", "cae_channels", "decoder_channels"):
        header[key] = tuple(header[key])
    model = OrientationInvariantAutoencoder(**header).initialize(image_size)
    model.loss_curve_ = loss_curve
    params = dict(model.module_.named_parameters())
    (n_tensors,) = struct.unpack("<I", take(4))
    if n_tensors != len(params):
        raise FormatError(f"{n_tensors} tensors stored, model has {len(params)}", pos - 4)
    for _ in range(n_tensors):
        start = pos
        (n_name,) = struct.unpack("<H", take(2))
        name = take(n_name).decode()
        code, ndim = struct.unpack("<BB", take(2))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        if name not in params or tuple(params[name].shape) != shape or code not in _DT:
            raise FormatError(f"unexpected tensor {name!r} with shape {shape}", start)
        dt = _DT[code]
        arr = np.frombuffer(take(dt.itemsize * int(np.prod(shape))), dt).reshape(shape)
        with torch.no_grad():
            params[name].copy_(torch.as_tensor(arr.copy()))
    if pos != len(buf):
        raise FormatError("trailing bytes after last tensor", pos)
    model.module_.eval()
    return model


def save_checkpoint(model, path):
    return atomic_write(path, dumps_checkpoint(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
