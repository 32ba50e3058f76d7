"""Cluster montages as binary PPM (P6) images.

Tiles are laid out row-major by sample index. Die values map to grey
levels (off-wafer black, normal grey, defect white), and flagged outliers
get a 2-pixel red frame drawn inside their tile.
"""

import math

import numpy as np

from .._files import atomic_write

GREY = np.array([0, 128, 255], dtype=np.uint8)
RED = np.array([255, 0, 0], dtype=np.uint8)
BORDER = 2


def montage(cells, flagged, columns=None, scale=1):
    """RGB array for the stack ``cells`` with ``flagged`` tiles outlined."""
    cells = np.asarray(cells)
    n, h, w = cells.shape
    if n == 0:
        raise ValueError("nothing to draw")
    cols = columns or math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    th, tw = h * scale, w * scale
    img = np.zeros((rows * th, cols * tw, 3), dtype=np.uint8)
    for i in range(n):
        tile = GREY[cells[i]].repeat(scale, 0).repeat(scale, 1)
        tile = np.repeat(tile[:, :, None], 3, axis=2)
        if flagged[i]:
            tile[:BORDER], tile[-BORDER:] = RED, RED
            tile[:, :BORDER], tile[:, -BORDER:] = RED, RED
        r, c = divmod(i, cols)
        img[r * th:(r + 1) * th, c * tw:(c + 1) * tw] = tile
    return img


def encode_ppm(img):
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img, np.uint8).tobytes()


def decode_ppm(buf):
    """Inverse of :func:`encode_ppm` (for tests and tooling)."""
    magic, dims, maxval, rest = buf.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError("not an 8-bit binary PPM")
    w, h = map(int, dims.split())
    return np.frombuffer(rest, np.uint8).reshape(h, w, 3)


def render_montage(ds, labels, final_flags, cluster, path, columns=None, scale=1):
    """Write the montage of ``cluster`` to ``path``; returns the image array."""
    labels = np.asarray(labels)
    members = np.flatnonzero(labels == cluster)
    if len(members) == 0:
        known = ", ".join(str(c) for c in np.unique(labels))
        raise ValueError(f"unknown cluster id {cluster}; clusters present: {known}")
    img = montage(ds.cells[members], np.asarray(final_flags, bool)[members], columns, scale)
    atomic_write(path, encode_ppm(img))
    return img
