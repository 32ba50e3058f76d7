"""D4-equivariant convolution built from explicit kernel orbits.

Feature maps with regular-representation fields use a field-major channel
layout: channel ``8 * field + g`` holds orientation ``g`` (see
:mod:`decor.data.d4` for the element order).  Under a group element ``k``
a regular feature map transforms as
``(k . f)[field, h](x) = f[field, k^-1 h](k^-1 x)``.
"""

import numpy as np
import torch
import torch.nn.functional as F

from ..data.d4 import ELEMENTS, ORDER, as_element, d4_transform, regular_permutation
from ..exceptions import ConfigError, ShapeError


def kernel_orbit(base, g):
    """Filter taps of ``base`` seen from orientation ``g``.

    ``base`` is ``(out, in, k, k)`` for a trivial-representation input or
    ``(out, in, 8, k, k)`` for a regular-representation input; in the latter
    case the input-orientation axis is permuted by the regular representation
    of ``g`` as well as spatially transformed.
    """
    k = base.shape[-1]
    if k % 2 == 0 or base.shape[-2] != k:
        raise ConfigError(f"kernel must be square with odd size, got {tuple(base.shape[-2:])}")
    g = as_element(g)
    if base.dim() == 5:
        perm = torch.as_tensor(regular_permutation(g), device=base.device)
        base = base.index_select(2, perm)
    elif base.dim() != 4:
        raise ShapeError(f"kernel must have 4 or 5 dims, got {base.dim()}")
    return d4_transform(base, g)


def expand_kernel(base):
    """Full filter bank with one output channel per (field, orientation)."""
    bank = torch.stack([kernel_orbit(base, g) for g in ELEMENTS], dim=1)
    out, _, in_ = bank.shape[:3]
    k = base.shape[-1]
    if base.dim() == 5:
        return bank.reshape(out * ORDER, in_ * ORDER, k, k)
    return bank.reshape(out * ORDER, in_, k, k)


def _conv(x, base, bias, in_channels):
    if x.dim() != 4 or x.shape[1] != in_channels:
        raise ShapeError(f"expected (batch, {in_channels}, h, w) input, got {tuple(x.shape)}")
    if x.shape[-1] != x.shape[-2]:
        raise ShapeError(f"equivariant convolution needs square maps, got {tuple(x.shape[-2:])}")
    if bias is not None:
        bias = bias.repeat_interleave(ORDER)
    return F.conv2d(x, expand_kernel(base), bias, padding=base.shape[-1] // 2)


def lift_conv(x, base, bias=None):
    """Trivial-input -> regular-output convolution (zero same-padding)."""
    return _conv(x, base, bias, base.shape[1])


def group_conv(x, base, bias=None):
    """Regular-input -> regular-output convolution (zero same-padding)."""
    return _conv(x, base, bias, base.shape[1] * ORDER)


def regular_action(features, g):
    """Apply ``g`` to a regular-representation feature map ``(b, f*8, h, w)``."""
    b, c, h, w = features.shape
    perm = torch.as_tensor(regular_permutation(g), device=features.device)
    x = features.reshape(b, c // ORDER, ORDER, h, w).index_select(2, perm)
    return d4_transform(x.reshape(b, c, h, w), g)


def relu(features):
    return F.relu(features)


def pointwise_avg_pool(features):
    """Mean over non-overlapping 2x2 blocks, per channel."""
    h, w = features.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(f"stride-2 pooling needs even spatial size, got {h}x{w}")
    return F.avg_pool2d(features, 2)


def group_pool(features, mode="max"):
    """Collapse the 8 orientation channels of every field."""
    b, c, h, w = features.shape
    if c % ORDER:
        raise ShapeError(f"channel count {c} is not a multiple of {ORDER}")
    x = features.reshape(b, c // ORDER, ORDER, h, w)
    if mode == "max":
        return x.amax(dim=2)
    if mode == "mean":
        return x.mean(dim=2)
    raise ConfigError(f"unknown group pooling mode {mode!r}")


def spatial_orbits(size):
    """Orbit id of every pixel of a ``size x size`` grid under D4."""
    idx = np.arange(size * size).reshape(size, size)
    # (g . idx)[p] = idx[g^-1 p] sweeps the whole orbit of p
    rep = np.min([d4_transform(idx, g) for g in ELEMENTS], axis=0)
    _, orbit = np.unique(rep, return_inverse=True)
    return orbit.reshape(size, size)


def orbit_pool_matrix(size):
    """``(n_orbits, size*size)`` averaging matrix over spatial D4 orbits."""
    orbit = spatial_orbits(size).reshape(-1)
    n = orbit.max() + 1
    A = np.zeros((n, size * size))
    A[orbit, np.arange(size * size)] = 1.0
    return A / A.sum(axis=1, keepdims=True)


def orbit_pool(features, matrix):
    """Average an invariant-field map over spatial D4 orbits -> flat vector."""
    b, f, h, w = features.shape
    pooled = features.reshape(b, f, h * w) @ matrix.T
    return pooled.reshape(b, -1)
