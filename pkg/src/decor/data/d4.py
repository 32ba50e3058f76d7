"""The dihedral group of the square and its action on images.

An element ``(rotation, flip)`` acts as "mirror left-right first (if
``flip``), then rotate ``rotation`` quarter-turns counter-clockwise",
i.e. ``R**rotation @ F**flip``.  Elements are indexed ``4 * flip + rotation``
so orientation channels can be laid out in a fixed order.
"""

from typing import NamedTuple

import numpy as np

from ..exceptions import ShapeError

ORDER = 8


class D4Element(NamedTuple):
    rotation: int = 0
    flip: bool = False

    @property
    def index(self) -> int:
        return 4 * int(self.flip) + self.rotation % 4

    @classmethod
    def from_index(cls, i):
        return cls(int(i) % 4, bool(int(i) // 4))

    def __mul__(self, other):
        # F R F = R^-1, so F^f1 R^r2 = R^((-1)^f1 r2) F^f1
        r2 = -other.rotation if self.flip else other.rotation
        return D4Element((self.rotation + r2) % 4, self.flip != other.flip)

    def inverse(self):
        if self.flip:
            return self
        return D4Element((-self.rotation) % 4, False)


ELEMENTS = tuple(D4Element.from_index(i) for i in range(ORDER))
IDENTITY = ELEMENTS[0]

# CAYLEY[a, b] = index of ELEMENTS[a] * ELEMENTS[b]
CAYLEY = np.array([[(a * b).index for b in ELEMENTS] for a in ELEMENTS])
INVERSE = np.array([g.inverse().index for g in ELEMENTS])


def as_element(g):
    if isinstance(g, D4Element):
        return g
    return D4Element.from_index(g)


def d4_transform(img, g):
    """Apply ``g`` to the trailing two (square) axes of ``img``.

    Works on numpy arrays and torch tensors alike; the result is an exact
    pixel permutation.
    """
    g = as_element(g)
    if img.shape[-1] != img.shape[-2]:
        raise ShapeError(f"D4 transform needs a square image, got {tuple(img.shape[-2:])}")
    if isinstance(img, np.ndarray):
        out = np.flip(img, axis=-1) if g.flip else img
        return np.ascontiguousarray(np.rot90(out, g.rotation, axes=(-2, -1)))
    import torch

    out = torch.flip(img, dims=(-1,)) if g.flip else img
    return torch.rot90(out, g.rotation, dims=(-2, -1))


def regular_permutation(g):
    """Channel permutation of the regular representation.

    ``perm[h]`` is the source orientation for target orientation ``h``:
    ``(g . f)[h] = f[g^-1 h]``.
    """
    g = as_element(g)
    ginv = g.inverse().index
    return CAYLEY[ginv]
