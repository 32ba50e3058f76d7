"""Wafer map -> image preprocessing: scale, edge mask, resize, blur."""

import numpy as np
from scipy.ndimage import correlate1d
from sklearn.base import BaseEstimator, TransformerMixin

from ..exceptions import ConfigError, ShapeError
from .wafer import Dataset, WaferMap


def gaussian_kernel(size=5, sigma=1.0):
    if size < 1 or size % 2 == 0:
        raise ConfigError(f"blur kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ConfigError(f"blur sigma must be positive, got {sigma}")
    half = size // 2
    taps = np.exp(-np.arange(-half, half + 1) ** 2 / (2.0 * sigma**2))
    return taps / taps.sum()


def gaussian_blur(img, size=5, sigma=1.0):
    """Separable Gaussian blur over the last two axes, reflect borders."""
    k = gaussian_kernel(size, sigma)
    out = correlate1d(img, k, axis=-1, mode="reflect")
    return correlate1d(out, k, axis=-2, mode="reflect")


def edge_mask(size, margin=2):
    c = (size - 1) / 2.0
    radius = size / 2.0 - margin
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - c) ** 2 + (xx - c) ** 2 <= radius**2


def resize(img, target):
    """Nearest-neighbour resample of the last two axes to ``target x target``."""
    if target < 8:
        raise ConfigError(f"resize target must be >= 8, got {target}")
    img = np.asarray(img)
    h, w = img.shape[-2:]
    rows = (2 * np.arange(target) + 1) * h // (2 * target)
    cols = (2 * np.arange(target) + 1) * w // (2 * target)
    return img[..., rows[:, None], cols[None, :]]


def normalize_and_mask(
    cells, blur_kernel=5, blur_sigma=1.0, edge_margin=2, target_size=None
):
    """Turn die grids into float images in [0, 1].

    ``cells`` may be a single ``WaferMap``, an ``(h, w)`` grid or a stack
    ``(n, h, w)``.  Cells {0, 1, 2} scale to {0, 0.5, 1}; pixels outside the
    inscribed circle shrunk by ``edge_margin`` dies are zeroed at native
    resolution; the result is then optionally resized and finally blurred.
    Pass ``blur_kernel=None`` to skip the blur.
    """
    if isinstance(cells, WaferMap):
        cells = cells.cells
    cells = np.asarray(cells)
    h, w = cells.shape[-2:]
    if h != w:
        raise ShapeError(f"wafer maps must be square, got {h}x{w}")
    img = cells.astype(np.float64) * 0.5
    img = img * edge_mask(h, edge_margin)
    if target_size is not None and target_size != h:
        img = resize(img, target_size)
    if blur_kernel:
        img = gaussian_blur(img, blur_kernel, blur_sigma)
    return np.clip(img, 0.0, 1.0)


class WaferPreprocessor(TransformerMixin, BaseEstimator):
    """Stateless transformer: die grids or a ``Dataset`` -> image stack.

    Parameters
    ----------
    blur_kernel : int or None, default=5
    blur_sigma : float, default=1.0
    edge_margin : float, default=2
        Dies trimmed off the inscribed circle before blurring.
    image_size : int or None, default=None
        Nearest-neighbour resize target; ``None`` keeps native size.
    """

    def __init__(self, blur_kernel=5, blur_sigma=1.0, edge_margin=2, image_size=None):
        self.blur_kernel = blur_kernel
        self.blur_sigma = blur_sigma
        self.edge_margin = edge_margin
        self.image_size = image_size

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        if isinstance(X, Dataset):
            X = X.cells
        X = np.asarray(X)
        if X.ndim != 3:
            raise ShapeError(f"expected a stack of maps (n, h, w), got shape {X.shape}")
        if len(X) == 0:
            side = self.image_size or X.shape[-1]
            return np.zeros((0, side, side))
        return normalize_and_mask(
            X, self.blur_kernel, self.blur_sigma, self.edge_margin, self.image_size
        )

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
