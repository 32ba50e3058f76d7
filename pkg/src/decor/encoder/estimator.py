import logging

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ConfigError, NumericalError, ShapeError
from .model import build_autoencoder

logger = logging.getLogger(__name__)

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def mse_loss(a, b):
    """Mean squared difference of two equally shaped image batches."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).mean()


def _as_images(X, dtype):
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4 or X.shape[1] != 1 or X.shape[2] != X.shape[3]:
        raise ShapeError(f"expected square single-channel images, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain NaN or infinite values")
    return torch.as_tensor(X, dtype=dtype)


class OrientationInvariantAutoencoder(TransformerMixin, BaseEstimator):
    """Convolutional autoencoder whose latent code ignores D4 orientation.

    ``fit`` trains encoder and decoder jointly on reconstruction MSE with
    Adam; ``transform`` returns latent codes and ``inverse_transform``
    decodes them.  With ``equivariant=False`` a plain CNN encoder
    (``cae_channels``) replaces the equivariant blocks.

    Parameters
    ----------
    equivariant : bool, default=True
    fields : tuple of int, default=(8, 16, 32)
        Regular-representation fields per equivariant block.
    cae_channels : tuple of int, default=(16, 32, 64, 256)
    decoder_channels : tuple of int, default=(64, 32, 16, 8)
    latent_dim : int, default=128
    kernel_size : int, default=3
    pooling : {"max", "mean"}, default="max"
        Reduction over orientation channels.
    epochs : int, default=50
    batch_size : int, default=32
    learning_rate : float, default=1e-3
    seed : int, default=0
        Seeds weight initialisation and the per-epoch shuffle.
    dtype : {"float32", "float64"}, default="float32"

    Attributes
    ----------
    module_ : torch.nn.Module
    loss_curve_ : list of float
        Mean training MSE per epoch.
    image_size_ : int
    """

    def __init__(self, equivariant=True, fields=(8, 16, 32),
                 cae_channels=(16, 32, 64, 256), decoder_channels=(64, 32, 16, 8),
                 latent_dim=128, kernel_size=3, pooling="max", epochs=50,
                 batch_size=32, learning_rate=1e-3, seed=0, dtype="float32"):
        self.equivariant = equivariant
        self.fields = fields
        self.cae_channels = cae_channels
        self.decoder_channels = decoder_channels
        self.latent_dim = latent_dim
        self.kernel_size = kernel_size
        self.pooling = pooling
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.dtype = dtype

    def _validate_params(self):
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dtype not in _DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}")

    def _init_module(self, image_size):
        self.image_size_ = int(image_size)
        self.module_ = build_autoencoder(
            self.image_size_,
            equivariant=self.equivariant,
            fields=tuple(self.fields),
            cae_channels=tuple(self.cae_channels),
            decoder_channels=tuple(self.decoder_channels),
            latent_dim=self.latent_dim,
            kernel_size=self.kernel_size,
            pooling=self.pooling,
            seed=self.seed,
            dtype=_DTYPES[self.dtype],
        )
        return self.module_

    def fit(self, X, y=None):
        self._validate_params()
        images = _as_images(X, _DTYPES[self.dtype])
        n = len(images)
        if n == 0:
            raise ConfigError("cannot train on an empty dataset")
        module = self._init_module(images.shape[-1])
        opt = torch.optim.Adam(module.parameters(), lr=self.learning_rate,
                               betas=(0.9, 0.999), eps=1e-8)
        rng = np.random.default_rng(self.seed)
        self.loss_curve_ = []
        module.train()
        for epoch in range(self.epochs):
            order = torch.as_tensor(rng.permutation(n))
            total = 0.0
            for b, start in enumerate(range(0, n, self.batch_size)):
                batch = images[order[start:start + self.batch_size]]
                opt.zero_grad()
                loss = mse_loss(module(batch), batch)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericalError(
                        f"non-finite training loss at epoch {epoch + 1}, batch {b + 1}"
                    )
                loss.backward()
                opt.step()
                total += value * len(batch)
            self.loss_curve_.append(total / n)
            logger.debug("epoch %d loss %.6g", epoch + 1, self.loss_curve_[-1])
        for name, p in module.named_parameters():
            if not torch.all(torch.isfinite(p)):
                raise NumericalError(f"parameter {name} became non-finite during training")
        module.eval()
        self.n_features_in_ = self.image_size_ ** 2
        return self

    def initialize(self, image_size):
        """Build untrained (seeded) weights without fitting."""
        self._validate_params()
        self._init_module(image_size)
        self.loss_curve_ = []
        self.n_features_in_ = self.image_size_ ** 2
        return self

    def _batches(self, tensor, fn, batch_size=256):
        with torch.no_grad():
            outs = [fn(tensor[i:i + batch_size]) for i in range(0, len(tensor), batch_size)]
        return outs

    def transform(self, X):
        check_is_fitted(self, "module_")
        images = _as_images(X, _DTYPES[self.dtype])
        if images.shape[-1] != self.image_size_:
            raise ShapeError(f"model expects {self.image_size_}px images, got {images.shape[-1]}")
        if len(images) == 0:
            return np.zeros((0, self.latent_dim))
        outs = self._batches(images, self.module_.encoder)
        return torch.cat(outs).double().numpy()

    def inverse_transform(self, Z):
        check_is_fitted(self, "module_")
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.latent_dim:
            raise ShapeError(f"expected (n, {self.latent_dim}) latents, got shape {Z.shape}")
        if not np.all(np.isfinite(Z)):
            raise ValueError("latent codes contain NaN or infinite values")
        z = torch.as_tensor(Z, dtype=_DTYPES[self.dtype])
        outs = self._batches(z, self.module_.decoder)
        return torch.cat(outs)[:, 0].double().numpy()

    def reconstruction_error(self, X):
        """MSE between images and their reconstructions."""
        check_is_fitted(self, "module_")
        images = _as_images(X, _DTYPES[self.dtype])
        with torch.no_grad():
            return float(mse_loss(self.module_(images), images))

    def score(self, X, y=None):
        return -self.reconstruction_error(X)
