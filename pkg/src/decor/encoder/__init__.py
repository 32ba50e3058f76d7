"""D4-invariant convolutional autoencoder (and its plain-CNN baseline)."""

import numpy as np

from ..data.preprocessing import WaferPreprocessor
from .estimator import OrientationInvariantAutoencoder, mse_loss
from .io import (
    load_checkpoint,
    read_embeddings,
    save_checkpoint,
    write_embeddings,
)
from .layers import (
    expand_kernel,
    group_conv,
    group_pool,
    kernel_orbit,
    lift_conv,
    orbit_pool,
    pointwise_avg_pool,
    regular_action,
    relu,
)


def embed_dataset(ds, model, preprocessor=None):
    """Row ``i`` is the latent code of map ``i`` after preprocessing."""
    preprocessor = preprocessor or WaferPreprocessor(image_size=getattr(model, "image_size_", None))
    if len(ds) == 0:
        return np.zeros((0, model.latent_dim))
    return model.transform(preprocessor.transform(ds))


__all__ = [
    "OrientationInvariantAutoencoder",
    "embed_dataset",
    "expand_kernel",
    "group_conv",
    "group_pool",
    "kernel_orbit",
    "lift_conv",
    "load_checkpoint",
    "mse_loss",
    "orbit_pool",
    "pointwise_avg_pool",
    "read_embeddings",
    "regular_action",
    "relu",
    "save_checkpoint",
    "write_embeddings",
]
