"""Autoencoder networks: the D4-invariant encoder, a plain CNN encoder and
the shared (non-equivariant) decoder."""

import math

import torch
from torch import nn

from ..exceptions import ConfigError, ShapeError
from . import layers


def _uniform(shape, fan_in, generator, dtype):
    bound = math.sqrt(1.0 / fan_in)
    w = torch.rand(shape, generator=generator, dtype=dtype) * (2 * bound) - bound
    return nn.Parameter(w)


class LiftConv(nn.Module):
    def __init__(self, in_channels, out_fields, kernel_size, generator, dtype):
        super().__init__()
        shape = (out_fields, in_channels, kernel_size, kernel_size)
        self.weight = _uniform(shape, in_channels * kernel_size**2, generator, dtype)
        self.bias = nn.Parameter(torch.zeros(out_fields, dtype=dtype))

    def forward(self, x):
        return layers.lift_conv(x, self.weight, self.bias)


class GroupConv(nn.Module):
    def __init__(self, in_fields, out_fields, kernel_size, generator, dtype):
        super().__init__()
        shape = (out_fields, in_fields, layers.ORDER, kernel_size, kernel_size)
        fan_in = in_fields * layers.ORDER * kernel_size**2
        self.weight = _uniform(shape, fan_in, generator, dtype)
        self.bias = nn.Parameter(torch.zeros(out_fields, dtype=dtype))

    def forward(self, x):
        return layers.group_conv(x, self.weight, self.bias)


def _linear(n_in, n_out, generator, dtype):
    lin = nn.Linear(n_in, n_out, dtype=dtype)
    with torch.no_grad():
        lin.weight.copy_(_uniform((n_out, n_in), n_in, generator, dtype))
        lin.bias.zero_()
    return lin


def _plain_conv(cls, n_in, n_out, generator, dtype, **kw):
    conv = cls(n_in, n_out, 3, dtype=dtype, **kw)
    fan_in = conv.weight.shape[1] * 9 if cls is nn.Conv2d else conv.weight.shape[0] * 9
    with torch.no_grad():
        conv.weight.copy_(_uniform(conv.weight.shape, fan_in, generator, dtype))
        conv.bias.zero_()
    return conv


class EquivariantEncoder(nn.Module):
    """Lift -> group conv -> group conv (each + ReLU + 2x2 avg pool), then
    group pooling, spatial orbit pooling and an affine map to the latent."""

    def __init__(self, image_size, fields=(8, 16, 32), latent_dim=128, kernel_size=3,
                 pooling="max", generator=None, dtype=torch.float32):
        super().__init__()
        if image_size % 8:
            raise ConfigError(f"image size must be divisible by 8, got {image_size}")
        self.image_size = image_size
        self.pooling = pooling
        blocks = [LiftConv(1, fields[0], kernel_size, generator, dtype)]
        for a, b in zip(fields[:-1], fields[1:]):
            blocks.append(GroupConv(a, b, kernel_size, generator, dtype))
        self.blocks = nn.ModuleList(blocks)
        side = image_size >> len(blocks)
        self.register_buffer(
            "orbit_matrix", torch.as_tensor(layers.orbit_pool_matrix(side), dtype=dtype)
        )
        n_features = fields[-1] * self.orbit_matrix.shape[0]
        self.project = _linear(n_features, latent_dim, generator, dtype)

    def features(self, x):
        for block in self.blocks:
            x = layers.pointwise_avg_pool(layers.relu(block(x)))
        return x

    def forward(self, x):
        _check_input(x, self.image_size)
        x = layers.group_pool(self.features(x), self.pooling)
        return self.project(layers.orbit_pool(x, self.orbit_matrix))


class PlainEncoder(nn.Module):
    """Conventional CNN encoder (no symmetry constraint): every conv but the
    last is followed by ReLU and 2x2 average pooling; the last conv's map is
    flattened into the affine latent projection."""

    def __init__(self, image_size, channels=(16, 32, 64, 256), latent_dim=128,
                 generator=None, dtype=torch.float32):
        super().__init__()
        n_pools = len(channels) - 1
        if image_size % (1 << n_pools):
            raise ConfigError(f"image size must be divisible by {1 << n_pools}, got {image_size}")
        self.image_size = image_size
        chans = (1,) + tuple(channels)
        self.convs = nn.ModuleList(
            _plain_conv(nn.Conv2d, a, b, generator, dtype, padding=1)
            for a, b in zip(chans[:-1], chans[1:])
        )
        side = image_size >> n_pools
        self.project = _linear(channels[-1] * side * side, latent_dim, generator, dtype)

    def forward(self, x):
        _check_input(x, self.image_size)
        for i, conv in enumerate(self.convs):
            x = torch.relu(conv(x))
            if i < len(self.convs) - 1:
                x = layers.pointwise_avg_pool(x)
        return self.project(x.flatten(1))


class Decoder(nn.Module):
    """Affine map to a coarse grid, three stride-2 transpose convs with ReLU,
    a 3x3 output conv and a sigmoid."""

    def __init__(self, image_size, channels=(64, 32, 16, 8), latent_dim=128,
                 generator=None, dtype=torch.float32):
        super().__init__()
        if image_size % 8:
            raise ConfigError(f"image size must be divisible by 8, got {image_size}")
        self.side = image_size // 8
        self.channels = tuple(channels)
        self.expand = _linear(latent_dim, channels[0] * self.side**2, generator, dtype)
        self.ups = nn.ModuleList(
            _plain_conv(nn.ConvTranspose2d, a, b, generator, dtype,
                        stride=2, padding=1, output_padding=1)
            for a, b in zip(channels[:-1], channels[1:])
        )
        self.out = _plain_conv(nn.Conv2d, channels[-1], 1, generator, dtype, padding=1)

    def forward(self, z):
        x = self.expand(z).reshape(len(z), self.channels[0], self.side, self.side)
        for up in self.ups:
            x = torch.relu(up(x))
        return torch.sigmoid(self.out(x))


class AutoEncoder(nn.Module):
    def __init__(self, encoder, decoder):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    def forward(self, x):
        return self.decoder(self.encoder(x))


def _check_input(x, size):
    if x.dim() != 4 or x.shape[1] != 1 or x.shape[-1] != size or x.shape[-2] != size:
        raise ShapeError(f"expected (batch, 1, {size}, {size}) images, got {tuple(x.shape)}")


def build_autoencoder(image_size, equivariant=True, fields=(8, 16, 32),
                      cae_channels=(16, 32, 64, 256), decoder_channels=(64, 32, 16, 8),
                      latent_dim=128, kernel_size=3, pooling="max", seed=0,
                      dtype=torch.float32):
    if len(decoder_channels) != 4:
        raise ConfigError("decoder_channels needs 4 widths (input grid + 3 upsampling blocks)")
    gen = torch.Generator().manual_seed(int(seed))
    if equivariant:
        if len(fields) != 3:
            raise ConfigError("the equivariant encoder has exactly 3 blocks")
        enc = EquivariantEncoder(image_size, fields, latent_dim, kernel_size, pooling, gen, dtype)
    else:
        enc = PlainEncoder(image_size, cae_channels, latent_dim, gen, dtype)
    dec = Decoder(image_size, decoder_channels, latent_dim, gen, dtype)
    return AutoEncoder(enc, dec)
