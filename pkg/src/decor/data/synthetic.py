"""Seeded synthetic wafer-map generator.

Pattern geometry is loosely modelled on the look of the eight base
defect types; every shape parameter lives in :class:`PatternGeometry`.
"""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError
from .d4 import ELEMENTS, d4_transform
from .wafer import DEFECT_DIE, NORMAL_DIE, PATTERNS, Dataset, parse_combo


@dataclass(frozen=True)
class PatternGeometry:
    # radii are fractions of the wafer radius unless stated in dies
    center_radius: tuple = (0.2, 0.3)
    donut_inner: tuple = (0.3, 0.4)
    donut_outer: tuple = (0.55, 0.65)
    edge_ring_width: tuple = (2, 3)  # dies
    edge_loc_width: tuple = (3, 5)  # dies
    edge_loc_halfangle: tuple = (25.0, 45.0)  # degrees
    loc_offset: tuple = (0.2, 0.55)
    loc_radius: tuple = (0.12, 0.2)
    near_full_fill: float = 0.95
    scratch_halfwidth: tuple = (0.5, 1.0)  # dies
    scratch_length: tuple = (0.9, 1.6)
    scratch_offset: float = 0.4
    random_rate: float = 0.1
    fill: float = 0.9


@dataclass
class GeneratorConfig:
    """``counts`` maps a label bitmask (or a ``"Center+Scratch"`` string)
    to the number of maps drawn for that combination."""

    size: int = 32
    counts: dict = field(default_factory=dict)
    noise: float = 0.0
    geometry: PatternGeometry = field(default_factory=PatternGeometry)

    def validate(self):
        if not isinstance(self.size, (int, np.integer)) or self.size < 16 or self.size % 2:
            raise ConfigError(f"size must be an even integer >= 16, got {self.size!r}")
        if not 0.0 <= self.noise <= 0.1:
            raise ConfigError(f"noise rate must be in [0, 0.1], got {self.noise}")
        counts = {}
        for key, n in self.counts.items():
            mask = parse_combo(key) if isinstance(key, str) else int(key)
            if not 0 <= mask <= 255:
                raise ConfigError(f"label mask {mask} outside [0, 255]")
            if int(n) < 0:
                raise ConfigError(f"negative count {n} for pattern {key!r}")
            counts[mask] = counts.get(mask, 0) + int(n)
        return counts


def wafer_disk(size):
    """Boolean inscribed disk: die centres within ``size / 2`` of the centre."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - c) ** 2 + (xx - c) ** 2 <= (size / 2.0) ** 2


def _polar(size):
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    dy, dx = yy - c, xx - c
    return dx, dy, np.hypot(dx, dy), np.arctan2(dy, dx)


def _angdiff(a, b):
    return np.abs((a - b + np.pi) % (2 * np.pi) - np.pi)


def pattern_region(name, size, rng, geom=PatternGeometry()):
    """Boolean mask of the dies a single pattern covers (before D4 placement)."""
    R = size / 2.0
    dx, dy, r, theta = _polar(size)
    u = rng.uniform
    if name == "Center":
        return r <= u(*geom.center_radius) * R
    if name == "Donut":
        return (r >= u(*geom.donut_inner) * R) & (r <= u(*geom.donut_outer) * R)
    if name == "Edge-Ring":
        return r >= R - rng.integers(geom.edge_ring_width[0], geom.edge_ring_width[1] + 1)
    if name == "Edge-Loc":
        width = rng.integers(geom.edge_loc_width[0], geom.edge_loc_width[1] + 1)
        phi = u(0, 2 * np.pi)
        half = np.deg2rad(u(*geom.edge_loc_halfangle))
        return (r >= R - width) & (_angdiff(theta, phi) <= half)
    if name == "Loc":
        phi = u(0, 2 * np.pi)
        rho = u(*geom.loc_offset) * R
        cx, cy = rho * np.cos(phi), rho * np.sin(phi)
        return np.hypot(dx - cx, dy - cy) <= u(*geom.loc_radius) * R
    if name == "Near-full":
        return rng.random((size, size)) < geom.near_full_fill
    if name == "Scratch":
        phi = u(0, np.pi)
        ux, uy = np.cos(phi), np.sin(phi)
        along = dx * ux + dy * uy
        across = -dx * uy + dy * ux
        offset = u(-geom.scratch_offset, geom.scratch_offset) * R
        t0 = u(-0.3, 0.3) * R
        half_len = u(*geom.scratch_length) * R / 2
        return (np.abs(across - offset) <= u(*geom.scratch_halfwidth)) & (
            np.abs(along - t0) <= half_len
        )
    if name == "Random":
        return rng.random((size, size)) < geom.random_rate
    raise ValueError(f"unknown defect pattern {name!r}")


def draw_map(mask, size, rng, noise=0.0, geom=PatternGeometry()):
    disk = wafer_disk(size)
    cells = np.where(disk, NORMAL_DIE, 0).astype(np.uint8)
    for bit, name in enumerate(PATTERNS):
        if not mask >> bit & 1:
            continue
        region = pattern_region(name, size, rng, geom)
        if name not in ("Near-full", "Random"):
            region &= rng.random((size, size)) < geom.fill
        g = ELEMENTS[rng.integers(len(ELEMENTS))]
        region = d4_transform(region, g)
        cells[region & disk] = DEFECT_DIE
    if noise > 0:
        on = np.flatnonzero(disk.ravel())
        n_flip = int(round(noise * len(on)))
        picked = rng.choice(on, size=n_flip, replace=False)
        flat = cells.reshape(-1)
        flat[picked] = 3 - flat[picked]  # 1 <-> 2
    return cells


def generate_synthetic(config, seed=0):
    """Draw a :class:`Dataset` from ``config``; fully determined by ``seed``."""
    counts = config.validate()
    rng = np.random.default_rng(seed)
    size = int(config.size)
    maps, labels = [], []
    for mask, n in counts.items():
        for _ in range(n):
            maps.append(draw_map(mask, size, rng, config.noise, config.geometry))
            labels.append(mask)
    cells = np.stack(maps) if maps else np.zeros((0, size, size), np.uint8)
    spec = ", ".join(f"{m:#04x}:{n}" for m, n in counts.items())
    return Dataset(
        cells,
        np.array(labels, dtype=np.uint8),
        provenance=f"synthetic(size={size}, noise={config.noise}, counts={{{spec}}})",
        seed=seed,
    )
