"""Wafer-map containers and the defect label bitmask."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError

PATTERNS = (
    "Center",
    "Donut",
    "Edge-Loc",
    "Edge-Ring",
    "Loc",
    "Near-full",
    "Scratch",
    "Random",
)
NORMAL = "Normal"

OFF_WAFER, NORMAL_DIE, DEFECT_DIE = 0, 1, 2


def label_mask(names):
    """Bitmask for an iterable of pattern names (empty -> 0, Normal)."""
    mask = 0
    for name in names:
        if name == NORMAL:
            continue
        try:
            mask |= 1 << PATTERNS.index(name)
        except ValueError:
            raise ValueError(f"unknown defect pattern {name!r}") from None
    return mask


def label_names(mask):
    mask = int(mask)
    if not 0 <= mask <= 255:
        raise ValueError(f"label mask {mask} outside [0, 255]")
    return tuple(p for i, p in enumerate(PATTERNS) if mask >> i & 1)


def parse_combo(text):
    """``"Center+Scratch"`` -> bitmask. ``"Normal"`` -> 0."""
    parts = [p.strip() for p in text.split("+") if p.strip()]
    return label_mask(parts)


def mask_to_multihot(masks):
    masks = np.asarray(masks, dtype=np.uint8)
    return ((masks[:, None] >> np.arange(8, dtype=np.uint8)) & 1).astype(bool)


@dataclass(frozen=True)
class WaferMap:
    cells: np.ndarray
    labels: int = 0

    @property
    def height(self):
        return self.cells.shape[0]

    @property
    def width(self):
        return self.cells.shape[1]

    @property
    def label_names(self):
        return label_names(self.labels)


@dataclass
class Dataset:
    """A stack of equally sized wafer maps.

    ``cells`` has shape ``(n, height, width)`` and dtype uint8, ``labels``
    holds one bitmask per map.
    """

    cells: np.ndarray
    labels: np.ndarray
    provenance: str = ""
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if self.cells.ndim != 3:
            raise ShapeError(f"cells must be (n, h, w), got shape {self.cells.shape}")
        if len(self.labels) != len(self.cells):
            raise ShapeError(
                f"{len(self.cells)} maps but {len(self.labels)} label masks"
            )
        if self.cells.size and self.cells.max() > DEFECT_DIE:
            raise ValueError("cell values must be in {0, 1, 2}")

    def __len__(self):
        return len(self.cells)

    def __getitem__(self, i):
        return WaferMap(self.cells[i], int(self.labels[i]))

    @property
    def shape(self):
        return self.cells.shape[1:]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.cells[indices], self.labels[indices], self.provenance, self.seed
        )

    @classmethod
    def from_maps(cls, maps, provenance="", seed=0):
        maps = list(maps)
        if not maps:
            return cls(np.zeros((0, 0, 0), np.uint8), np.zeros(0, np.uint8), provenance, seed)
        shapes = {m.cells.shape for m in maps}
        if len(shapes) != 1:
            raise ShapeError(f"maps have differing shapes: {sorted(shapes)}")
        cells = np.stack([m.cells for m in maps])
        labels = np.array([m.labels for m in maps], dtype=np.uint8)
        return cls(cells, labels, provenance, seed)
