"""Wafer-map datasets: generation, preprocessing, orientation transforms, splits, I/O."""

from .d4 import ELEMENTS, IDENTITY, D4Element, d4_transform, regular_permutation
from .io import read_dataset, write_dataset
from .preprocessing import (
    WaferPreprocessor,
    edge_mask,
    gaussian_blur,
    gaussian_kernel,
    normalize_and_mask,
    resize,
)
from .split import iterative_stratification, multilabel_stratified_split
from .synthetic import GeneratorConfig, PatternGeometry, generate_synthetic, wafer_disk
from .wafer import PATTERNS, Dataset, WaferMap, label_mask, label_names, parse_combo

__all__ = [
    "D4Element",
    "Dataset",
    "ELEMENTS",
    "GeneratorConfig",
    "IDENTITY",
    "PATTERNS",
    "PatternGeometry",
    "WaferMap",
    "WaferPreprocessor",
    "d4_transform",
    "edge_mask",
    "gaussian_blur",
    "gaussian_kernel",
    "generate_synthetic",
    "iterative_stratification",
    "label_mask",
    "label_names",
    "multilabel_stratified_split",
    "normalize_and_mask",
    "parse_combo",
    "read_dataset",
    "regular_permutation",
    "resize",
    "wafer_disk",
    "write_dataset",
]
