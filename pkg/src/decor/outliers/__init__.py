"""Cluster-wise outlier detection: isolation forest AND local outlier factor."""

from .ensemble import (
    ClusterOutliers,
    EnsembleOutlierDetector,
    OutlierReport,
    detect_outliers,
    read_report,
    write_report,
)
from .iforest import IsolationForest, average_path_length
from .lof import LocalOutlierFactor, lof_scores
from .robust import adaptive_k, mad, robust_cut

__all__ = [
    "ClusterOutliers",
    "EnsembleOutlierDetector",
    "IsolationForest",
    "LocalOutlierFactor",
    "OutlierReport",
    "adaptive_k",
    "average_path_length",
    "detect_outliers",
    "lof_scores",
    "mad",
    "read_report",
    "robust_cut",
    "write_report",
]
