"""Non-parametric (DP mixture) and parametric (k-means) clustering."""

from .dpmm import ClusterState, fit_dpmm, merge_log_ratio, split_log_ratio, stick_weights
from .estimator import DPMMClustering
from .head import MLPHead, fit_head, soft_cluster
from .io import (
    format_assignments,
    load_model,
    loads_model,
    dumps_model,
    parse_assignments,
    read_assignments,
    save_model,
    write_assignments,
)
from .kmeans import KMeansClustering, kmeans, kmeans_plusplus, lloyd
from .niw import NIWPrior, Stats, log_predictive, niw_log_marginal

__all__ = [
    "ClusterState",
    "DPMMClustering",
    "KMeansClustering",
    "MLPHead",
    "NIWPrior",
    "Stats",
    "dumps_model",
    "fit_dpmm",
    "fit_head",
    "format_assignments",
    "kmeans",
    "kmeans_plusplus",
    "lloyd",
    "load_model",
    "loads_model",
    "log_predictive",
    "merge_log_ratio",
    "niw_log_marginal",
    "parse_assignments",
    "read_assignments",
    "save_model",
    "soft_cluster",
    "split_log_ratio",
    "stick_weights",
    "write_assignments",
]
