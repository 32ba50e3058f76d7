"""Per-cluster Isolation Forest + LOF agreement with robust thresholds."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array

from .._files import atomic_write
from ..exceptions import ConfigError, FormatError, ShapeError
from .iforest import IsolationForest
from .lof import lof_scores
from .robust import adaptive_k, robust_cut

IF_RULES = ("both", "quantile", "robust")


@dataclass
class ClusterOutliers:
    cluster: int
    members: np.ndarray
    if_scores: np.ndarray = None
    lof_scores: np.ndarray = None
    if_threshold: float = float("nan")
    lof_threshold: float = float("nan")
    k_lof: int = 0
    if_flags: np.ndarray = None
    lof_flags: np.ndarray = None
    final_flags: np.ndarray = None
    skipped: str = ""

    def __post_init__(self):
        m = len(self.members)
        for name in ("if_flags", "lof_flags", "final_flags"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(m, dtype=bool))
        for name in ("if_scores", "lof_scores"):
            if getattr(self, name) is None:
                setattr(self, name, np.full(m, np.nan))


@dataclass
class OutlierReport:
    n_samples: int
    clusters: list = field(default_factory=list)

    @property
    def outliers(self):
        """Sorted sample indices flagged by both detectors (the union over clusters)."""
        picked = [c.members[c.final_flags] for c in self.clusters]
        return np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=int)

    @property
    def skipped(self):
        return [c.cluster for c in self.clusters if c.skipped]

    def per_sample(self, attr):
        fill = np.nan if attr.endswith("scores") else False
        out = np.full(self.n_samples, fill, dtype=float if attr.endswith("scores") else bool)
        for c in self.clusters:
            out[c.members] = getattr(c, attr)
        return out

    def counts(self):
        return {int(c.cluster): int(c.final_flags.sum()) for c in self.clusters}


def cluster_seed(seed, cluster):
    """Independent per-cluster seed so serial and parallel runs agree."""
    return int(np.random.SeedSequence([int(seed), int(cluster)]).generate_state(1)[0])


def _top_fraction(scores, fraction):
    """Mask of the ``ceil(fraction * n)`` highest scores (stable on ties)."""
    m = int(np.ceil(fraction * len(scores)))
    mask = np.zeros(len(scores), dtype=bool)
    mask[np.argsort(-scores, kind="stable")[:m]] = True
    return mask


def detect_cluster(X, cluster, members, k_cut=3.0, hi_cont=0.20, min_k=10, max_k=50,
                   min_cluster=15, seed=0, n_trees=100, max_samples=256, if_rule="both"):
    res = ClusterOutliers(cluster, np.asarray(members))
    if len(members) < max(min_cluster, 2):
        res.skipped = f"{len(members)} members < min_cluster={min_cluster}"
        return res
    forest = IsolationForest(n_trees, max_samples, seed=cluster_seed(seed, cluster)).fit(X)
    res.if_scores = forest.score_samples(X)
    res.if_threshold = robust_cut(res.if_scores, k_cut)
    above = res.if_scores > res.if_threshold
    prior = _top_fraction(res.if_scores, hi_cont)
    res.if_flags = {"both": prior & above, "quantile": prior, "robust": above}[if_rule]
    res.k_lof = adaptive_k(len(members), min_k, max_k)
    res.lof_scores = lof_scores(X, res.k_lof)
    res.lof_threshold = robust_cut(res.lof_scores, k_cut)
    res.lof_flags = res.lof_scores > res.lof_threshold
    res.final_flags = res.if_flags & res.lof_flags
    return res


def detect_outliers(Z, labels, k_cut=3.0, hi_cont=0.20, min_k=10, max_k=50,
                    min_cluster=15, seed=0, n_trees=100, max_samples=256, if_rule="both"):
    """Run the ensemble separately inside every cluster of ``labels``."""
    Z = check_array(Z, ensure_min_samples=0)
    labels = np.asarray(labels).reshape(-1)
    if len(labels) != len(Z):
        raise ShapeError(f"{len(labels)} labels for {len(Z)} embedding rows")
    if if_rule not in IF_RULES:
        raise ConfigError(f"if_rule must be one of {IF_RULES}, got {if_rule!r}")
    if not 0 < hi_cont <= 1:
        raise ConfigError(f"hi_cont must be in (0, 1], got {hi_cont}")
    if min_k > max_k:
        raise ConfigError(f"min_k={min_k} exceeds max_k={max_k}")
    report = OutlierReport(len(Z))
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        report.clusters.append(detect_cluster(
            Z[members], int(c), members, k_cut, hi_cont, min_k, max_k, min_cluster,
            seed, n_trees, max_samples, if_rule,
        ))
    return report


class EnsembleOutlierDetector(OutlierMixin, BaseEstimator):
    """Flags a point only when both the isolation forest and LOF do, each
    thresholded per cluster at ``median + k_cut * MAD`` of its scores.

    ``fit(Z, labels)`` stores the :class:`OutlierReport` in ``report_``;
    ``fit_predict`` returns -1 for outliers and 1 otherwise.
    """

    def __init__(self, k_cut=3.0, hi_cont=0.20, min_k=10, max_k=50, min_cluster=15,
                 n_trees=100, max_samples=256, if_rule="both", seed=0):
        self.k_cut = k_cut
        self.hi_cont = hi_cont
        self.min_k = min_k
        self.max_k = max_k
        self.min_cluster = min_cluster
        self.n_trees = n_trees
        self.max_samples = max_samples
        self.if_rule = if_rule
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X)
        labels = np.zeros(len(X), dtype=int) if y is None else y
        self.report_ = detect_outliers(
            X, labels, self.k_cut, self.hi_cont, self.min_k, self.max_k,
            self.min_cluster, self.seed, self.n_trees, self.max_samples, self.if_rule,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def fit_predict(self, X, y=None):
        self.fit(X, y)
        return np.where(self.report_.per_sample("final_flags"), -1, 1)


def format_report(report, labels):
    lines = ["# sample_index, cluster, if_score, lof_score, if_flag, lof_flag, final_flag"]
    cols = [report.per_sample(a) for a in
            ("if_scores", "lof_scores", "if_flags", "lof_flags", "final_flags")]
    for i in range(report.n_samples):
        s_if, s_lof, f_if, f_lof, f_fin = (c[i] for c in cols)
        lines.append(f"{i}, {int(labels[i])}, {float(s_if)!r}, {float(s_lof)!r}, "
                     f"{int(f_if)}, {int(f_lof)}, {int(f_fin)}")
    for c in report.clusters:
        if not c.skipped:
            lines.append(f"# cluster {c.cluster}: size={len(c.members)}, k_lof={c.k_lof}, "
                         f"if_threshold={float(c.if_threshold)!r}, "
                         f"lof_threshold={float(c.lof_threshold)!r}")
    lines.append("# skipped clusters: " + ", ".join(str(c) for c in report.skipped))
    return "\n".join(lines) + "\n"


def write_report(report, labels, path):
    return atomic_write(path, format_report(report, labels).encode())


def read_report(path):
    """Parse a report file into per-sample arrays (dict of numpy arrays)."""
    rows, skipped, thresholds = [], [], {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line.startswith("# cluster "):
                head, _, rest = line[len("# cluster "):].partition(":")
                fields = dict(kv.strip().split("=") for kv in rest.split(","))
                thresholds[int(head)] = {
                    "size": int(fields["size"]), "k_lof": int(fields["k_lof"]),
                    "if_threshold": float(fields["if_threshold"]),
                    "lof_threshold": float(fields["lof_threshold"]),
                }
            elif line.startswith("# skipped clusters:"):
                rest = line.split(":", 1)[1].strip()
                skipped = [int(v) for v in rest.split(",") if v.strip()]
            elif line and not line.startswith("#"):
                parts = [p.strip() for p in line.split(",")]
                if len(parts) != 7:
                    raise FormatError(f"line {lineno}: expected 7 fields, got {len(parts)}")
                rows.append(parts)
    names = ("sample_index", "cluster", "if_score", "lof_score", "if_flag", "lof_flag",
             "final_flag")
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in rows]
        if name.endswith("score"):
            out[name] = np.array(col, dtype=float)
        elif name.endswith("flag"):
            out[name] = np.array(col, dtype=int).astype(bool)
        else:
            out[name] = np.array(col, dtype=int)
    out["skipped"] = skipped
    out["thresholds"] = thresholds
    return out
