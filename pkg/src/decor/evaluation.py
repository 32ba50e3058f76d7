"""Clustering metrics against multi-label ground truth."""

import math
from dataclasses import dataclass, field

import numpy as np

from ._files import atomic_write
from .data.wafer import PATTERNS
from .exceptions import ShapeError

NORMAL_CATEGORY = len(PATTERNS)  # index 8: wafers without any defect label


def _aligned(a, b, min_len=1):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if len(a) != len(b):
        raise ShapeError(f"label vectors differ in length: {len(a)} vs {len(b)}")
    if len(a) < min_len:
        raise ValueError(f"need at least {min_len} samples, got {len(a)}")
    return a, b


def contingency(a, b):
    """Counts ``n[i, j]`` of samples with true class ``i`` and cluster ``j``."""
    a, b = _aligned(a, b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai.reshape(-1), bi.reshape(-1)), 1)
    return table


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information(a, b):
    n_ij = contingency(a, b).astype(float)
    n = n_ij.sum()
    outer = n_ij.sum(axis=1, keepdims=True) * n_ij.sum(axis=0, keepdims=True)
    nz = n_ij > 0
    return float((n_ij[nz] / n * np.log(n_ij[nz] * n / outer[nz])).sum())


def nmi(a, b, average_method="arithmetic"):
    """Normalised mutual information (natural log). Two constant labelings score 1."""
    a, b = _aligned(a, b)
    table = contingency(a, b)
    if table.shape == (1, 1):
        return 1.0
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    mi = mutual_information(a, b)
    if mi <= 0:
        return 0.0
    norm = {
        "arithmetic": (ha + hb) / 2,
        "geometric": math.sqrt(ha * hb),
        "min": min(ha, hb),
        "max": max(ha, hb),
    }[average_method]
    return float(min(max(mi / norm, 0.0), 1.0))


def ari(a, b):
    """Adjusted Rand index from pair counts."""
    a, b = _aligned(a, b, min_len=2)
    table = contingency(a, b)
    comb = lambda x: x * (x - 1) / 2  # noqa: E731
    index = comb(table).sum()
    sum_a = comb(table.sum(axis=1)).sum()
    sum_b = comb(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb(len(a))
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        # both partitions trivial in the same way (one block, or all singletons)
        return 1.0
    return float((index - expected) / (maximum - expected))


def dominant_label_reduction(masks, clusters):
    """Collapse multi-label masks to one category per sample.

    Within each predicted cluster, count how often each base label occurs in
    members' label sets; every sample keeps the label of its own set with the
    highest count (ties -> lowest canonical index).  Label-free samples map
    to :data:`NORMAL_CATEGORY`.
    """
    masks, clusters = _aligned(masks, clusters, min_len=0)
    bits = ((masks.astype(np.int64)[:, None] >> np.arange(len(PATTERNS))) & 1).astype(bool)
    out = np.full(len(masks), NORMAL_CATEGORY, dtype=np.int64)
    for c in np.unique(clusters):
        members = np.flatnonzero(clusters == c)
        freq = bits[members].sum(axis=0)
        for i in members:
            own = np.flatnonzero(bits[i])
            if len(own):
                out[i] = own[np.argmax(freq[own])]
    return out


def hard_labels(P):
    """Row-wise argmax; ties go to the lowest cluster index."""
    P = np.asarray(P)
    if P.ndim != 2 or P.shape[1] < 1:
        raise ShapeError(f"membership matrix must be (n, K>=1), got shape {P.shape}")
    return P.argmax(axis=1)


def evaluate_run(masks, P, average_method="arithmetic"):
    """NMI / ARI of the hard assignment against dominant-reduced labels."""
    clusters = hard_labels(P)
    truth = dominant_label_reduction(masks, clusters)
    return {
        "nmi": nmi(truth, clusters, average_method),
        "ari": ari(truth, clusters) if len(truth) >= 2 else 1.0,
        "k": int(np.asarray(P).shape[1]),
        "k_used": int(len(np.unique(clusters))),
    }


@dataclass
class MetricsReport:
    """Per-seed metric dicts plus mean, sample std and standard error."""

    runs: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)


def aggregate(runs, keys=("nmi", "ari", "k")):
    runs = list(runs)
    if not runs:
        raise ValueError("aggregate needs at least one run")
    report = MetricsReport(runs=runs)
    for key in keys:
        vals = np.array([r[key] for r in runs], dtype=float)
        report.mean[key] = float(vals.mean())
        report.std[key] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        report.stderr[key] = report.std[key] / math.sqrt(len(vals))
    return report


def format_table(rows):
    """Text table: Embedding | Clustering | Final K | NMI | ARI (mean ± std)."""
    header = f"{'Embedding':<10} {'Clustering':<10} {'Final K':>8} {'NMI':>15} {'ARI':>15}"
    lines = [header, "-" * len(header)]
    for embedding, clustering, rep in rows:
        k = round(rep.mean.get("k", 0))
        nmi_s = f"{rep.mean['nmi']:.3f} ± {rep.std['nmi']:.3f}"
        ari_s = f"{rep.mean['ari']:.3f} ± {rep.std['ari']:.3f}"
        lines.append(f"{embedding:<10} {clustering:<10} {k:>8} {nmi_s:>15} {ari_s:>15}")
    return "\n".join(lines) + "\n"


def format_kv(metrics, prefix=""):
    plain = {k: v.item() if isinstance(v, np.generic) else v for k, v in metrics.items()}
    return "".join(f"{prefix}{k} = {v!r}\n" for k, v in sorted(plain.items()))


def write_kv(metrics, path):
    return atomic_write(path, format_kv(metrics).encode())


def read_kv(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            value = value.strip()
            try:
                out[key.strip()] = int(value)
            except ValueError:
                out[key.strip()] = float(value)
    return out
