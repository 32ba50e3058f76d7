"""Stage functions and the end-to-end driver.

Layout of a run directory::

    <out>/dataset.wfr            shared input maps
    <out>/config.ini             fully resolved configuration
    <out>/seed-<s>/encoder.rcae  trained autoencoder
    <out>/seed-<s>/embeddings.emb
    <out>/seed-<s>/clusters.dpm  (DP mixture only)
    <out>/seed-<s>/assignments.txt
    <out>/seed-<s>/outliers.txt
    <out>/seed-<s>/metrics.txt
    <out>/metrics.txt, <out>/table.txt, <out>/manifest.json

Each seed directory depends only on ``dataset.wfr`` and the config, and the
subcommands in :mod:`decor.pipeline.cli` call the same stage functions on
the persisted files, so running them one by one gives identical bytes.
"""

import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .. import __version__
from .._files import atomic_write, sha256
from ..clustering import (
    DPMMClustering,
    KMeansClustering,
    read_assignments,
    save_model,
    write_assignments,
)
from ..data import (
    WaferPreprocessor,
    generate_synthetic,
    iterative_stratification,
    read_dataset,
    write_dataset,
)
from ..data.wafer import mask_to_multihot
from ..encoder import (
    OrientationInvariantAutoencoder,
    read_embeddings,
    save_checkpoint,
    write_embeddings,
)
from ..evaluation import aggregate, evaluate_run, format_table, read_kv, write_kv
from ..outliers import detect_outliers, write_report

logger = logging.getLogger(__name__)

DATASET = "dataset.wfr"
ENCODER = "encoder.rcae"
EMBEDDINGS = "embeddings.emb"
CLUSTERS = "clusters.dpm"
ASSIGNMENTS = "assignments.txt"
OUTLIERS = "outliers.txt"
METRICS = "metrics.txt"
SEED_FILES = (ENCODER, EMBEDDINGS, CLUSTERS, ASSIGNMENTS, OUTLIERS, METRICS)


@contextmanager
def stage(name, timings=None):
    """Time a stage and tag any exception escaping it with the stage name."""
    start = time.perf_counter()
    try:
        yield
    except Exception as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise
    finally:
        if timings is not None:
            timings[name] = round(time.perf_counter() - start, 6)


def seed_dir(out, seed):
    return Path(out) / f"seed-{seed}"


def load_dataset(cfg):
    d = cfg["data"]
    if d["source"] == "synthetic":
        return generate_synthetic(cfg.generator_config(), seed=d["seed"])
    return read_dataset(d["source"])


def split_indices(cfg, ds):
    """``(fit_rows, eval_rows)`` as sorted index arrays."""
    d = cfg["data"]
    every = np.arange(len(ds))
    if d["fit_on"] == "all" and d["eval_on"] == "all":
        return every, every
    test = np.sort(iterative_stratification(
        mask_to_multihot(ds.labels), d["test_fraction"], d["seed"]))
    train = np.setdiff1d(every, test)
    return (train if d["fit_on"] == "train" else every,
            test if d["eval_on"] == "test" else every)


def preprocess(cfg, ds):
    return WaferPreprocessor(**cfg.preprocess_params()).transform(ds)


def train_encoder(cfg, images, seed):
    return OrientationInvariantAutoencoder(**cfg.encoder_params(seed)).fit(images)


def fit_clusters(cfg, Z_fit, seed):
    c = cfg["clustering"]
    if c["method"] == "kmeans":
        return KMeansClustering(c["n_clusters"], restarts=c["restarts"], seed=seed).fit(Z_fit)
    return DPMMClustering(**cfg.dpmm_params(seed)).fit(Z_fit)


def memberships(model, Z):
    """Soft memberships; k-means gives one-hot rows."""
    if isinstance(model, KMeansClustering):
        P = np.zeros((len(Z), model.n_clusters))
        P[np.arange(len(Z)), model.predict(Z)] = 1.0
        return P
    return model.predict_proba(Z)


def detect(cfg, Z, labels, seed):
    return detect_outliers(Z, labels, **cfg.outlier_params(seed))


def evaluate(cfg, ds, P, eval_rows):
    metrics = evaluate_run(ds.labels[eval_rows], P[eval_rows], cfg["run"]["average_method"])
    metrics["n_eval"] = int(len(eval_rows))
    return metrics


def run_seed(cfg, ds, out, seed, timings):
    """All per-seed stages; returns a summary dict for the manifest."""
    sdir = seed_dir(out, seed)
    sdir.mkdir(parents=True, exist_ok=True)
    fit_rows, eval_rows = split_indices(cfg, ds)
    with stage("preprocess", timings):
        images = preprocess(cfg, ds)
    with stage("train-encoder", timings):
        model = train_encoder(cfg, images[fit_rows], seed)
        save_checkpoint(model, sdir / ENCODER)
    with stage("embed", timings):
        write_embeddings(model.transform(images), sdir / EMBEDDINGS)
        # later stages read the stored f32 values, exactly as the subcommands do
        Z = read_embeddings(sdir / EMBEDDINGS)
    with stage("cluster", timings):
        clusterer = fit_clusters(cfg, Z[fit_rows], seed)
        if isinstance(clusterer, DPMMClustering):
            save_model(clusterer, sdir / CLUSTERS)
        write_assignments(memberships(clusterer, Z), sdir / ASSIGNMENTS)
        labels, P = read_assignments(sdir / ASSIGNMENTS)
    with stage("detect", timings):
        report = detect(cfg, Z, labels, seed)
        write_report(report, labels, sdir / OUTLIERS)
    with stage("evaluate", timings):
        metrics = evaluate(cfg, ds, P, eval_rows)
        write_kv(metrics, sdir / METRICS)

    warnings = []
    head = getattr(clusterer, "head_", None)
    if head is not None and head.warning:
        warnings.append(head.warning)
    return {
        "metrics": metrics,
        "final_k": metrics["k"],
        "encoder_loss_first": float(model.loss_curve_[0]) if model.loss_curve_ else None,
        "encoder_loss_last": float(model.loss_curve_[-1]) if model.loss_curve_ else None,
        "outlier_counts": {str(c): n for c, n in report.counts().items()},
        "n_outliers": int(len(report.outliers)),
        "skipped_clusters": [int(c) for c in report.skipped],
        "warnings": warnings,
    }


def summarize(cfg, out, seeds):
    """Aggregate the per-seed metric files; writes ``metrics.txt`` and ``table.txt``."""
    runs = [read_kv(seed_dir(out, s) / METRICS) for s in seeds]
    report = aggregate(runs)
    flat = {}
    for part in ("mean", "std", "stderr"):
        for key, value in getattr(report, part).items():
            flat[f"{key}_{part}"] = value
    write_kv(flat, Path(out) / METRICS)
    embedding = "RCAE" if cfg["encoder"]["equivariant"] else "CAE"
    method = "DPMM" if cfg["clustering"]["method"] == "dpmm" else "K-Means"
    atomic_write(Path(out) / "table.txt", format_table([(embedding, method, report)]).encode())
    return report


def run_pipeline(cfg, out=None, seeds=None):
    """Execute every stage for every seed; returns the manifest dict."""
    out = Path(out or cfg["run"]["out"])
    seeds = list(seeds or cfg.seeds)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": __version__,
        "config": cfg.as_dict(),
        "config_text": cfg.text,
        "overrides": {k: _plain(v) for k, v in cfg.overrides.items()},
        "seeds": {},
        "timings": {},
    }
    timings = manifest["timings"]
    atomic_write(out / "config.ini", cfg.canonical().encode())
    with stage("data", timings):
        ds = load_dataset(cfg)
        write_dataset(ds, out / DATASET)
        ds = read_dataset(out / DATASET)
    manifest["dataset"] = {"n_maps": len(ds), "shape": list(ds.shape),
                           "provenance": ds.provenance}
    for seed in seeds:
        seed_timings = {}
        logger.info("seed %d", seed)
        summary = run_seed(cfg, ds, out, seed, seed_timings)
        summary["timings"] = seed_timings
        manifest["seeds"][str(seed)] = summary
    with stage("aggregate", timings):
        report = summarize(cfg, out, seeds)
    manifest["aggregate"] = {"mean": report.mean, "std": report.std, "stderr": report.stderr}
    written = ["config.ini", DATASET, METRICS, "table.txt"]
    for seed in seeds:
        sdir = seed_dir(out, seed)
        written += [str(p.relative_to(out)) for p in sorted(sdir.iterdir())
                    if p.name in SEED_FILES]
    manifest["files"] = {name: sha256(out / name) for name in sorted(written)}
    atomic_write(out / "manifest.json",
                 (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


__all__ = [
    "detect",
    "evaluate",
    "fit_clusters",
    "load_dataset",
    "memberships",
    "preprocess",
    "run_pipeline",
    "run_seed",
    "split_indices",
    "stage",
    "summarize",
    "train_encoder",
]
