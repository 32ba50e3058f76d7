"""Command-line entry point: ``decor <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or argument error, 3 malformed data
file, 4 numerical failure, 1 anything else.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..clustering import read_assignments, save_model, write_assignments
from ..data import read_dataset, write_dataset
from ..encoder import load_checkpoint, read_embeddings, save_checkpoint, write_embeddings
from ..evaluation import write_kv
from ..exceptions import ConfigError, DecorError
from ..outliers import read_report, write_report
from . import run
from .config import load_config
from .convert import convert_external
from .montage import render_montage

logger = logging.getLogger("decor")


def _config(args):
    cfg = load_config(args.config)
    over = {}
    if getattr(args, "fit_on", None):
        over["data.fit_on"] = args.fit_on
    if getattr(args, "eval_on", None):
        over["data.eval_on"] = args.eval_on
    return cfg.with_overrides(**over) if over else cfg


def _seed(args, cfg):
    return args.seed if args.seed is not None else cfg.seeds[0]


def _rows(cfg, ds):
    return run.split_indices(cfg, ds)


def cmd_generate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(**{"data.seed": args.seed})
    with run.stage("generate"):
        ds = run.load_dataset(cfg)
        write_dataset(ds, args.out)
    print(f"wrote {len(ds)} maps to {args.out}")


def cmd_convert(args):
    with run.stage("convert"):
        n = convert_external(args.archive, args.out)
    print(f"wrote {n} maps to {args.out}")


def cmd_preprocess(args):
    cfg = _config(args)
    with run.stage("preprocess"):
        images = run.preprocess(cfg, read_dataset(args.data))
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "wb") as fh:
            np.save(fh, images.astype(np.float32))
    print(f"wrote {images.shape} images to {args.out}")


def cmd_train_encoder(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    with run.stage("train-encoder"):
        ds = read_dataset(args.data)
        fit_rows, _ = _rows(cfg, ds)
        model = run.train_encoder(cfg, run.preprocess(cfg, ds)[fit_rows], seed)
        save_checkpoint(model, args.out)
    curve = model.loss_curve_
    if curve:
        print(f"loss {curve[0]:.6f} -> {curve[-1]:.6f} over {len(curve)} epochs")


def cmd_embed(args):
    cfg = _config(args)
    with run.stage("embed"):
        model = load_checkpoint(args.model)
        Z = model.transform(run.preprocess(cfg, read_dataset(args.data)))
        write_embeddings(Z, args.out)
    print(f"wrote {Z.shape[0]}x{Z.shape[1]} embeddings to {args.out}")


def cmd_cluster(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    with run.stage("cluster"):
        Z = read_embeddings(args.embeddings)
        fit_rows = np.arange(len(Z))
        if args.data:
            fit_rows, _ = _rows(cfg, read_dataset(args.data))
        elif cfg["data"]["fit_on"] != "all":
            raise ConfigError("--data is required to select training rows when fit_on = train")
        model = run.fit_clusters(cfg, Z[fit_rows], seed)
        if hasattr(model, "head_"):
            save_model(model, out / run.CLUSTERS)
        P = run.memberships(model, Z)
        write_assignments(P, out / run.ASSIGNMENTS)
    print(f"K = {P.shape[1]}; wrote {out / run.ASSIGNMENTS}")


def cmd_detect(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    with run.stage("detect"):
        Z = read_embeddings(args.embeddings)
        labels, _ = read_assignments(args.assignments)
        report = run.detect(cfg, Z, labels, seed)
        write_report(report, labels, args.out)
    print(f"{len(report.outliers)} outliers; wrote {args.out}")


def cmd_evaluate(args):
    cfg = _config(args)
    with run.stage("evaluate"):
        ds = read_dataset(args.data)
        _, P = read_assignments(args.assignments)
        if len(P) != len(ds):
            raise ConfigError(f"{len(P)} assignment rows for {len(ds)} maps")
        _, eval_rows = _rows(cfg, ds)
        metrics = run.evaluate(cfg, ds, P, eval_rows)
        write_kv(metrics, args.out)
    print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                   for k, v in sorted(metrics.items())))


def cmd_render(args):
    with run.stage("render"):
        ds = read_dataset(args.data)
        labels, _ = read_assignments(args.assignments)
        flags = (read_report(args.report)["final_flag"] if args.report
                 else np.zeros(len(labels), bool))
        img = render_montage(ds, labels, flags, args.cluster, args.out,
                             columns=args.columns, scale=args.scale)
    print(f"wrote {img.shape[1]}x{img.shape[0]} montage to {args.out}")


def cmd_pipeline(args):
    cfg = _config(args)
    seeds = [args.seed] if args.seed is not None else None
    manifest = run.run_pipeline(cfg, args.out, seeds)
    agg = manifest["aggregate"]
    print(f"NMI {agg['mean']['nmi']:.4f} ± {agg['std']['nmi']:.4f}  "
          f"ARI {agg['mean']['ari']:.4f} ± {agg['std']['ari']:.4f}  "
          f"K {agg['mean']['k']:.1f}")
    if args.json:
        print(json.dumps(manifest["aggregate"], sort_keys=True))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="decor",
        description="Orientation-invariant wafer-map clustering and outlier detection.",
        epilog="Exit codes: 0 ok, 2 configuration, 3 data format, 4 numerical, 1 other.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (defaults built in)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--fit-on", choices=("all", "train"))
    common.add_argument("--eval-on", choices=("all", "test"))

    def add(name, func, help_, parents=(common,)):
        p = sub.add_parser(name, parents=list(parents), help=help_)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "draw a synthetic dataset (WFR1)")
    p.add_argument("--out", required=True)
    p = add("convert", cmd_convert, "convert an .npz wafer archive to WFR1", parents=())
    p.add_argument("archive")
    p.add_argument("--out", required=True)
    p = add("preprocess", cmd_preprocess, "write preprocessed images (.npy)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p = add("train-encoder", cmd_train_encoder, "train the autoencoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p = add("embed", cmd_embed, "embed a dataset with a trained encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p = add("cluster", cmd_cluster, "cluster embeddings; writes assignments")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--data", help="dataset, needed to pick training rows for --fit-on train")
    p.add_argument("--out", required=True, help="output directory")
    p = add("detect", cmd_detect, "per-cluster outlier detection")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--out", required=True)
    p = add("evaluate", cmd_evaluate, "NMI/ARI against the dataset labels")
    p.add_argument("--data", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--out", required=True)
    p = add("render", cmd_render, "montage of one cluster (PPM)", parents=())
    p.add_argument("--data", required=True)
    p.add_argument("--assignments", required=True)
    p.add_argument("--report")
    p.add_argument("--cluster", type=int, required=True)
    p.add_argument("--columns", type=int)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--out", required=True)
    p = add("pipeline", cmd_pipeline, "run every stage for every seed")
    p.add_argument("--out", help="run directory (default: [run] out)")
    p.add_argument("--json", action="store_true", help="also print the aggregate as JSON")
    return parser


def _threads():
    value = os.environ.get("DECOR_THREADS")
    if not value:
        return
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"DECOR_THREADS must be a positive integer, got {value!r}") from None
    import torch

    torch.set_num_threads(n)


def _exit_code(exc):
    if isinstance(exc, DecorError):
        return exc.exit_code
    if isinstance(exc, (ValueError, FileNotFoundError)):
        return 2
    if isinstance(exc, ArithmeticError):
        return 4
    return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _threads()
        args.func(args)
    except (DecorError, ValueError, OSError, ArithmeticError) as exc:
        where = getattr(exc, "stage", None)
        prefix = f"error in stage {where}" if where else "error"
        print(f"decor: {prefix}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
