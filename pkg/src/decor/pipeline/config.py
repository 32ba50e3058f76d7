"""Pipeline configuration: a sectioned ``key = value`` file.

Every key has a type and a default; :func:`load_config` parses and checks
all of them before any stage runs, so a bad value never costs compute.
Unknown sections or keys are rejected rather than silently ignored.
"""

import configparser
import io
import math
import os
from dataclasses import dataclass, field

from ..data.synthetic import GeneratorConfig
from ..exceptions import ConfigError


def _int_tuple(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _bool(text):
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _n_components(text):
    value = text.strip().lower()
    if value in ("", "none"):
        return None
    return float(value) if "." in value or "e" in value else int(value)


def _counts(text):
    out = {}
    for item in text.replace("\n", ",").split(","):
        if not item.strip():
            continue
        combo, sep, n = item.rpartition(":")
        if not sep:
            raise ValueError(f"count entry {item.strip()!r} is not 'Pattern[+Pattern]:n'")
        out[combo.strip()] = int(n)
    return out


# section -> key -> (parser, default as text)
SCHEMA = {
    "data": {
        "source": (str, "synthetic"),
        "size": (int, "32"),
        "counts": (_counts, "Center:200, Donut:200, Edge-Ring:200, Scratch:200"),
        "noise": (float, "0.02"),
        "seed": (int, "0"),
        "test_fraction": (float, "0.25"),
        "fit_on": (str, "all"),
        "eval_on": (str, "all"),
    },
    "preprocess": {
        "blur_kernel": (int, "5"),
        "blur_sigma": (float, "1.0"),
        "edge_margin": (float, "1"),
        "image_size": (int, "32"),
    },
    "encoder": {
        "equivariant": (_bool, "true"),
        "fields": (_int_tuple, "8, 16, 32"),
        "cae_channels": (_int_tuple, "16, 32, 64, 256"),
        "decoder_channels": (_int_tuple, "64, 32, 16, 8"),
        "latent_dim": (int, "128"),
        "kernel_size": (int, "3"),
        "pooling": (str, "max"),
        "epochs": (int, "50"),
        "batch_size": (int, "32"),
        "learning_rate": (float, "0.001"),
    },
    "clustering": {
        "method": (str, "dpmm"),
        "k_init": (int, "30"),
        "max_epochs": (int, "200"),
        "alpha": (float, "1.0"),
        "kappa": (float, "1.0"),
        "nu": (_opt_float, "none"),
        "covariance": (str, "full"),
        "n_components": (_n_components, "0.99"),
        "split_merge_every": (int, "5"),
        "patience": (int, "10"),
        "head_hidden": (int, "50"),
        "head_max_epochs": (int, "2000"),
        "head_target": (float, "0.99"),
        "head_learning_rate": (float, "0.01"),
        "n_clusters": (int, "8"),
        "restarts": (int, "10"),
    },
    "outliers": {
        "k_cut": (float, "3.0"),
        "hi_cont": (float, "0.2"),
        "min_k": (int, "10"),
        "max_k": (int, "50"),
        "min_cluster": (int, "15"),
        "n_trees": (int, "100"),
        "max_samples": (int, "256"),
        "if_rule": (str, "both"),
    },
    "run": {
        "seeds": (_int_tuple, "1, 2, 3"),
        "out": (str, "runs"),
        "average_method": (str, "arithmetic"),
    },
}


@dataclass
class PipelineConfig:
    """Parsed configuration; ``sections[name][key]`` holds typed values."""

    sections: dict
    text: str = ""
    source_path: str = ""
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def seeds(self):
        return self.sections["run"]["seeds"]

    def generator_config(self):
        d = self.sections["data"]
        return GeneratorConfig(size=d["size"], counts=dict(d["counts"]), noise=d["noise"])

    def preprocess_params(self):
        p = dict(self.sections["preprocess"])
        p["blur_kernel"] = p["blur_kernel"] or None
        return p

    def encoder_params(self, seed):
        return dict(self.sections["encoder"], seed=seed)

    def dpmm_params(self, seed):
        c = self.sections["clustering"]
        keep = [k for k in c if k not in ("method", "n_clusters", "restarts")]
        return dict({k: c[k] for k in keep}, seed=seed)

    def outlier_params(self, seed):
        return dict(self.sections["outliers"], seed=seed)

    def with_overrides(self, **values):
        """Copy with ``section.key`` overrides (``None`` values ignored)."""
        text = self.canonical()
        cfg = loads_config(text)
        for dotted, value in values.items():
            if value is None:
                continue
            section, key = dotted.split(".", 1)
            cfg.sections[section][key] = value
            cfg.overrides[dotted] = value
        validate(cfg)
        cfg.text, cfg.source_path = self.text, self.source_path
        return cfg

    def canonical(self):
        """Fully resolved config as text, every key present."""
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        for section, keys in self.sections.items():
            parser[section] = {k: _render(v) for k, v in keys.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def as_dict(self):
        return {s: {k: _jsonable(v) for k, v in keys.items()} for s, keys in self.sections.items()}


def _render(value):
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, dict):
        return ", ".join(f"{k}:{n}" for k, n in value.items())
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _jsonable(value):
    return list(value) if isinstance(value, tuple) else value


def loads_config(text, source_path=""):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    unknown = set(parser.sections()) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    sections = {}
    for section, keys in SCHEMA.items():
        given = parser[section] if parser.has_section(section) else {}
        extra = set(given) - set(keys)
        if extra:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
        sections[section] = {}
        for key, (parse, default) in keys.items():
            raw = given.get(key, default)
            try:
                sections[section][key] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None
    cfg = PipelineConfig(sections, text=text, source_path=str(source_path))
    validate(cfg)
    return cfg


def load_config(path=None):
    """Read ``path`` (``None`` gives the built-in defaults)."""
    if path is None:
        return loads_config("")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads_config(text, path)


def _check(cond, message):
    if not cond:
        raise ConfigError(message)


def validate(cfg):
    d, p, e, c, o, r = (cfg.sections[s] for s in
                        ("data", "preprocess", "encoder", "clustering", "outliers", "run"))
    _check(0.0 < d["test_fraction"] < 1.0,
           f"[data] test_fraction must lie in (0, 1), got {d['test_fraction']}")
    _check(d["fit_on"] in ("all", "train"), f"[data] fit_on must be all or train, got {d['fit_on']!r}")
    _check(d["eval_on"] in ("all", "test"), f"[data] eval_on must be all or test, got {d['eval_on']!r}")
    if d["source"] == "synthetic":
        cfg.generator_config().validate()
        _check(sum(d["counts"].values()) > 0, "[data] counts must request at least one map")
    else:
        _check(os.path.isfile(d["source"]), f"[data] source file {d['source']!r} does not exist")

    _check(p["blur_kernel"] == 0 or (p["blur_kernel"] > 0 and p["blur_kernel"] % 2 == 1),
           f"[preprocess] blur_kernel must be 0 (off) or a positive odd integer, got {p['blur_kernel']}")
    _check(p["blur_sigma"] > 0, f"[preprocess] blur_sigma must be positive, got {p['blur_sigma']}")
    _check(p["edge_margin"] >= 0, f"[preprocess] edge_margin must be >= 0, got {p['edge_margin']}")
    _check(p["image_size"] >= 8 and p["image_size"] % 8 == 0,
           f"[preprocess] image_size must be a positive multiple of 8, got {p['image_size']}")

    _check(len(e["fields"]) == 3 and min(e["fields"]) > 0,
           f"[encoder] fields must be three positive integers, got {e['fields']}")
    _check(len(e["cae_channels"]) >= 1 and min(e["cae_channels"]) > 0,
           "[encoder] cae_channels must be positive integers")
    _check(len(e["decoder_channels"]) == 4 and min(e["decoder_channels"]) > 0,
           "[encoder] decoder_channels must be four positive integers")
    _check(e["latent_dim"] > 0, "[encoder] latent_dim must be positive")
    _check(e["kernel_size"] > 0 and e["kernel_size"] % 2 == 1, "[encoder] kernel_size must be odd")
    _check(e["pooling"] in ("max", "mean"), f"[encoder] pooling must be max or mean, got {e['pooling']!r}")
    _check(e["epochs"] >= 0, "[encoder] epochs must be >= 0")
    _check(e["batch_size"] > 0, "[encoder] batch_size must be positive")
    _check(e["learning_rate"] >= 0 and math.isfinite(e["learning_rate"]),
           "[encoder] learning_rate must be finite and >= 0")

    _check(c["method"] in ("dpmm", "kmeans"), f"[clustering] method must be dpmm or kmeans, got {c['method']!r}")
    for key in ("k_init", "max_epochs", "split_merge_every", "patience", "head_hidden",
                "head_max_epochs", "n_clusters", "restarts"):
        _check(c[key] >= 1, f"[clustering] {key} must be >= 1, got {c[key]}")
    _check(c["alpha"] > 0 and c["kappa"] > 0, "[clustering] alpha and kappa must be positive")
    _check(c["covariance"] in ("full", "diag"), "[clustering] covariance must be full or diag")
    n = c["n_components"]
    _check(n is None or (isinstance(n, float) and 0 < n < 1) or (isinstance(n, int) and n >= 1),
           f"[clustering] n_components must be none, an integer >= 1 or a fraction in (0, 1), got {n}")
    _check(0 < c["head_target"] <= 1, "[clustering] head_target must lie in (0, 1]")

    _check(o["k_cut"] >= 0, "[outliers] k_cut must be >= 0")
    _check(0 < o["hi_cont"] <= 1, f"[outliers] hi_cont must lie in (0, 1], got {o['hi_cont']}")
    _check(1 <= o["min_k"] <= o["max_k"], "[outliers] need 1 <= min_k <= max_k")
    _check(o["min_cluster"] >= 2, "[outliers] min_cluster must be >= 2")
    _check(o["n_trees"] >= 1 and o["max_samples"] >= 2, "[outliers] n_trees >= 1 and max_samples >= 2 required")
    _check(o["if_rule"] in ("both", "quantile", "robust"), "[outliers] if_rule must be both, quantile or robust")

    _check(len(r["seeds"]) >= 1 and min(r["seeds"]) >= 0, "[run] seeds must list non-negative integers")
    _check(len(set(r["seeds"])) == len(r["seeds"]), "[run] seeds must be distinct")
    _check(r["average_method"] in ("arithmetic", "geometric", "min", "max"),
           "[run] average_method must be arithmetic, geometric, min or max")
    return cfg
