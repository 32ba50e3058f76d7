import io
import json
import re
import zipfile
from pathlib import Path

import numpy as np
import pytest

from decor.data import label_mask, read_dataset
from decor.exceptions import ConfigError, FormatError
from decor.pipeline import cli, run
from decor.pipeline.config import load_config, loads_config
from decor.pipeline.convert import convert_external, parse_npy, read_external
from decor.pipeline.montage import GREY, RED, decode_ppm, montage, render_montage

TINY = """\
[data]
counts = Center:12, Donut:12, Edge-Ring:12, Scratch:12
size = 16
[preprocess]
image_size = 16
[encoder]
epochs = 2
fields = 2, 2, 2
latent_dim = 16
[clustering]
k_init = 4
head_max_epochs = 200
[outliers]
min_cluster = 10
[run]
seeds = 1
"""


# ------------------------------------------------------------------ config

def test_defaults_and_overrides():
    cfg = load_config()
    assert cfg.seeds == (1, 2, 3)
    assert cfg["clustering"]["k_init"] == 30 and cfg["outliers"]["k_cut"] == 3.0
    over = cfg.with_overrides(**{"data.fit_on": "train", "encoder.epochs": 4})
    assert over["data"]["fit_on"] == "train" and over["encoder"]["epochs"] == 4
    assert cfg["data"]["fit_on"] == "all"
    # the canonical text parses back to the same values
    assert loads_config(over.canonical()).as_dict() == over.as_dict()


@pytest.mark.parametrize("text, match", [
    ("[data]\ntest_fraction = 1.5\n", "test_fraction"),
    ("[data]\ncolour = red\n", "unknown key"),
    ("[extras]\na = 1\n", "unknown config section"),
    ("[encoder]\nepochs = many\n", "epochs"),
    ("[preprocess]\nimage_size = 20\n", "multiple of 8"),
    ("[data]\nsource = /no/such/file.wfr\n", "does not exist"),
    ("[clustering]\nmethod = spectral\n", "dpmm or kmeans"),
    ("not an ini file", "unreadable"),
])
def test_config_validation(text, match):
    with pytest.raises(ConfigError, match=match):
        loads_config(text)


def test_readme_example_config_parses():
    readme = (Path(__file__).parents[1] / "README.md").read_text()
    block = re.search(r"```ini\n(.*?)```", readme, re.S).group(1)
    cfg = loads_config(block)
    assert cfg["data"]["fit_on"] == "all" and cfg["preprocess"]["blur_kernel"] == 5


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


# ------------------------------------------------------------------ convert

def _npy(arr):
    buf = io.BytesIO()
    np.save(buf, arr)
    return buf.getvalue()


def _archive(path, maps=None, onehot=None):
    with zipfile.ZipFile(path, "w") as zf:
        if maps is not None:
            zf.writestr("arr_0.npy", _npy(maps))
        if onehot is not None:
            zf.writestr("arr_1.npy", _npy(onehot))
    return path


def test_convert_hand_built_archive(tmp_path):
    grid = np.array([[0, 1, 1, 0], [1, 2, 1, 1], [1, 1, 1, 1], [0, 1, 1, 0]], dtype=np.int64)
    onehot = np.zeros((1, 8), dtype=np.int64)
    onehot[0, [0, 6]] = 1  # Center + Scratch
    src = _archive(tmp_path / "w.npz", grid[None], onehot)
    assert convert_external(src, tmp_path / "w.wfr") == 1
    ds = read_dataset(tmp_path / "w.wfr")
    assert np.array_equal(ds.cells[0], grid)
    assert ds.labels[0] == label_mask(["Center", "Scratch"])


def test_convert_fortran_order_and_empty_archive(tmp_path):
    maps = np.asfortranarray(np.random.default_rng(0).integers(0, 3, (3, 5, 5)))
    src = _archive(tmp_path / "f.npz", maps, np.eye(8, dtype=np.uint8)[:3])
    assert np.array_equal(read_external(src).cells, maps)
    empty = _archive(tmp_path / "e.npz")
    assert len(read_external(empty)) == 0


def test_convert_errors_carry_offsets(tmp_path):
    maps = np.ones((2, 4, 4), dtype=np.uint8)
    maps[1, 2, 3] = 3
    src = _archive(tmp_path / "bad.npz", maps, np.eye(8, dtype=np.uint8)[:2])
    with pytest.raises(FormatError) as info:
        read_external(src)
    # the bad value is element 16 + 11 = 27 of the payload, one byte each
    _, data_offset = parse_npy(_npy(np.ones((2, 4, 4), np.uint8)))
    assert info.value.offset == data_offset + 27 and "value 3" in str(info.value)

    with pytest.raises(FormatError, match="missing member"):
        read_external(_archive(tmp_path / "half.npz", maps))
    (tmp_path / "junk.npz").write_bytes(b"not a zip")
    with pytest.raises(FormatError):
        read_external(tmp_path / "junk.npz")
    with pytest.raises(FormatError, match="bad magic"):
        parse_npy(b"\x00" * 20)
    with pytest.raises(FormatError, match="payload"):
        parse_npy(_npy(np.zeros(4))[:-1])


# ------------------------------------------------------------------ montage

def test_single_tile_montage():
    cells = np.array([[[0, 1], [2, 1]]], dtype=np.uint8)
    img = montage(cells, [False], scale=3)
    assert img.shape == (6, 6, 3)
    assert np.array_equal(img[0, 0], [0, 0, 0]) and np.array_equal(img[5, 0], [255] * 3)
    assert np.array_equal(img[0, 5], [GREY[1]] * 3)


def test_flagged_tile_has_one_red_border(tmp_path):
    from decor.data import Dataset

    cells = np.ones((5, 8, 8), dtype=np.uint8)
    ds = Dataset(cells, np.zeros(5, np.uint8))
    labels = np.array([0, 1, 1, 0, 1])
    flags = np.array([False, False, True, False, False])
    img = render_montage(ds, labels, flags, 1, tmp_path / "m.ppm")
    # three members -> a 2 x 2 grid of 8 x 8 tiles; the second tile is flagged
    assert img.shape == (16, 16, 3)
    red = np.all(img == RED, axis=2)
    assert red[:, 8:].sum() == 8 * 8 - 4 * 4 and red[:, :8].sum() == 0
    assert np.array_equal(decode_ppm((tmp_path / "m.ppm").read_bytes()), img)
    with pytest.raises(ValueError, match="unknown cluster"):
        render_montage(ds, labels, flags, 7, tmp_path / "x.ppm")


# ---------------------------------------------------------------------- CLI

def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    (tmp_path / "bad.ini").write_text("[data]\ntest_fraction = 1.5\n")
    assert cli.main(["generate", "--config", str(tmp_path / "bad.ini"),
                     "--out", str(tmp_path / "d.wfr")]) == 2
    assert "test_fraction" in capsys.readouterr().err

    (tmp_path / "bad.wfr").write_bytes(b"WFR9" + bytes(20))
    assert cli.main(["embed", "--data", str(tmp_path / "bad.wfr"),
                     "--model", str(tmp_path / "absent.rcae"), "--out", str(tmp_path / "z.emb")]) == 2
    assert cli.main(["evaluate", "--data", str(tmp_path / "bad.wfr"), "--assignments", "a",
                     "--out", str(tmp_path / "m.txt")]) == 3
    (tmp_path / "m.rcae").write_bytes(b"junk")
    assert cli.main(["embed", "--data", str(tmp_path / "bad.wfr"),
                     "--model", str(tmp_path / "m.rcae"), "--out", str(tmp_path / "z.emb")]) == 3
    assert "error in stage embed" in capsys.readouterr().err

    monkeypatch.setenv("DECOR_THREADS", "zero")
    assert cli.main(["generate", "--out", str(tmp_path / "d.wfr")]) == 2


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    (root / "tiny.ini").write_text(TINY)
    cfg = load_config(root / "tiny.ini")
    a = run.run_pipeline(cfg, root / "a")
    b = run.run_pipeline(cfg, root / "b")
    return root, a, b


def test_pipeline_is_reproducible(tiny_runs):
    root, a, b = tiny_runs
    assert a["files"] == b["files"]
    assert len(a["files"]) == 4 + 6
    manifest = json.loads((root / "a" / "manifest.json").read_text())
    assert manifest["config"]["clustering"]["k_init"] == 4
    seed = manifest["seeds"]["1"]
    assert 0.0 <= seed["metrics"]["nmi"] <= 1.0 and seed["final_k"] >= 1


def test_stages_reproduce_the_pipeline(tiny_runs, capsys):
    root, _, _ = tiny_runs
    cfgp, ref = str(root / "tiny.ini"), root / "a"
    sub = root / "sub"
    steps = [
        ["generate", "--out", sub / "d.wfr"],
        ["train-encoder", "--data", sub / "d.wfr", "--out", sub / run.ENCODER],
        ["embed", "--data", sub / "d.wfr", "--model", sub / run.ENCODER,
         "--out", sub / run.EMBEDDINGS],
        ["cluster", "--embeddings", sub / run.EMBEDDINGS, "--out", sub],
        ["detect", "--embeddings", sub / run.EMBEDDINGS,
         "--assignments", sub / run.ASSIGNMENTS, "--out", sub / run.OUTLIERS],
        ["evaluate", "--data", sub / "d.wfr", "--assignments", sub / run.ASSIGNMENTS,
         "--out", sub / run.METRICS],
        ["render", "--data", sub / "d.wfr", "--assignments", sub / run.ASSIGNMENTS,
         "--report", sub / run.OUTLIERS, "--cluster", "0", "--out", sub / "c0.ppm"],
    ]
    for step in steps:
        argv = [str(s) for s in step]
        extra = [] if argv[0] == "render" else ["--config", cfgp]
        assert cli.main(argv + extra) == 0, capsys.readouterr().err
    assert (sub / "d.wfr").read_bytes() == (ref / run.DATASET).read_bytes()
    for name in run.SEED_FILES:
        assert (sub / name).read_bytes() == (ref / "seed-1" / name).read_bytes(), name
    assert (sub / "c0.ppm").read_bytes().startswith(b"P6\n")


def test_kmeans_and_train_test_split(tmp_path):
    cfg = loads_config(TINY).with_overrides(**{
        "clustering.method": "kmeans", "clustering.n_clusters": 4,
        "data.fit_on": "train", "data.eval_on": "test"})
    manifest = run.run_pipeline(cfg, tmp_path)
    seed = manifest["seeds"]["1"]
    assert seed["final_k"] == 4
    assert seed["metrics"]["n_eval"] == 12  # a quarter of 48 maps
    assert not (tmp_path / "seed-1" / run.CLUSTERS).exists()
