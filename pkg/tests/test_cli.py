"""Command-line interface: pipeline wiring, config precedence, exit codes."""

import json

import numpy as np
import pytest

from graphad.cli import (CONFIG_DEFAULTS, coerce_config_value, main, merge_config,
                         parse_config_file, parse_sweep_grid)
from graphad.errors import ConfigError
from graphad.synth import SynthSpec, generate_normal
from graphad.tokenio import read_tokens_file, write_tokens_file

FAST = ["--max-epochs", "30", "--hidden-dim", "16", "--latent-dim", "16",
        "--g-hidden-dim", "16"]


def write_grid(path, seed=0, rows=8, cols=8, dim=8):
    spec = SynthSpec(rows=rows, cols=cols, dim=dim, anomaly_block=(2, 2, 2, 2),
                     seed=seed, category_seed=4)
    write_tokens_file(generate_normal(spec), path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_train_score_eval_pipeline(tmp_path):
    support = write_grid(tmp_path / "s.gadt", seed=0)
    q0 = write_grid(tmp_path / "q0.gadt", seed=1)
    q1 = write_grid(tmp_path / "q1.gadt", seed=2)
    train_dir = tmp_path / "train"
    assert run("train", support, "--out-dir", train_dir, *FAST) == 0
    assert (train_dir / "model.ckpt").exists()
    assert (train_dir / "loss_history.csv").read_text().startswith("epoch,loss")
    manifest = json.loads((train_dir / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["seed"] == 0

    score_dir = tmp_path / "score"
    assert run("score", q0, q1, "--checkpoint", train_dir / "model.ckpt",
               "--out-dir", score_dir) == 0
    lines = (score_dir / "scores.csv").read_text().strip().splitlines()
    assert lines[0] == "file,image_score" and len(lines) == 3
    assert (score_dir / "q0_map.gadt").exists()
    assert (score_dir / "q0_map.pgm").exists()
    # the exported map parses as a 1-channel token grid
    m = read_tokens_file(score_dir / "q0_map.gadt")
    assert (m.rows, m.cols, m.dim) == (8, 8, 1)

    labels = tmp_path / "labels.csv"
    labels.write_text("file,label\nq0.gadt,0\nq1.gadt,1\n")
    eval_dir = tmp_path / "eval"
    assert run("eval", "--scores", score_dir / "scores.csv", "--labels", labels,
               "--out-dir", eval_dir) == 0
    metrics = json.loads((eval_dir / "metrics.jsonl").read_text())
    assert 0.0 <= metrics["image_auroc"] <= 1.0
    assert (eval_dir / "metrics.csv").exists()


def test_determinism_byte_identical(tmp_path):
    support = write_grid(tmp_path / "s.gadt")
    query = write_grid(tmp_path / "q.gadt", seed=1)
    blobs = []
    for run_id in ("a", "b"):
        tdir = tmp_path / f"train_{run_id}"
        sdir = tmp_path / f"score_{run_id}"
        assert run("train", support, "--out-dir", tdir, "--seed", "7", *FAST) == 0
        assert run("score", query, "--checkpoint", tdir / "model.ckpt",
                   "--out-dir", sdir) == 0
        blobs.append(((tdir / "model.ckpt").read_bytes(),
                      (sdir / "scores.csv").read_bytes(),
                      (sdir / "q_map.gadt").read_bytes()))
    assert blobs[0] == blobs[1]


def test_config_file_and_flag_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("lr = 0.01  # comment\nmax_epochs=5\n\n# full line comment\n")
    values = parse_config_file(cfg_file)
    assert values == {"lr": 0.01, "max_epochs": 5}

    class Args:
        config = str(cfg_file)
        lr = 0.5  # flag beats file
    for key in CONFIG_DEFAULTS:
        if not hasattr(Args, key):
            setattr(Args, key, None)
    merged = merge_config(Args)
    assert merged["lr"] == 0.5
    assert merged["max_epochs"] == 5  # file beats default
    assert merged["patience"] == CONFIG_DEFAULTS["patience"]


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key=3\n")
    with pytest.raises(ConfigError):
        parse_config_file(bad)
    bad.write_text("just a line\n")
    with pytest.raises(ConfigError):
        parse_config_file(bad)
    with pytest.raises(ConfigError):
        coerce_config_value("lr", "fast")


def test_bad_flag_value_exits_two(tmp_path):
    support = write_grid(tmp_path / "s.gadt")
    code = run("train", support, "--out-dir", tmp_path / "t",
               "--mask-ratio", "1.5", *FAST)
    assert code == 2


def test_missing_input_exits_one(tmp_path):
    assert run("train", tmp_path / "absent.gadt", "--out-dir", tmp_path / "t") == 1


def test_corrupt_token_file_exits_two(tmp_path):
    bad = tmp_path / "bad.gadt"
    bad.write_bytes(b"NOPE" + b"\0" * 32)
    assert run("train", bad, "--out-dir", tmp_path / "t") == 2


def test_eval_requires_some_input(tmp_path):
    assert run("eval", "--out-dir", tmp_path / "e") == 2
    assert run("eval", "--scores", "x.csv", "--out-dir", tmp_path / "e") == 2


def test_synth_command_outputs(tmp_path):
    out = tmp_path / "bench"
    assert run("synth", "--out-dir", out, "--rows", "8", "--cols", "8",
               "--dim", "4", "--block", "2", "2", "2", "2",
               "--normal", "2", "--anomalous", "2", "--mask-scale", "4") == 0
    assert (out / "support_000.gadt").exists()
    queries = sorted(p.name for p in (out / "queries").glob("*.gadt"))
    assert queries == ["anom_000.gadt", "anom_001.gadt",
                       "normal_000.gadt", "normal_001.gadt"]
    masks = sorted(p.name for p in (out / "masks").glob("*_mask.pgm"))
    assert len(masks) == 4
    labels = (out / "labels.csv").read_text().strip().splitlines()
    assert labels[0] == "file,label" and len(labels) == 5
    from graphad.pgm import read_mask_pgm
    m = read_mask_pgm(out / "masks" / "anom_000_mask.pgm")
    assert m.shape == (32, 32) and m.sum() == (2 * 4) ** 2


def test_synth_then_eval_pixel_path(tmp_path):
    out = tmp_path / "bench"
    run("synth", "--out-dir", out, "--rows", "8", "--cols", "8", "--dim", "4",
        "--block", "2", "2", "2", "2", "--normal", "1", "--anomalous", "1",
        "--mask-scale", "4")
    tdir, sdir = tmp_path / "t", tmp_path / "s"
    assert run("train", out / "support_000.gadt", "--out-dir", tdir, *FAST) == 0
    assert run("score", *sorted((out / "queries").glob("*.gadt")),
               "--checkpoint", tdir / "model.ckpt", "--out-dir", sdir,
               "--output-rows", "32", "--output-cols", "32") == 0
    edir = tmp_path / "e"
    assert run("eval", "--map-dir", sdir, "--mask-dir", out / "masks",
               "--out-dir", edir) == 0
    metrics = json.loads((edir / "metrics.jsonl").read_text())
    assert np.isfinite(metrics["pixel_auroc"]) and np.isfinite(metrics["pixel_pro"])


def test_eval_orphan_maps_exit_two(tmp_path):
    sdir = tmp_path / "maps"
    mdir = tmp_path / "masks"
    sdir.mkdir(), mdir.mkdir()
    write_grid(sdir / "a_map.gadt")  # any grid parses as a map
    assert run("eval", "--map-dir", sdir, "--mask-dir", mdir,
               "--out-dir", tmp_path / "e") == 2


def test_parse_sweep_grid(tmp_path):
    grid = tmp_path / "grid.txt"
    grid.write_text("objective=sce,mse\nlr=0.001,0.01\n")
    points = parse_sweep_grid(grid)
    assert len(points) == 4
    assert {"objective": "sce", "lr": 0.001} in points
    grid.write_text("objective=\n")
    with pytest.raises(ConfigError):
        parse_sweep_grid(grid)


def test_sweep_command(tmp_path):
    out = tmp_path / "bench"
    run("synth", "--out-dir", out, "--rows", "8", "--cols", "8", "--dim", "4",
        "--block", "2", "2", "2", "2", "--normal", "2", "--anomalous", "2")
    grid = tmp_path / "grid.txt"
    grid.write_text("objective=sce,mse\n")
    swdir = tmp_path / "sweep"
    assert run("sweep", "--grid", grid, "--support", out / "support_000.gadt",
               "--queries", out / "queries", "--labels", out / "labels.csv",
               "--out-dir", swdir, "--seed", "3", *FAST) == 0
    lines = (swdir / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "objective,seed,image_auroc,image_ap"
    assert len(lines) == 3
    # seed advances with the sweep point index
    assert lines[1].split(",")[1] == "3" and lines[2].split(",")[1] == "4"
