"""Operator-facing commands: train, score, eval, sweep, synth.

Config precedence is flags > config file (flat key=value lines) > defaults.
Every command writes a manifest.json next to its outputs. Exit codes:
0 success, 1 I/O failure, 2 validation/config failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .align import AlignConfig, OBJECTIVES
from .errors import (ConfigError, DataError, DegenerateLabelsError, DimensionError,
                     FormatError, GraphAdError)
from .gat import AGG_GAT, AGG_GCN, EncoderConfig
from .metrics import LabeledScores, MaskedMap, MetricsReport, auroc, average_precision, pixel_auroc, pro
from .pgm import read_mask_pgm, write_mask_pgm, write_pgm16
from .score import POOL_MAX, POOL_TOP_K_MEAN, ScoreConfig, score_grid
from .synth import SynthSpec, generate_anomalous, generate_normal
from .tokenio import PatchGrid, read_tokens_file, write_tokens_file
from .train import TrainConfig, load_checkpoint, save_checkpoint, train_model

# config keys shared by the file format, the flags, and the sweep grid
CONFIG_DEFAULTS = {
    "lr": 3e-4, "max_epochs": 2000, "patience": 100, "min_delta": 1e-5, "seed": 0,
    "layers": 3, "hidden_dim": 256, "mask_ratio": 0.2, "dropout": 0.3,
    "aggregation": AGG_GAT, "leaky_slope": 0.2,
    "latent_dim": 256, "g_hidden_dim": 256, "gamma": 2.0, "objective": "sce",
    "top_ratio": 0.025, "pooling": POOL_TOP_K_MEAN, "sigma": 1.0,
    "output_rows": 0, "output_cols": 0,
}
_INT_KEYS = {"max_epochs", "patience", "seed", "layers", "hidden_dim",
             "latent_dim", "g_hidden_dim", "output_rows", "output_cols"}
_STR_KEYS = {"aggregation", "objective", "pooling"}


def parse_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = coerce_config_value(key, raw)
    return values


def coerce_config_value(key: str, raw: str):
    if key not in CONFIG_DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    if key in _STR_KEYS:
        return raw
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def merge_config(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            cfg[key] = flag_val
    return cfg


def build_train_config(cfg: dict) -> TrainConfig:
    if not 0.0 <= cfg["mask_ratio"] < 1.0:
        raise ConfigError(f"--mask-ratio must be in [0, 1), got {cfg['mask_ratio']}")
    if not 0.0 <= cfg["dropout"] < 1.0:
        raise ConfigError(f"--dropout must be in [0, 1), got {cfg['dropout']}")
    return TrainConfig(
        encoder=EncoderConfig(
            input_dim=0,  # filled from the support grids
            num_layers=cfg["layers"], hidden_dim=cfg["hidden_dim"],
            mask_ratio=cfg["mask_ratio"], dropout_rate=cfg["dropout"],
            aggregation=cfg["aggregation"], leaky_slope=cfg["leaky_slope"]),
        align=AlignConfig(latent_dim=cfg["latent_dim"], gamma=cfg["gamma"],
                          g_hidden_dim=cfg["g_hidden_dim"], objective=cfg["objective"]),
        lr=cfg["lr"], max_epochs=cfg["max_epochs"], patience=cfg["patience"],
        min_delta=cfg["min_delta"], seed=cfg["seed"])


def build_score_config(cfg: dict) -> ScoreConfig:
    if not 0.0 < cfg["top_ratio"] <= 1.0:
        raise ConfigError(f"--top-ratio must be in (0, 1], got {cfg['top_ratio']}")
    return ScoreConfig(top_ratio=cfg["top_ratio"], image_pooling=cfg["pooling"],
                       blur_sigma=cfg["sigma"], output_rows=cfg["output_rows"],
                       output_cols=cfg["output_cols"])


def write_manifest(out_dir: Path, command: str, cfg: dict, inputs: list, timings: dict):
    manifest = {
        "command": command,
        "config": cfg,
        "inputs": [str(p) for p in inputs],
        "seed": cfg.get("seed"),
        "version": __version__,
        "timings_s": timings,
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def atomic_write_text(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def fmt(value: float) -> str:
    return format(float(value), ".10g")


def load_support(paths) -> list:
    grids = [read_tokens_file(p) for p in paths]
    dims = {(g.rows, g.cols, g.dim) for g in grids}
    if len(dims) > 1:
        raise DimensionError(f"token files have mixed grid dims: {sorted(dims)}")
    return grids


# --- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = merge_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    grids = load_support(args.tokens)
    timings["load"] = time.perf_counter() - t0
    train_cfg = build_train_config(cfg)
    train_cfg.encoder.input_dim = grids[0].dim
    t0 = time.perf_counter()
    model, history = train_model(grids, train_cfg)
    timings["train"] = time.perf_counter() - t0
    with open(out_dir / "model.ckpt", "wb") as f:
        save_checkpoint(model, f, epochs_trained=len(history), final_loss=min(history))
    lines = ["epoch,loss"] + [f"{i},{fmt(loss)}" for i, loss in enumerate(history)]
    atomic_write_text(out_dir / "loss_history.csv", "\n".join(lines) + "\n")
    write_manifest(out_dir, "train", cfg, args.tokens, timings)
    print(f"trained {len(history)} epochs, best loss {fmt(min(history))}")
    return 0


def cmd_score(args) -> int:
    cfg = merge_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.checkpoint, "rb") as f:
        model = load_checkpoint(f).model
    score_cfg = build_score_config(cfg)
    timings = {}
    t0 = time.perf_counter()
    rows = ["file,image_score"]
    for path in args.tokens:
        grid = read_tokens_file(path)
        result = score_grid(grid, model, score_cfg)
        stem = Path(path).stem
        rows.append(f"{Path(path).name},{fmt(result.image_score)}")
        pm = result.pixel_map
        write_tokens_file(PatchGrid(pm.shape[0], pm.shape[1], 1,
                                    pm.astype(np.float32)),
                          out_dir / f"{stem}_map.gadt")
        with open(out_dir / f"{stem}_map.pgm", "wb") as f:
            write_pgm16(pm, f)
    timings["score"] = time.perf_counter() - t0
    atomic_write_text(out_dir / "scores.csv", "\n".join(rows) + "\n")
    write_manifest(out_dir, "score", cfg, [args.checkpoint, *args.tokens], timings)
    return 0


def read_scores_csv(path) -> dict:
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out[row["file"]] = float(row["image_score"])
    return out


def read_labels_csv(path) -> dict:
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out[row["file"]] = int(row["label"])
    return out


def image_metrics(scores: dict, labels: dict):
    orphans = sorted(set(scores) ^ set(labels))
    if orphans:
        raise DimensionError(f"unmatched files between scores and labels: {orphans}")
    names = sorted(scores)
    data = LabeledScores(np.array([scores[n] for n in names]),
                         np.array([labels[n] for n in names]))
    return auroc(data), average_precision(data)


def collect_masked_maps(map_dir, mask_dir) -> list:
    map_dir, mask_dir = Path(map_dir), Path(mask_dir)
    maps = sorted(map_dir.glob("*_map.gadt"))
    masks = {p.name[: -len("_mask.pgm")]: p for p in mask_dir.glob("*_mask.pgm")}
    bases = [p.name[: -len("_map.gadt")] for p in maps]
    orphans = sorted(set(bases) ^ set(masks))
    if orphans:
        raise DimensionError(f"unmatched files between maps and masks: {orphans}")
    out = []
    for base, map_path in zip(bases, maps):
        grid = read_tokens_file(map_path)
        out.append(MaskedMap(grid.data.reshape(grid.rows, grid.cols),
                             read_mask_pgm(masks[base])))
    return out


def cmd_eval(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = MetricsReport()
    timings = {}
    inputs = []
    t0 = time.perf_counter()
    if args.scores or args.labels:
        if not (args.scores and args.labels):
            raise ConfigError("--scores and --labels must be given together")
        inputs += [args.scores, args.labels]
        report.image_auroc, report.image_ap = image_metrics(
            read_scores_csv(args.scores), read_labels_csv(args.labels))
    if args.map_dir or args.mask_dir:
        if not (args.map_dir and args.mask_dir):
            raise ConfigError("--map-dir and --mask-dir must be given together")
        inputs += [args.map_dir, args.mask_dir]
        maps = collect_masked_maps(args.map_dir, args.mask_dir)
        report.pixel_auroc = pixel_auroc(maps)
        report.pixel_pro = pro(maps, fpr_limit=args.fpr_limit)
    if not inputs:
        raise ConfigError("nothing to evaluate: pass --scores/--labels or --map-dir/--mask-dir")
    timings["eval"] = time.perf_counter() - t0
    fields = report.as_dict()
    csv_text = ",".join(fields) + "\n" + ",".join(fmt(v) for v in fields.values()) + "\n"
    atomic_write_text(out_dir / "metrics.csv", csv_text)
    atomic_write_text(out_dir / "metrics.jsonl", json.dumps(fields) + "\n")
    write_manifest(out_dir, "eval", {"fpr_limit": args.fpr_limit, "seed": None},
                   inputs, timings)
    print(csv_text, end="")
    return 0


def parse_sweep_grid(path) -> list:
    """Grid file: one ``key=v1,v2,...`` line per axis; returns config dicts."""
    axes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=v1,v2,..., got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values = [coerce_config_value(key, v.strip()) for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"{path}:{lineno}: no values for {key}")
        axes.append((key, values))
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        points.append(dict(zip((k for k, _ in axes), combo)))
    return points or [{}]


def cmd_sweep(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_cfg = merge_config(args)
    points = parse_sweep_grid(args.grid)
    support = load_support(args.support)
    query_paths = sorted(Path(args.queries).glob("*.gadt"))
    if not query_paths:
        raise ConfigError(f"no .gadt token files under {args.queries}")
    labels = read_labels_csv(args.labels)
    swept_keys = sorted({k for p in points for k in p})
    rows = []
    timings = {}
    t0 = time.perf_counter()
    for index, point in enumerate(points):
        cfg = dict(base_cfg)
        cfg.update(point)
        cfg["seed"] = base_cfg["seed"] + index
        train_cfg = build_train_config(cfg)
        train_cfg.encoder.input_dim = support[0].dim
        model, _ = train_model(support, train_cfg)
        score_cfg = build_score_config(cfg)
        scores = {}
        for qp in query_paths:
            result = score_grid(read_tokens_file(qp), model, score_cfg)
            scores[qp.name] = result.image_score
        img_auroc, img_ap = image_metrics(scores, labels)
        rows.append([str(point.get(k, cfg[k])) for k in swept_keys]
                    + [str(cfg["seed"]), fmt(img_auroc), fmt(img_ap)])
    timings["sweep"] = time.perf_counter() - t0
    header = swept_keys + ["seed", "image_auroc", "image_ap"]
    text = ",".join(header) + "\n" + "\n".join(",".join(r) for r in rows) + "\n"
    atomic_write_text(out_dir / "sweep.csv", text)
    write_manifest(out_dir, "sweep", base_cfg,
                   [args.grid, *args.support, args.queries, args.labels], timings)
    print(text, end="")
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    (out_dir / "queries").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    base = SynthSpec(rows=args.rows, cols=args.cols, dim=args.dim,
                     texture_rank=args.texture_rank, texture_amp=args.texture_amp,
                     noise_sigma=args.noise_sigma,
                     anomaly_block=tuple(args.block), anomaly_magnitude=args.magnitude,
                     seed=args.seed, category_seed=args.category_seed).validate()
    spec_dict = base.__dict__.copy()
    timings = {}
    t0 = time.perf_counter()
    write_tokens_file(generate_normal(base), out_dir / "support_000.gadt")
    labels = ["file,label"]
    scale = args.mask_scale
    for i in range(args.normal):
        spec = SynthSpec(**{**spec_dict, "seed": base.seed + 1 + i})
        name = f"normal_{i:03d}"
        write_tokens_file(generate_normal(spec), out_dir / "queries" / f"{name}.gadt")
        labels.append(f"{name}.gadt,0")
        empty = np.zeros((base.rows * scale, base.cols * scale), dtype=bool)
        with open(out_dir / "masks" / f"{name}_mask.pgm", "wb") as f:
            write_mask_pgm(empty, f)
    for i in range(args.anomalous):
        spec = SynthSpec(**{**spec_dict, "seed": base.seed + 1 + args.normal + i})
        grid, mask = generate_anomalous(spec)
        name = f"anom_{i:03d}"
        write_tokens_file(grid, out_dir / "queries" / f"{name}.gadt")
        labels.append(f"{name}.gadt,1")
        pixel_mask = np.kron(mask, np.ones((scale, scale), dtype=bool))
        with open(out_dir / "masks" / f"{name}_mask.pgm", "wb") as f:
            write_mask_pgm(pixel_mask, f)
    timings["synth"] = time.perf_counter() - t0
    atomic_write_text(out_dir / "labels.csv", "\n".join(labels) + "\n")
    manifest_cfg = {**spec_dict, "normal": args.normal, "anomalous": args.anomalous,
                    "mask_scale": scale, "anomaly_block": list(base.anomaly_block)}
    write_manifest(out_dir, "synth", manifest_cfg, [], timings)
    return 0


# --- argument parsing --------------------------------------------------------

def add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--lr", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--min-delta", dest="min_delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--mask-ratio", dest="mask_ratio", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--aggregation", choices=[AGG_GAT, AGG_GCN])
    p.add_argument("--leaky-slope", dest="leaky_slope", type=float)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--g-hidden-dim", dest="g_hidden_dim", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--objective", choices=list(OBJECTIVES))
    p.add_argument("--top-ratio", dest="top_ratio", type=float)
    p.add_argument("--pooling", choices=[POOL_TOP_K_MEAN, POOL_MAX])
    p.add_argument("--sigma", type=float)
    p.add_argument("--output-rows", dest="output_rows", type=int)
    p.add_argument("--output-cols", dest="output_cols", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphad",
                                     description="patch-grid anomaly detection engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on support token files")
    p.add_argument("tokens", nargs="+", help="support .gadt token files")
    p.add_argument("--out-dir", required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score query token files with a checkpoint")
    p.add_argument("tokens", nargs="+", help="query .gadt token files")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="compute metrics from scores and/or maps")
    p.add_argument("--scores", help="scores.csv from the score command")
    p.add_argument("--labels", help="labels.csv with columns file,label")
    p.add_argument("--map-dir", dest="map_dir", help="directory of *_map.gadt files")
    p.add_argument("--mask-dir", dest="mask_dir", help="directory of *_mask.pgm files")
    p.add_argument("--fpr-limit", dest="fpr_limit", type=float, default=0.3)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train/score/eval over a hyperparameter grid")
    p.add_argument("--grid", required=True, help="grid file: key=v1,v2,... per line")
    p.add_argument("--support", nargs="+", required=True)
    p.add_argument("--queries", required=True, help="directory of query .gadt files")
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic labeled benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rows", type=int, default=32)
    p.add_argument("--cols", type=int, default=32)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--texture-rank", dest="texture_rank", type=int, default=4)
    p.add_argument("--texture-amp", dest="texture_amp", type=float, default=3.0)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=1.0)
    p.add_argument("--block", type=int, nargs=4, default=[12, 12, 4, 4],
                   metavar=("ROW", "COL", "HEIGHT", "WIDTH"))
    p.add_argument("--magnitude", type=float, default=3.0)
    p.add_argument("--normal", type=int, default=20)
    p.add_argument("--anomalous", type=int, default=20)
    p.add_argument("--mask-scale", dest="mask_scale", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--category-seed", dest="category_seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError, DegenerateLabelsError, DataError,
            FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, GraphAdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
