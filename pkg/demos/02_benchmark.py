"""Mini benchmark: image AUROC / AP and pixel AUROC / PRO on synthetic data.

A scaled-down version of the package's acceptance benchmark (smaller model,
fewer epochs, fewer queries) so it finishes in about half a minute while
still showing near-perfect separation.

Run:  python demos/02_benchmark.py
"""

import time

import numpy as np

from graphad import (AlignConfig, EncoderConfig, ScoreConfig, SynthSpec, TrainConfig,
                     auroc, average_precision, generate_anomalous, generate_normal,
                     pro, score_grid, train_model)
from graphad.metrics import LabeledScores, MaskedMap, pixel_auroc

spec = SynthSpec(rows=32, cols=32, dim=64, seed=0, category_seed=7)
n_queries = 8  # per class

t0 = time.perf_counter()
print("training 1-shot on a 32x32x64 grid ...")
cfg = TrainConfig(encoder=EncoderConfig(input_dim=64), align=AlignConfig(),
                  max_epochs=400, seed=0)
model, history = train_model([generate_normal(spec)], cfg)
print(f"  {len(history)} epochs in {time.perf_counter() - t0:.0f}s, "
      f"loss {min(history):.5f}")

score_cfg = ScoreConfig(output_rows=256, output_cols=256)
scores, labels, maps = [], [], []
for i in range(n_queries):
    grid = generate_normal(SynthSpec(**{**spec.__dict__, "seed": 1 + i}))
    r = score_grid(grid, model, score_cfg)
    scores.append(r.image_score)
    labels.append(0)
    maps.append(MaskedMap(r.pixel_map, np.zeros((256, 256), dtype=bool)))
for i in range(n_queries):
    grid, mask = generate_anomalous(SynthSpec(**{**spec.__dict__, "seed": 101 + i}))
    r = score_grid(grid, model, score_cfg)
    scores.append(r.image_score)
    labels.append(1)
    maps.append(MaskedMap(r.pixel_map, np.kron(mask, np.ones((8, 8), dtype=bool))))

data = LabeledScores(np.array(scores), np.array(labels))
print(f"  image AUROC {auroc(data):.3f}   image AP {average_precision(data):.3f}")
print(f"  pixel AUROC {pixel_auroc(maps):.3f}   PRO@0.3 {pro(maps):.3f}")
print(f"  total {time.perf_counter() - t0:.0f}s")
