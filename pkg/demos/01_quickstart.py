"""Quickstart: train a 1-shot model on a synthetic category and score queries.

Everything runs in a few seconds on a laptop core. The synthetic generator
stands in for a ViT feature extractor: each "image" is a 16x16 grid of
16-dimensional patch tokens sharing one texture field, and the anomalous
query has a 3x3 block of shifted tokens.

Run:  python demos/01_quickstart.py
"""

import numpy as np

from graphad import (AlignConfig, EncoderConfig, ScoreConfig, SynthSpec, TrainConfig,
                     generate_anomalous, generate_normal, score_grid, train_model)

# one normal support image of the category
spec = SynthSpec(rows=16, cols=16, dim=16, anomaly_block=(5, 5, 3, 3),
                 seed=0, category_seed=1)
support = generate_normal(spec)

print("training on a single support grid ...")
cfg = TrainConfig(
    encoder=EncoderConfig(input_dim=16, num_layers=2, hidden_dim=32),
    align=AlignConfig(latent_dim=32, g_hidden_dim=32),
    max_epochs=300, seed=0)
model, history = train_model([support], cfg)
print(f"  {len(history)} epochs, loss {history[0]:.4f} -> {min(history):.4f}")

# a fresh normal view and a defective one
normal = generate_normal(SynthSpec(**{**spec.__dict__, "seed": 1}))
defect, mask = generate_anomalous(SynthSpec(**{**spec.__dict__, "seed": 2}))

score_cfg = ScoreConfig(top_ratio=0.04)
for name, grid in [("normal ", normal), ("defect ", defect)]:
    result = score_grid(grid, model, score_cfg)
    print(f"  {name} image score: {result.image_score:.4f}")

# where does the model think the defect is?
result = score_grid(defect, model, score_cfg)
top = np.argsort(result.patch_scores)[::-1][:9]
predicted = {(int(i) // 16, int(i) % 16) for i in top}
actual = {(int(r), int(c)) for r, c in np.argwhere(mask)}
print(f"  top-9 patches: {sorted(predicted)}")
print(f"  true defect  : {sorted(actual)}")
print(f"  overlap      : {len(predicted & actual)}/9")
