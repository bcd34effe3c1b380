"""End-to-end pipeline through the two command-line tools.

1. `extract` turns images into patch-token grid files (here with the
   weightless `stub` backbone so no model download is needed; swap in a
   DINOv2/DINOv3 id on a machine with the weights cached).
2. `graphad train` fits the detector on the support tokens.
3. `graphad score` writes image scores and anomaly heatmaps.
4. `graphad eval` computes metrics from the scores.

Run:  python demos/03_cli_and_extractor.py
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image


def sh(*argv):
    print("  $", " ".join(str(a) for a in argv))
    subprocess.run([str(a) for a in argv], check=True)


def make_image(path, seed, defect=False):
    """A woven-looking texture; anomalous images get a pale square."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:256, 0:256] / 256.0
    img = 0.5 + 0.2 * np.sin(12 * np.pi * x) * np.sin(8 * np.pi * y)
    img = img[..., None] * np.array([0.9, 0.7, 0.5])
    img += 0.05 * rng.random((256, 256, 3))
    if defect:
        img[96:160, 96:160] = 0.9
    Image.fromarray((np.clip(img, 0, 1) * 255).astype(np.uint8)).save(path)


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    images = tmp / "images"
    images.mkdir()
    make_image(images / "support.png", seed=0)
    make_image(images / "good.png", seed=1)
    make_image(images / "bad.png", seed=2, defect=True)

    print("extracting patch tokens (stub backbone, patch size 16) ...")
    sh("extract", *images.glob("*.png"), "--backbone", "stub",
       "--beta", "256", "--zeta", "4", "--out-dir", tmp / "tokens")

    print("training ...")
    sh("graphad", "train", tmp / "tokens" / "support.gadt",
       "--out-dir", tmp / "model", "--max-epochs", "200",
       "--hidden-dim", "64", "--latent-dim", "64", "--g-hidden-dim", "64")

    print("scoring ...")
    sh("graphad", "score", tmp / "tokens" / "good.gadt", tmp / "tokens" / "bad.gadt",
       "--checkpoint", tmp / "model" / "model.ckpt", "--out-dir", tmp / "scores",
       "--output-rows", "256", "--output-cols", "256")
    print((tmp / "scores" / "scores.csv").read_text())

    print("evaluating ...")
    (tmp / "labels.csv").write_text("file,label\ngood.gadt,0\nbad.gadt,1\n")
    sh("graphad", "eval", "--scores", tmp / "scores" / "scores.csv",
       "--labels", tmp / "labels.csv", "--out-dir", tmp / "metrics")

print("done; heatmaps were written next to the scores as 16-bit PGM files")
sys.exit(0)
