"""Few-shot anomaly detection over patch-feature grids.

A masked graph-attention encoder is trained on the patch tokens of a handful
of normal images; anomalies are scored by the reconstruction residual between
projected input tokens and projected encoder outputs.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DegenerateLabelsError,
    DimensionError,
    FormatError,
    NumericalError,
    TruncationError,
    UnsupportedVersionError,
)
from .tokenio import PatchGrid, read_tokens, write_tokens
from .graph import GridTopology, build_grid_topology, neighbors
from .gat import EncoderConfig, EncoderParams, GatLayerParams, encoder_forward
from .align import AlignConfig, ProjectionHeads, sce_loss, sce_per_node
from .train import Checkpoint, ModelParams, TrainConfig, load_checkpoint, save_checkpoint, train_model
from .score import AnomalyResult, ScoreConfig, image_score, patch_scores, pixel_map, score_grid
from .metrics import MetricsReport, auroc, average_precision, connected_components, pro
from .synth import SynthSpec, generate_anomalous, generate_normal
