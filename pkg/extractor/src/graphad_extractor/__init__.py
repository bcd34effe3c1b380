"""Frozen-ViT patch token extraction for the graphad engine.

The only contract with the engine is the token file format; any backbone
object with ``patch_size``/``width``/``depth``/``patch_tokens`` works.
"""

__version__ = "0.1.0"

from .backbones import PRETRAINED, StubBackbone, load_backbone
from .errors import (BackboneUnavailableError, ExtractorConfigError, ExtractorError,
                     ImageError)
from .extract import (ExtractorConfig, center_crop_to_multiple, extract_augmented,
                      extract_tokens, load_image, resize_short_side,
                      tokens_for_image)
