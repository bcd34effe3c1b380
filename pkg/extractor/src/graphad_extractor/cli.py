"""``extract`` command: images in, token files out.

Exit codes match the engine CLI: 0 success, 1 I/O failure (unreadable image,
missing weights), 2 configuration failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .backbones import PRETRAINED, default_beta, load_backbone
from .errors import BackboneUnavailableError, ExtractorConfigError, ImageError
from .extract import ExtractorConfig, extract_augmented, extract_tokens


def parse_rotations(raw: str) -> list:
    if not raw:
        return []
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ExtractorConfigError(f"bad rotation list {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="run a frozen ViT backbone over images and write "
                    "patch-token grid files")
    parser.add_argument("images", nargs="+", help="input image files")
    parser.add_argument("--backbone", default="stub",
                        choices=["stub", *PRETRAINED])
    parser.add_argument("--beta", type=int, default=None,
                        help="short-side resize target (default per backbone)")
    parser.add_argument("--zeta", type=int, default=8,
                        help="average the last ZETA transformer layers")
    parser.add_argument("--rotations", default="",
                        help="comma-separated degrees (e.g. 90,180,270) for "
                             "support augmentation")
    parser.add_argument("--pre-norm", action="store_true",
                        help="take tokens before the final layernorm")
    parser.add_argument("--out-dir", required=True)
    return parser


def run(args) -> int:
    cfg = ExtractorConfig(
        backbone=args.backbone,
        beta=args.beta if args.beta is not None else default_beta(args.backbone),
        zeta=args.zeta,
        rotations=parse_rotations(args.rotations),
        pre_norm=args.pre_norm,
    )
    backbone = load_backbone(cfg.backbone, pre_norm=cfg.pre_norm)
    cfg.validate(depth=backbone.depth)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for image in args.images:
        stem = Path(image).stem
        if cfg.rotations:
            paths = extract_augmented(image, out_dir, backbone, cfg, stem=stem)
            print(f"{image}: {len(paths)} token files")
        else:
            grid = extract_tokens(image, out_dir / f"{stem}.gadt", backbone, cfg)
            print(f"{image}: {grid.rows}x{grid.cols}x{grid.dim}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ExtractorConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ImageError, BackboneUnavailableError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
