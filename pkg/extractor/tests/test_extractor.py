"""Extractor conformance and geometry tests (stub backbone, no weights)."""

import numpy as np
import pytest
from PIL import Image

from graphad.tokenio import read_tokens_file

from graphad_extractor import (ExtractorConfig, StubBackbone, center_crop_to_multiple,
                               extract_augmented, extract_tokens, load_backbone,
                               load_image, resize_short_side, tokens_for_image)
from graphad_extractor.errors import (BackboneUnavailableError, ExtractorConfigError,
                                      ImageError)


def write_test_image(path, height, width, seed=0):
    rng = np.random.default_rng(seed)
    # smooth gradient + noise so resizing has structure to preserve
    y = np.linspace(0, 1, height)[:, None, None]
    x = np.linspace(0, 1, width)[None, :, None]
    img = 0.5 * y + 0.3 * x + 0.2 * rng.random((height, width, 3))
    Image.fromarray((img * 255).astype(np.uint8)).save(path)
    return path


def test_conformance_512_square_gives_32x32(tmp_path):
    """A 512x512 image through a /16 backbone yields a 32x32 grid token file
    that passes token validation."""
    image = write_test_image(tmp_path / "img.png", 512, 512)
    backbone = load_backbone("stub")  # patch 16
    cfg = ExtractorConfig(beta=512, zeta=4)
    out = tmp_path / "img.gadt"
    grid = extract_tokens(image, out, backbone, cfg)
    assert (grid.rows, grid.cols) == (32, 32)
    back = read_tokens_file(out)
    back.validate()
    assert (back.rows, back.cols, back.dim) == (32, 32, backbone.width)


def test_conformance_rotations_emit_four_files(tmp_path):
    image = write_test_image(tmp_path / "img.png", 512, 512)
    backbone = load_backbone("stub")
    cfg = ExtractorConfig(beta=512, zeta=2, rotations=[90, 180, 270])
    paths = extract_augmented(image, tmp_path, backbone, cfg)
    assert len(paths) == 4
    names = sorted(p.name for p in paths)
    assert names == ["img_0.gadt", "img_180.gadt", "img_270.gadt", "img_90.gadt"]
    for p in paths:
        read_tokens_file(p).validate()


def test_no_rotations_emit_one_file(tmp_path):
    image = write_test_image(tmp_path / "img.png", 256, 256)
    paths = extract_augmented(image, tmp_path, load_backbone("stub"),
                              ExtractorConfig(beta=256, zeta=1))
    assert len(paths) == 1 and paths[0].name == "img_0.gadt"


def test_nonsquare_resize_crop_arithmetic(tmp_path):
    # 600x512 at beta=512 with /16 patches: short side already 512, long side
    # 600 crops to 592 -> 37 patches
    image = write_test_image(tmp_path / "img.png", 600, 512)
    grid = tokens_for_image(load_image(image), load_backbone("stub"),
                            ExtractorConfig(beta=512, zeta=1))
    assert (grid.rows, grid.cols) == (37, 32)


def test_resize_scales_short_side():
    img = np.zeros((100, 200, 3))
    out = resize_short_side(img, 50)
    assert out.shape == (50, 100, 3)
    out = resize_short_side(img, 100)  # no-op when already at beta
    assert out.shape == (100, 200, 3)


def test_center_crop():
    img = np.zeros((37, 50, 3))
    out = center_crop_to_multiple(img, 16)
    assert out.shape == (32, 48, 3)
    with pytest.raises(ImageError):
        center_crop_to_multiple(np.zeros((10, 10, 3)), 16)


def test_rotation_transposes_grid_dims(tmp_path):
    image = write_test_image(tmp_path / "img.png", 592, 512)
    backbone = load_backbone("stub")
    cfg = ExtractorConfig(beta=512, zeta=1, rotations=[90])
    paths = extract_augmented(image, tmp_path, backbone, cfg)
    base = read_tokens_file(tmp_path / "img_0.gadt")
    rot = read_tokens_file(tmp_path / "img_90.gadt")
    assert (rot.rows, rot.cols) == (base.cols, base.rows)


def test_zeta_changes_output(tmp_path):
    image = write_test_image(tmp_path / "img.png", 256, 256)
    backbone = load_backbone("stub")
    pixels = load_image(image)
    one = tokens_for_image(pixels, backbone, ExtractorConfig(beta=256, zeta=1))
    full = tokens_for_image(pixels, backbone,
                            ExtractorConfig(beta=256, zeta=backbone.depth))
    assert one.data.shape == full.data.shape
    assert not np.array_equal(one.data, full.data)


def test_extraction_deterministic(tmp_path):
    image = write_test_image(tmp_path / "img.png", 256, 256)
    backbone = load_backbone("stub")
    cfg = ExtractorConfig(beta=256, zeta=3)
    pixels = load_image(image)
    a = tokens_for_image(pixels, backbone, cfg)
    b = tokens_for_image(pixels, backbone, cfg)
    assert np.array_equal(a.data, b.data)


def test_config_validation():
    backbone = StubBackbone()
    with pytest.raises(ExtractorConfigError):
        ExtractorConfig(zeta=0).validate()
    with pytest.raises(ExtractorConfigError):
        ExtractorConfig(zeta=backbone.depth + 1).validate(depth=backbone.depth)
    with pytest.raises(ExtractorConfigError):
        ExtractorConfig(beta=0).validate()
    with pytest.raises(ExtractorConfigError):
        ExtractorConfig(rotations=[45]).validate()


def test_unknown_backbone():
    with pytest.raises(ExtractorConfigError):
        load_backbone("vgg16")


def test_unavailable_weights_give_download_instructions(monkeypatch):
    # point torch.hub at a repo that cannot resolve offline
    import torch
    def boom(*a, **k):
        raise RuntimeError("no network")
    monkeypatch.setattr(torch.hub, "load", boom)
    with pytest.raises(BackboneUnavailableError, match="torch.hub"):
        load_backbone("dinov2-vitl14")


def test_unreadable_image(tmp_path):
    bad = tmp_path / "not_an_image.png"
    bad.write_bytes(b"definitely not a png")
    with pytest.raises(ImageError):
        load_image(bad)
