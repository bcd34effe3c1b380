"""Minimal binary PGM (P5) reader/writer.

Heatmaps are exported as 16-bit PGM (maxval 65535, min-max normalized per
image); ground-truth masks are read as 8-bit PGM where nonzero = defect.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError, TruncationError


def write_pgm16(pixel_map: np.ndarray, sink) -> int:
    """Min-max normalize to [0, 65535] and write big-endian 16-bit P5."""
    m = np.asarray(pixel_map, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi > lo:
        scaled = (m - lo) / (hi - lo) * 65535.0
    else:
        scaled = np.zeros_like(m)
    pixels = np.floor(scaled + 0.5).astype(">u2")
    header = f"P5\n{m.shape[1]} {m.shape[0]}\n65535\n".encode("ascii")
    sink.write(header)
    payload = pixels.tobytes()
    sink.write(payload)
    return len(header) + len(payload)


def _read_pgm_tokens(source, n: int):
    """Next n whitespace-delimited header tokens, skipping # comments."""
    tokens = []
    while len(tokens) < n:
        ch = source.read(1)
        if not ch:
            raise TruncationError("PGM header truncated")
        if ch.isspace():
            continue
        if ch == b"#":
            while ch and ch != b"\n":
                ch = source.read(1)
            continue
        tok = ch
        while True:
            ch = source.read(1)
            if not ch or ch.isspace():
                break
            tok += ch
        tokens.append(tok)
    return tokens


def read_pgm(source) -> np.ndarray:
    """Read a binary P5 PGM; returns uint8 or uint16 (rows, cols) array."""
    magic = source.read(2)
    if magic != b"P5":
        raise FormatError(f"not a binary PGM: magic {magic!r}")
    width_b, height_b, maxval_b = _read_pgm_tokens(source, 3)
    try:
        width, height, maxval = int(width_b), int(height_b), int(maxval_b)
    except ValueError as exc:
        raise FormatError(f"bad PGM header: {exc}") from None
    if not (0 < maxval < 65536):
        raise FormatError(f"bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    payload = source.read(expected)
    if len(payload) < expected:
        raise TruncationError(f"PGM payload truncated: {len(payload)} of {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(height, width).astype(
        np.uint16 if maxval > 255 else np.uint8)


def read_mask_pgm(path) -> np.ndarray:
    """Binary defect mask: nonzero pixel = defect."""
    with open(path, "rb") as f:
        return read_pgm(f) != 0


def write_mask_pgm(mask: np.ndarray, sink) -> int:
    mask = np.asarray(mask)
    header = f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode("ascii")
    payload = np.where(mask, 255, 0).astype("u1").tobytes()
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)
