"""Binary token-grid file format.

Layout (little-endian throughout):

    bytes 0..3   magic ``GADT``
    bytes 4..7   u32 version (currently 1)
    bytes 8..11  u32 rows
    bytes 12..15 u32 cols
    bytes 16..19 u32 dim
    bytes 20..   rows*cols*dim float32, row-major (row, col, channel)

Node index for grid position (r, c) is ``i = r*cols + c``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FormatError, TruncationError, UnsupportedVersionError

MAGIC = b"GADT"
VERSION = 1
HEADER = struct.Struct("<4sIIII")


@dataclass
class PatchGrid:
    """An H_p x W_p grid of D-dimensional patch feature tokens."""

    rows: int
    cols: int
    dim: int
    data: np.ndarray  # shape (rows*cols, dim), float32

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(
            self.rows * self.cols, self.dim
        )

    @property
    def num_nodes(self) -> int:
        return self.rows * self.cols

    def validate(self):
        if self.rows < 2 or self.cols < 2 or self.dim < 1:
            raise DataError(
                f"grid dims out of range: rows={self.rows} cols={self.cols} dim={self.dim}"
            )
        if self.data.size != self.rows * self.cols * self.dim:
            raise DataError("data length does not match rows*cols*dim")
        if not np.isfinite(self.data).all():
            raise DataError("grid contains non-finite values")
        return self


def write_tokens(grid: PatchGrid, sink) -> int:
    """Serialize ``grid`` to a binary stream; returns bytes written."""
    grid.validate()
    header = HEADER.pack(MAGIC, VERSION, grid.rows, grid.cols, grid.dim)
    payload = np.ascontiguousarray(grid.data, dtype="<f4").tobytes()
    sink.write(header)
    sink.write(payload)
    return len(header) + len(payload)


def read_tokens(source) -> PatchGrid:
    """Parse a token grid from a binary stream, validating at the boundary."""
    raw = source.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TruncationError(f"header truncated: got {len(raw)} of {HEADER.size} bytes")
    magic, version, rows, cols, dim = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported token file version {version}")
    if rows < 2 or cols < 2 or dim < 1:
        raise DataError(f"header declares illegal dims rows={rows} cols={cols} dim={dim}")
    expected = rows * cols * dim * 4
    payload = source.read(expected)
    if len(payload) < expected:
        raise TruncationError(f"payload truncated: got {len(payload)} of {expected} bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows * cols, dim)
    if not np.isfinite(data).all():
        raise DataError("token payload contains non-finite values")
    return PatchGrid(rows, cols, dim, data.copy())


def read_tokens_file(path) -> PatchGrid:
    with open(path, "rb") as f:
        return read_tokens(f)


def write_tokens_file(grid: PatchGrid, path) -> int:
    with open(path, "wb") as f:
        return write_tokens(grid, f)
