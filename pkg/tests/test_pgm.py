"""PGM heatmap/mask round trips and header parsing."""

import io

import numpy as np
import pytest

from graphad.errors import FormatError, TruncationError
from graphad.pgm import read_mask_pgm, read_pgm, write_mask_pgm, write_pgm16


def test_heatmap_round_trip_normalization():
    m = np.array([[0.0, 1.0], [2.0, 4.0]])
    buf = io.BytesIO()
    n = write_pgm16(m, buf)
    assert n == buf.tell()
    buf.seek(0)
    back = read_pgm(buf)
    assert back.dtype == np.uint16
    # min-max normalized: 0 -> 0, 4 -> 65535, 1 -> round(65535/4)
    want = np.floor((m - m.min()) / (m.max() - m.min()) * 65535 + 0.5)
    np.testing.assert_array_equal(back, want.astype(np.uint16))


def test_heatmap_constant_map_writes_zeros():
    buf = io.BytesIO()
    write_pgm16(np.full((3, 3), 7.0), buf)
    buf.seek(0)
    assert np.all(read_pgm(buf) == 0)


def test_header_format_and_dimensions():
    buf = io.BytesIO()
    write_pgm16(np.zeros((2, 5)), buf)
    raw = buf.getvalue()
    assert raw.startswith(b"P5\n5 2\n65535\n")  # width height order
    assert len(raw) == len(b"P5\n5 2\n65535\n") + 2 * 5 * 2


def test_mask_round_trip(tmp_path):
    mask = np.zeros((4, 6), dtype=bool)
    mask[1, 2] = mask[3, 5] = True
    path = tmp_path / "m_mask.pgm"
    with open(path, "wb") as f:
        write_mask_pgm(mask, f)
    np.testing.assert_array_equal(read_mask_pgm(path), mask)


def test_comment_lines_skipped():
    raw = b"P5 # magic\n# a comment line\n2 2\n255\n" + bytes([0, 255, 1, 0])
    got = read_pgm(io.BytesIO(raw))
    np.testing.assert_array_equal(got, [[0, 255], [1, 0]])


def test_bad_magic_and_truncation():
    with pytest.raises(FormatError):
        read_pgm(io.BytesIO(b"P6\n2 2\n255\n" + b"\0" * 4))
    with pytest.raises(TruncationError):
        read_pgm(io.BytesIO(b"P5\n2 2\n255\n\0\0"))
    with pytest.raises(TruncationError):
        read_pgm(io.BytesIO(b"P5\n2 2"))
    with pytest.raises(FormatError):
        read_pgm(io.BytesIO(b"P5\n2 2\n99999\n" + b"\0" * 16))
