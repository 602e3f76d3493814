import io

import numpy as np
import pytest

from maskprop import pnm
from maskprop.errors import PnmError


def test_ppm_roundtrip(tmp_path):
    img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    p = tmp_path / "a.ppm"
    pnm.write_ppm(p, img)
    back = pnm.read_ppm(p)
    assert back.dtype == np.uint8
    np.testing.assert_array_equal(back, img)


def test_pgm_roundtrip(tmp_path):
    img = np.array([[0, 128], [255, 7]], dtype=np.uint8)
    p = tmp_path / "a.pgm"
    pnm.write_pgm(p, img)
    np.testing.assert_array_equal(pnm.read_pgm(p), img)


def test_header_comments_and_whitespace():
    raw = b"P5\n# a comment\n  2 # inline\n2\n255\n" + bytes([1, 2, 3, 4])
    img = pnm.read_pgm_stream(io.BytesIO(raw))
    np.testing.assert_array_equal(img, [[1, 2], [3, 4]])


def test_wrong_magic_rejected():
    with pytest.raises(PnmError):
        pnm.read_pgm_stream(io.BytesIO(b"P6\n1 1\n255\n\x00\x00\x00"))
    with pytest.raises(PnmError):
        pnm.read_ppm_stream(io.BytesIO(b"P5\n1 1\n255\n\x00"))


def test_maxval_must_be_255():
    with pytest.raises(PnmError):
        pnm.read_pgm_stream(io.BytesIO(b"P5\n1 1\n65535\n\x00\x00"))


def test_truncated_payload():
    with pytest.raises(PnmError):
        pnm.read_pgm_stream(io.BytesIO(b"P5\n2 2\n255\n\x00\x01"))


def test_mask_codec_strict():
    ok = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    mask = pnm.mask_from_pgm(ok)
    assert mask.dtype == bool
    np.testing.assert_array_equal(mask, [[False, True], [True, False]])
    np.testing.assert_array_equal(pnm.mask_to_pgm(mask), ok)
    with pytest.raises(PnmError):
        pnm.mask_from_pgm(np.array([[0, 128]], dtype=np.uint8))


def test_mask_file_roundtrip(tmp_path):
    mask = np.zeros((5, 4), dtype=bool)
    mask[1:3, 1:3] = True
    p = tmp_path / "m.pgm"
    pnm.write_mask(p, mask)
    np.testing.assert_array_equal(pnm.read_mask(p), mask)


def test_numbered_files_sorted_by_frame_id(tmp_path):
    for name in ("000010.ppm", "000002.ppm", "000001.ppm", "notes.txt"):
        (tmp_path / name).write_bytes(b"")
    entries = pnm.numbered_files(tmp_path, ".ppm")
    assert [fid for fid, _ in entries] == [1, 2, 10]
    assert all(p.suffix == ".ppm" for _, p in entries)
