import sys
import textwrap
import time

import numpy as np
import pytest

from maskprop import pnm
from maskprop.errors import ConfigError, SegmenterError
from maskprop.segmenter import (
    CorruptionModel,
    ExternalProcessSegmenter,
    LatencyModel,
    OracleSegmenter,
    ThresholdSegmenter,
    channel_expression,
)


def frame_of(mask):
    f = np.zeros(mask.shape + (3,), dtype=np.uint8)
    f[mask] = 200
    return f


@pytest.fixture
def mask_dir(tmp_path):
    d = tmp_path / "masks"
    d.mkdir()
    for fid in range(8):
        m = np.zeros((12, 16), dtype=bool)
        m[2:6, fid:fid + 5] = True
        pnm.write_mask(d / f"{fid:06d}.pgm", m)
    return d


def test_frame_count_latency_schedule(mask_dir):
    seg = OracleSegmenter(mask_dir, LatencyModel("frame-count", 3))
    frame = frame_of(pnm.read_mask(mask_dir / "000000.pgm"))
    assert seg.submit_if_idle(0, frame)
    assert seg.busy
    assert not seg.submit_if_idle(1, frame)   # single slot
    assert seg.poll_result(now_frame=2) is None
    res = seg.poll_result(now_frame=3)
    assert res is not None and res.frame_id == 0
    np.testing.assert_array_equal(res.mask, pnm.read_mask(mask_dir / "000000.pgm"))
    assert not seg.busy
    assert seg.poll_result(now_frame=4) is None  # delivered exactly once


def test_zero_latency_visible_same_frame(mask_dir):
    seg = OracleSegmenter(mask_dir, LatencyModel("frame-count", 0))
    frame = frame_of(pnm.read_mask(mask_dir / "000002.pgm"))
    assert seg.submit_if_idle(2, frame)
    res = seg.poll_result(now_frame=2)
    assert res is not None and res.frame_id == 2


def test_frame_ids_strictly_increasing(mask_dir):
    seg = OracleSegmenter(mask_dir, LatencyModel("frame-count", 1))
    frame = frame_of(pnm.read_mask(mask_dir / "000003.pgm"))
    seg.submit_if_idle(3, frame)
    seg.poll_result(now_frame=4)
    with pytest.raises(ValueError):
        seg.submit_if_idle(3, frame)


def test_oracle_missing_frame_raises(mask_dir):
    seg = OracleSegmenter(mask_dir, LatencyModel("frame-count", 0))
    with pytest.raises(SegmenterError):
        seg.submit_if_idle(99, np.zeros((12, 16, 3), dtype=np.uint8))


def test_oracle_empty_dir_rejected(tmp_path):
    with pytest.raises(ConfigError):
        OracleSegmenter(tmp_path, LatencyModel("frame-count", 0))


def test_wall_clock_latency(mask_dir):
    seg = OracleSegmenter(mask_dir, LatencyModel("wall-clock", 50.0))
    frame = frame_of(pnm.read_mask(mask_dir / "000000.pgm"))
    t0 = time.monotonic()
    assert seg.submit_if_idle(0, frame)
    res = None
    while res is None and time.monotonic() - t0 < 2.0:
        res = seg.poll_result()
        time.sleep(0.005)
    assert res is not None and res.frame_id == 0
    assert (time.monotonic() - t0) >= 0.050


def test_threshold_segmenter_channels():
    frame = np.zeros((4, 4, 3), dtype=np.uint8)
    frame[:2, :, 2] = 210   # blue-dominant top half
    frame[:2, :, 0] = 90
    seg = ThresholdSegmenter(LatencyModel("frame-count", 0), 40.0, "b-r")
    seg.submit_if_idle(0, frame)
    mask = seg.poll_result(now_frame=0).mask
    assert mask[:2].all() and not mask[2:].any()


def test_channel_expression_errors():
    with pytest.raises(ConfigError):
        channel_expression(np.zeros((2, 2, 3), np.uint8), "q")
    with pytest.raises(ConfigError):
        channel_expression(np.zeros((2, 2, 3), np.uint8), "r-q")


def test_corruption_model_dilate_erode():
    m = np.zeros((11, 11), dtype=bool)
    m[4:7, 4:7] = True
    grown = CorruptionModel(morph_radius=1).apply(m)
    shrunk = CorruptionModel(morph_radius=-1).apply(m)
    assert grown.sum() > m.sum() > shrunk.sum()
    assert (grown & m).sum() == m.sum()


def test_corruption_border_flip_deterministic():
    m = np.zeros((20, 20), dtype=bool)
    m[5:15, 5:15] = True
    a = CorruptionModel(border_flip_fraction=0.5, seed=3).apply(m)
    b = CorruptionModel(border_flip_fraction=0.5, seed=3).apply(m)
    np.testing.assert_array_equal(a, b)
    assert (a != m).any()


EXTERNAL_SEGMENTER = textwrap.dedent("""\
    import sys
    from maskprop import pnm
    while True:
        try:
            frame = pnm.read_ppm_stream(sys.stdin.buffer)
        except Exception:
            break
        mask = frame[:, :, 2] > 128
        pnm.write_pgm_stream(sys.stdout.buffer, pnm.mask_to_pgm(mask))
        sys.stdout.buffer.flush()
""")


def test_external_process_segmenter(tmp_path):
    script = tmp_path / "child.py"
    script.write_text(EXTERNAL_SEGMENTER)
    seg = ExternalProcessSegmenter(f"{sys.executable} {script}",
                                   LatencyModel("wall-clock", 0.0))
    try:
        frame = np.zeros((6, 8, 3), dtype=np.uint8)
        frame[:3, :, 2] = 200
        assert seg.submit_if_idle(0, frame)
        res = None
        t0 = time.monotonic()
        while res is None and time.monotonic() - t0 < 10.0:
            res = seg.poll_result()
            time.sleep(0.01)
        assert res is not None
        assert res.mask[:3].all() and not res.mask[3:].any()
    finally:
        seg.close()


def test_external_process_bad_command():
    with pytest.raises(SegmenterError):
        ExternalProcessSegmenter("/nonexistent/segmenter-binary")


def test_external_process_protocol_error(tmp_path):
    script = tmp_path / "bad.py"
    script.write_text("import sys; sys.stdout.write('garbage'); sys.stdout.flush()\n")
    seg = ExternalProcessSegmenter(f"{sys.executable} {script}",
                                   LatencyModel("wall-clock", 0.0))
    try:
        seg.submit_if_idle(0, np.zeros((4, 4, 3), dtype=np.uint8))
        t0 = time.monotonic()
        with pytest.raises(SegmenterError):
            while time.monotonic() - t0 < 10.0:
                if seg.poll_result() is not None:
                    break
                time.sleep(0.01)
            else:
                pytest.fail("child never answered")
    finally:
        seg.close()


def test_latency_model_validation():
    with pytest.raises(ConfigError):
        LatencyModel("sometimes", 1).validate()
    with pytest.raises(ConfigError):
        LatencyModel("wall-clock", -1).validate()
