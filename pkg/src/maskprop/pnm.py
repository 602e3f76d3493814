"""Binary PPM (P6) and PGM (P5) reading and writing.

All images are 8-bit (maxval 255). Color frames are (H, W, 3) uint8 arrays,
grayscale images (H, W) uint8. Binary masks are stored as PGM with the
encoding 0 = background, 255 = foreground; any other value is rejected on
read. Readers work on binary streams so the same code serves files and the
stdin/stdout protocol of an external segmenter child process.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import PnmError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _read_token(stream) -> bytes:
    """Read one whitespace-delimited header token, skipping '#' comments."""
    tok = b""
    while True:
        c = stream.read(1)
        if c == b"":
            if tok:
                return tok
            raise PnmError("unexpected end of stream in PNM header")
        if c == b"#":
            # comment runs to end of line
            while c not in (b"\n", b"\r", b""):
                c = stream.read(1)
            continue
        if c in _WHITESPACE:
            if tok:
                return tok
            continue
        tok += c


def _read_header(stream, expected_magic: bytes):
    magic = _read_token(stream)
    if magic != expected_magic:
        raise PnmError(f"expected {expected_magic.decode()} magic, got {magic!r}")
    try:
        width = int(_read_token(stream))
        height = int(_read_token(stream))
        maxval = int(_read_token(stream))
    except ValueError as e:
        raise PnmError(f"non-numeric PNM header field: {e}") from e
    if width < 1 or height < 1:
        raise PnmError(f"invalid PNM dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"only maxval 255 is supported, got {maxval}")
    return width, height


def _read_exact(stream, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise PnmError(f"truncated PNM raster: wanted {n} bytes, got {len(buf)}")
        buf += chunk
    return buf


def read_ppm_stream(stream) -> np.ndarray:
    """Read one binary PPM from a stream; returns (H, W, 3) uint8."""
    width, height = _read_header(stream, b"P6")
    raw = _read_exact(stream, width * height * 3)
    return np.frombuffer(raw, np.uint8).reshape(height, width, 3).copy()


def read_pgm_stream(stream) -> np.ndarray:
    """Read one binary PGM from a stream; returns (H, W) uint8."""
    width, height = _read_header(stream, b"P5")
    raw = _read_exact(stream, width * height)
    return np.frombuffer(raw, np.uint8).reshape(height, width).copy()


def write_ppm_stream(stream, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise PnmError(f"PPM needs an (H, W, 3) array, got shape {img.shape}")
    h, w = img.shape[:2]
    stream.write(b"P6\n%d %d\n255\n" % (w, h))
    stream.write(img.tobytes())


def write_pgm_stream(stream, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise PnmError(f"PGM needs an (H, W) array, got shape {img.shape}")
    h, w = img.shape
    stream.write(b"P5\n%d %d\n255\n" % (w, h))
    stream.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_ppm_stream(f)


def write_ppm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_ppm_stream(f, img)


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_pgm_stream(f)


def write_pgm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_pgm_stream(f, img)


def mask_from_pgm(gray: np.ndarray) -> np.ndarray:
    """Decode a PGM raster as a binary mask; values other than 0/255 are errors."""
    bad = (gray != 0) & (gray != 255)
    if bad.any():
        vals = np.unique(gray[bad])[:8]
        raise PnmError(f"mask PGM contains non-binary values {vals.tolist()}")
    return gray == 255


def mask_to_pgm(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 255, 0).astype(np.uint8)


def read_mask(path) -> np.ndarray:
    return mask_from_pgm(read_pgm(path))


def write_mask(path, mask: np.ndarray) -> None:
    write_pgm(path, mask_to_pgm(mask))


def read_mask_stream(stream) -> np.ndarray:
    return mask_from_pgm(read_pgm_stream(stream))


def numbered_files(directory, suffix: str) -> list[tuple[int, Path]]:
    """List (frame_id, path) pairs for zero-padded numeric file names, sorted."""
    directory = Path(directory)
    out = []
    for p in sorted(directory.glob(f"*{suffix}")):
        stem = p.stem
        if stem.isdigit():
            out.append((int(stem), p))
    return out
