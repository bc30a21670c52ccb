"""Abundance maps as binary PPM (P6) / PGM (P5) rasters.

Pseudocolor mixes inks in endmember order Red, Blue, Green, Black:

    R = 255 * (1 - clamp(A2 + A3 + A4))
    G = 255 * (1 - clamp(A1 + A2 + A4))
    B = 255 * (1 - clamp(A1 + A3 + A4))

with floor rounding, so a pure endmember 1 pixel is red and a 50/50 mix
of endmembers 1 and 2 is purple (127, 0, 127).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError

# absorbs products that land just below an integer, e.g. 254.99999999999997
_FLOOR_SLACK = 1e-9


def _to_byte(v):
    return np.floor(np.clip(v + _FLOOR_SLACK, 0.0, 255.0)).astype(np.uint8)


def normalize_columns(A) -> np.ndarray:
    """Divide columns summing to more than one by their sum; clamp to [0, 1]."""
    A = np.asarray(getattr(A, "data", A), dtype=np.float64)
    sums = A.sum(axis=0)
    A = np.where(sums > 1, A / np.where(sums > 1, sums, 1.0), A)
    return np.clip(A, 0.0, 1.0)


def pseudocolor(A) -> np.ndarray:
    """N x 3 uint8 RGB from a K x N abundance matrix, K <= 4."""
    A = normalize_columns(A)
    k, n = A.shape
    if k > 4:
        raise ParameterError(f"pseudocolor supports at most 4 endmembers, got {k}")
    a1, a2, a3, a4 = np.vstack([A, np.zeros((4 - k, n))])
    r = 255.0 * (1.0 - np.minimum(1.0, a2 + a3 + a4))
    g = 255.0 * (1.0 - np.minimum(1.0, a1 + a2 + a4))
    b = 255.0 * (1.0 - np.minimum(1.0, a1 + a3 + a4))
    return _to_byte(np.stack([r, g, b], axis=1))


def grayscale(z) -> np.ndarray:
    return _to_byte(255.0 * np.asarray(z, dtype=np.float64).ravel())


def write_ppm(path, rgb: np.ndarray, height: int, width: int):
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.shape != (height * width, 3):
        raise ShapeError(f"expected {height * width} RGB pixels, got {rgb.shape}")
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (width, height) + rgb.tobytes())


def write_pgm(path, gray: np.ndarray, height: int, width: int):
    gray = np.asarray(gray, dtype=np.uint8).ravel()
    if gray.size != height * width:
        raise ShapeError(f"expected {height * width} pixels, got {gray.size}")
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (width, height) + gray.tobytes())


def read_pnm(path):
    """Parse a P5/P6 file written by this module; returns (magic, h, w, pixels)."""
    raw = Path(path).read_bytes()
    magic, dims, maxval, rest = raw.split(b"\n", 3)
    width, height = (int(v) for v in dims.split())
    if maxval != b"255":
        raise ParameterError("only maxval 255 is supported")
    channels = 3 if magic == b"P6" else 1
    pixels = np.frombuffer(rest, dtype=np.uint8).reshape(height * width, channels)
    return magic.decode(), height, width, pixels


def render_pseudocolor(A, height: int, width: int, path):
    write_ppm(path, pseudocolor(A), height, width)


def render_grayscale(z, height: int, width: int, path):
    write_pgm(path, grayscale(z), height, width)
