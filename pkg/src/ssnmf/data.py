"""Cube files, band presets, noise injection and synthetic scenes.

Cube file layout: one ASCII line ``HSCUBE1 <height> <width> <bands>\\n``
followed by little-endian float32 values, band-major (every pixel of
band 0, then band 1, ...), pixels in row-major order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import (AbundanceMatrix, EndmemberMatrix, GroundTruth,
                   HyperspectralImage)
from .errors import CubeFormatError, ParameterError

log = logging.getLogger(__name__)

MAGIC = b"HSCUBE1"
MAX_HEADER = 256
MAX_VALUES = 1 << 40


def _ranges(*spans):
    out = []
    for s in spans:
        lo, hi = s if isinstance(s, tuple) else (s, s)
        out.extend(range(lo, hi + 1))
    return tuple(out)


# 1-based band numbers dropped for water vapour / atmospheric effects
URBAN_BANDS = _ranges((1, 4), 76, 87, (101, 111), (136, 153), (198, 210))
JASPER_BANDS = _ranges((1, 3), (108, 112), (154, 166), (220, 224))
PRESETS = {"urban": URBAN_BANDS, "jasper": JASPER_BANDS}

NOISE_LADDER_DB = (math.inf, 30.0, 25.0, 20.0, 15.0, 10.0, 8.0)


def save_cube(image: HyperspectralImage, path):
    header = b"%s %d %d %d\n" % (MAGIC, image.height, image.width, image.bands)
    payload = np.ascontiguousarray(image.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_cube(path) -> HyperspectralImage:
    raw = Path(path).read_bytes()
    end = raw.find(b"\n", 0, MAX_HEADER)
    if end < 0:
        raise CubeFormatError(f"{path}: no header line")
    parts = raw[:end].split()
    if len(parts) != 4 or parts[0] != MAGIC:
        raise CubeFormatError(f"{path}: bad header {raw[:end]!r}")
    try:
        h, w, b = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise CubeFormatError(f"{path}: non-integer dimensions") from exc
    if min(h, w, b) < 1:
        raise CubeFormatError(f"{path}: dimensions must be positive")
    count = h * w * b
    if count > MAX_VALUES:
        raise CubeFormatError(f"{path}: dimensions overflow ({h}x{w}x{b})")
    payload = raw[end + 1:]
    if len(payload) != 4 * count:
        kind = "truncated" if len(payload) < 4 * count else "oversized"
        raise CubeFormatError(
            f"{path}: {kind} payload, {len(payload)} bytes for {count} values")
    data = np.frombuffer(payload, dtype="<f4").reshape(b, h * w).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise CubeFormatError(f"{path}: non-finite values")
    negative = int((data < 0).sum())
    if negative:
        log.warning("%s: clamped %d negative values to 0", path, negative)
        data = np.maximum(data, 0.0)
    return HyperspectralImage(data, h, w)


def remove_bands(image: HyperspectralImage, bands: Iterable[int]) -> HyperspectralImage:
    """Drop bands given by 1-based number.

    Numbers refer to ``image.band_ids`` when set, otherwise to positions
    1..L.
    """
    ids = image.band_ids or tuple(range(1, image.bands + 1))
    drop = set(int(b) for b in bands)
    unknown = drop.difference(ids)
    if unknown:
        raise ParameterError(f"band(s) {sorted(unknown)} not present in the cube")
    keep = [i for i, b in enumerate(ids) if b not in drop]
    return HyperspectralImage(image.data[keep], image.height, image.width,
                              tuple(ids[i] for i in keep))


def noise_sigma(Y, snr_db: float) -> float:
    """Std of white noise giving mean(Y^2)/sigma^2 = 10^(snr_db/10)."""
    Y = np.asarray(getattr(Y, "data", Y))
    return math.sqrt(float(np.mean(Y * Y)) * 10.0 ** (-snr_db / 10.0))


def add_gaussian_noise(image: HyperspectralImage, snr_db: float, seed=0,
                       clamp: bool = True) -> HyperspectralImage:
    """i.i.d. zero-mean Gaussian noise at a cube-wide SNR, then clamp at 0.

    ``clamp=False`` returns the raw noisy values as an array, for
    checking the realized SNR.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return image
    if not snr_db > 0:
        raise ParameterError(f"snr_db must be > 0 or inf, got {snr_db}")
    sigma = noise_sigma(image.data, snr_db)
    rng = np.random.default_rng(seed)
    noisy = image.data + rng.normal(0.0, sigma, size=image.data.shape)
    if not clamp:
        return noisy
    clamped = int((noisy < 0).sum())
    if clamped:
        log.info("noise at %g dB: clamped %d negative entries", snr_db, clamped)
    return HyperspectralImage(np.maximum(noisy, 0.0), image.height, image.width,
                              image.band_ids)


@dataclass(frozen=True)
class SceneSpec:
    height: int = 32
    width: int = 32
    k: int = 4
    bands: int = 40
    seed: int = 0
    blob_count: int = 3
    mixing_sparsity: int = 2
    smoothness: float = 1.5

    def __post_init__(self):
        if self.k < 2:
            raise ParameterError("a scene needs k >= 2")
        if not 1 <= self.mixing_sparsity <= self.k:
            raise ParameterError("mixing_sparsity must lie in [1, k]")
        if self.height < 1 or self.width < 1 or self.bands < 1 or self.blob_count < 1:
            raise ParameterError("height, width, bands and blob_count must be >= 1")
        if self.k * self.blob_count > self.height * self.width:
            raise ParameterError("more regions than pixels")
        if self.smoothness < 0:
            raise ParameterError("smoothness must be >= 0")


def random_spectra(bands: int, k: int, rng) -> np.ndarray:
    """k smooth positive spectra (sums of Gaussian bumps), unit l2 columns."""
    x = np.linspace(0.0, 1.0, bands)
    M = np.empty((bands, k))
    for j in range(k):
        s = np.full(bands, 0.05)
        for _ in range(4):
            center = rng.uniform(0.0, 1.0)
            width = rng.uniform(0.05, 0.3)
            s += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((x - center) / width) ** 2)
        M[:, j] = s / np.linalg.norm(s)
    return M


def region_abundances(spec: SceneSpec, rng) -> np.ndarray:
    """K x N abundances: Voronoi regions, blurred, then sparsified.

    Every endmember owns ``blob_count`` seed pixels; each pixel starts as
    pure in the owner of its nearest seed. Blurring mixes pixels near
    region borders; only the ``mixing_sparsity`` largest fractions
    survive and columns are renormalized to sum to one.
    """
    h, w, k = spec.height, spec.width, spec.k
    n_seeds = k * spec.blob_count
    seeds = rng.choice(h * w, size=n_seeds, replace=False)
    sy, sx = np.divmod(seeds, w)
    owner = np.repeat(np.arange(k), spec.blob_count)
    yy, xx = np.mgrid[0:h, 0:w]
    dist = (yy[None] - sy[:, None, None]) ** 2 + (xx[None] - sx[:, None, None]) ** 2
    label = owner[np.argmin(dist, axis=0)]
    fields = np.stack([(label == j).astype(float) for j in range(k)])
    if spec.smoothness > 0:
        fields = np.stack([gaussian_filter(f, spec.smoothness, mode="nearest")
                           for f in fields])
    A = fields.reshape(k, h * w)
    order = np.argsort(-A, axis=0, kind="stable")
    drop = order[spec.mixing_sparsity:]
    np.put_along_axis(A, drop, 0.0, axis=0)
    return A / A.sum(axis=0)


def synthesize_scene(spec: SceneSpec) -> Tuple[HyperspectralImage, GroundTruth]:
    """Noise-free scene Y = MA with regionally smooth, sparse abundances."""
    rng = np.random.default_rng(spec.seed)
    M = random_spectra(spec.bands, spec.k, rng)
    A = region_abundances(spec, rng)
    image = HyperspectralImage(M @ A, spec.height, spec.width)
    return image, GroundTruth(EndmemberMatrix(M), AbundanceMatrix(A))


def abundance_cube(A, height: int, width: int) -> HyperspectralImage:
    """Store a K x N abundance matrix as a K-band cube."""
    return HyperspectralImage(np.asarray(getattr(A, "data", A)), height, width)


def save_endmembers_csv(M, path, band_ids=None):
    M = np.asarray(getattr(M, "data", M))
    ids = band_ids or range(1, M.shape[0] + 1)
    lines = ["band," + ",".join(f"e{j + 1}" for j in range(M.shape[1]))]
    for b, row in zip(ids, M):
        lines.append(f"{b}," + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_endmembers_csv(path) -> EndmemberMatrix:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return EndmemberMatrix(rows[:, 1:])
