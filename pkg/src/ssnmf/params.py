"""Data-driven starting values for the lasso and graph weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import HyperspectralImage, as_array
from .errors import DegenerateInputError, ParameterError
from .graph import DEFAULT_MODE, WeightMode, unit_columns

GRID_POINTS = 50
ALPHA_RANGE = (1e-1, 10.0)
LAMBDA_RANGE = (1e-4, 10.0)
N_PATCHES = 100
PATCH = 5


@dataclass(frozen=True)
class ParamEstimate:
    alpha0: float
    lambda0: float
    alpha_grid: np.ndarray
    lambda_grid: np.ndarray


def estimate_alpha0(Y) -> float:
    """Average Hoyer sparseness of the band images, scaled by 1/sqrt(L).

    alpha0 = (1/sqrt(L)) * sum_l (sqrt(N) - |x_l|_1/|x_l|_2) / (sqrt(N) - 1)
    where x_l is band l over all pixels. All-zero bands are skipped.
    """
    X = as_array(Y)
    L, N = X.shape
    if N < 2:
        raise DegenerateInputError("sparseness needs at least two pixels")
    l2 = np.linalg.norm(X, axis=1)
    live = l2 > 0
    if not live.any():
        raise DegenerateInputError("every band is zero")
    if not live.all():
        warnings.warn(f"skipping {int((~live).sum())} all-zero band(s)", stacklevel=2)
    ratio = np.abs(X[live]).sum(axis=1) / l2[live]
    sparseness = (np.sqrt(N) - ratio) / (np.sqrt(N) - 1)
    return float(sparseness.sum() / np.sqrt(live.sum()))


def estimate_lambda0(image: HyperspectralImage, seed=0, mode=DEFAULT_MODE,
                     n_patches: int = N_PATCHES, patch: int = PATCH) -> float:
    """Mean center-to-neighbor similarity over random square patches.

    Patch anchors are drawn uniformly with replacement. Similarity uses
    the same weighting as the neighbor graph (``mode``).
    """
    mode = WeightMode.parse(mode)
    h, w = image.height, image.width
    if h < patch or w < patch:
        raise DegenerateInputError(f"image smaller than {patch}x{patch}")
    U, _ = unit_columns(image.data)
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, h - patch + 1, size=n_patches)
    cols = rng.integers(0, w - patch + 1, size=n_patches)
    dy, dx = np.divmod(np.arange(patch * patch), patch)
    c = patch // 2
    ring = (dy != c) | (dx != c)
    dy, dx = dy[ring], dx[ring]
    center = (rows + c) * w + cols + c
    nbrs = (rows[:, None] + dy) * w + cols[:, None] + dx
    cos = np.einsum("lp,lpq->pq", U[:, center], U[:, nbrs])
    cos = np.clip(cos, -1.0, 1.0)
    values = cos if mode is WeightMode.COSINE else np.arccos(cos)
    return float(values.mean())


def make_grids(alpha0: float, lambda0: float) -> ParamEstimate:
    """Linear 50-point search grids around the estimates."""
    if alpha0 <= 0:
        warnings.warn("alpha0 <= 0, using 1e-6", stacklevel=2)
        alpha0 = 1e-6
    if lambda0 <= 0:
        warnings.warn("lambda0 <= 0, using 1e-6", stacklevel=2)
        lambda0 = 1e-6
    alpha_grid = np.linspace(ALPHA_RANGE[0] * alpha0, ALPHA_RANGE[1] * alpha0, GRID_POINTS)
    lambda_grid = np.linspace(LAMBDA_RANGE[0] * lambda0, LAMBDA_RANGE[1] * lambda0,
                              GRID_POINTS)
    return ParamEstimate(float(alpha0), float(lambda0), alpha_grid, lambda_grid)


def estimate(image: HyperspectralImage, seed=0, mode=DEFAULT_MODE) -> ParamEstimate:
    if not isinstance(image, HyperspectralImage):
        raise ParameterError("estimate() needs a HyperspectralImage")
    return make_grids(estimate_alpha0(image), estimate_lambda0(image, seed, mode))
