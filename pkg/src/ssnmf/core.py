"""Domain types, the linear mixing model and the SS-NMF objective.

Matrices follow the usual unmixing layout:

    Y  (L x N)  bands x pixels, pixel n = column n, row-major over the grid
    M  (L x K)  endmember spectra as columns
    A  (K x N)  abundances, column a_n per pixel, row z_k per endmember
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import ParameterError, ShapeError

if TYPE_CHECKING:
    from .graph import NeighborGraph


def _frozen(x, ndim=2) -> np.ndarray:
    arr = np.array(x, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def as_array(x) -> np.ndarray:
    """Return the matrix behind a domain type, or ``x`` itself as an array."""
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


@dataclass(frozen=True)
class HyperspectralImage:
    """Nonnegative L x N cube with its pixel grid shape.

    ``band_ids`` holds the 1-based original band numbers that survived
    band removal, or None when the cube is unprocessed.
    """

    data: np.ndarray
    height: int
    width: int
    band_ids: Optional[tuple] = None

    def __post_init__(self):
        data = _frozen(self.data)
        object.__setattr__(self, "data", data)
        if self.height < 1 or self.width < 1:
            raise ShapeError("image must have at least one pixel")
        if data.shape[1] != self.height * self.width:
            raise ShapeError(
                f"data has {data.shape[1]} columns, expected "
                f"{self.height}x{self.width}={self.height * self.width}")
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise ParameterError("image entries must be finite and >= 0")
        if self.band_ids is not None:
            ids = tuple(int(b) for b in self.band_ids)
            if len(ids) != data.shape[0]:
                raise ShapeError("band_ids length must equal band count")
            if any(b >= c for b, c in zip(ids, ids[1:])):
                raise ParameterError("band_ids must be strictly increasing")
            object.__setattr__(self, "band_ids", ids)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_array(cls, data, height=None, width=None, band_ids=None):
        data = np.asarray(data, dtype=np.float64)
        if height is None and width is None:
            height, width = 1, data.shape[1]
        elif height is None:
            height = data.shape[1] // width
        elif width is None:
            width = data.shape[1] // height
        return cls(data, int(height), int(width), band_ids)

    def grid(self) -> np.ndarray:
        """Cube as (height, width, bands)."""
        return self.data.T.reshape(self.height, self.width, self.bands)


@dataclass(frozen=True)
class EndmemberMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if np.any(data < 0):
            raise ParameterError("endmember entries must be >= 0")
        object.__setattr__(self, "data", data)

    @property
    def k(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AbundanceMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if np.any(data < 0):
            raise ParameterError("abundance entries must be >= 0")
        object.__setattr__(self, "data", data)

    @property
    def k(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class GroundTruth:
    endmembers: EndmemberMatrix
    abundances: AbundanceMatrix

    def __post_init__(self):
        if self.endmembers.k != self.abundances.k:
            raise ShapeError("ground truth endmember/abundance K disagree")

    def check_against(self, image: HyperspectralImage):
        if self.endmembers.data.shape[0] != image.bands:
            raise ShapeError("ground truth band count differs from image")
        if self.abundances.data.shape[1] != image.n_pixels:
            raise ShapeError("ground truth pixel count differs from image")


@dataclass(frozen=True)
class Objective:
    """Value of the SS-NMF objective split into its three parts."""

    total: float
    fit: float
    graph: float = 0.0
    lasso: float = 0.0

    @classmethod
    def from_parts(cls, fit, graph=0.0, lasso=0.0):
        return cls(float(fit + graph + lasso), float(fit), float(graph), float(lasso))


def _check_product_shapes(Y, M, A):
    if M.shape[1] != A.shape[0]:
        raise ShapeError(f"M is {M.shape}, A is {A.shape}: inner dimensions differ")
    if Y is not None and (Y.shape[0] != M.shape[0] or Y.shape[1] != A.shape[1]):
        raise ShapeError(f"Y is {Y.shape}, expected {(M.shape[0], A.shape[1])}")


def lmm_synthesize(M, A, noise_sigma: float = 0.0, seed=0,
                   height: Optional[int] = None, width: Optional[int] = None
                   ) -> HyperspectralImage:
    """Forward model Y = MA + E with Gaussian E, clamped at zero.

    Without ``height``/``width`` the result is a single row of pixels.
    """
    M, A = as_array(M), as_array(A)
    _check_product_shapes(None, M, A)
    if noise_sigma < 0:
        raise ParameterError("noise_sigma must be >= 0")
    Y = M @ A
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        Y = np.maximum(Y + rng.normal(0.0, noise_sigma, size=Y.shape), 0.0)
    return HyperspectralImage.from_array(Y, height, width)


def _check_regularizers(lam, alpha):
    if lam < 0 or alpha < 0:
        raise ParameterError(f"lambda and alpha must be >= 0 (got {lam}, {alpha})")


def objective(Y, M, A, graph: "NeighborGraph | None" = None,
              lam: float = 0.0, alpha: float = 0.0) -> Objective:
    """0.5*||Y - MA||_F^2 + (lam/2) Tr(A L A^T) + alpha*||A||_1."""
    from .graph import laplacian_quadratic

    Y, M, A = as_array(Y), as_array(M), as_array(A)
    _check_product_shapes(Y, M, A)
    _check_regularizers(lam, alpha)
    fit = 0.5 * float(np.sum((Y - M @ A) ** 2))
    graph_term = 0.0
    if lam > 0 and graph is not None:
        graph_term = 0.5 * lam * laplacian_quadratic(A, graph)
    lasso = alpha * float(np.sum(np.abs(A)))
    return Objective.from_parts(fit, graph_term, lasso)


def smooth_gradients(Y, M, A, graph: "NeighborGraph | None" = None,
                     lam: float = 0.0):
    """Gradients of the fit and graph parts with respect to M and A.

    The lasso term is left out: for A > 0 its gradient is the constant
    ``alpha``, which callers add themselves.
    """
    from .graph import apply_weights

    Y, M, A = as_array(Y), as_array(M), as_array(A)
    _check_product_shapes(Y, M, A)
    _check_regularizers(lam, 0.0)
    R = M @ A - Y
    grad_m = R @ A.T
    grad_a = M.T @ R
    if lam > 0 and graph is not None:
        if graph.n != A.shape[1]:
            raise ShapeError("graph node count differs from pixel count")
        grad_a = grad_a + lam * (A * graph.degrees - apply_weights(A, graph))
    return grad_m, grad_a


def warn_if_overcomplete(L: int, N: int, K: int):
    if K > min(L, N):
        warnings.warn(f"K={K} exceeds min(L, N)={min(L, N)}", stacklevel=3)
