"""Spatial-spectral neighbor graph over image pixels.

Each pixel is linked to the most spectrally similar pixels inside its
m x m window. The weight matrix W is stored sparse; the Laplacian
L = D - W is never formed explicitly.
"""

from __future__ import annotations

import enum
import logging
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .core import HyperspectralImage, as_array
from .errors import DegenerateInputError, ParameterError, ShapeError

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 7
DEFAULT_KEEP_FRACTION = 0.30


class WeightMode(str, enum.Enum):
    COSINE = "cosine"
    RAW_SAD = "raw_sad"

    @classmethod
    def parse(cls, value) -> "WeightMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).replace("-", "_").lower())


# Raw angles keep the graph term on the scale of the fit term; cosine
# weights are ~1 for every kept pair and swamp it (see README).
DEFAULT_MODE = WeightMode.RAW_SAD


def sad(x, y) -> float:
    """Spectral angle between two vectors, in radians."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"spectra have lengths {x.size} and {y.size}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise DegenerateInputError("spectral angle undefined for a zero vector")
    return float(np.arccos(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0)))


def unit_columns(X: np.ndarray):
    """Columns of X scaled to unit l2 norm; zero columns stay zero."""
    norms = np.linalg.norm(X, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return X / safe, norms > 0


@dataclass(frozen=True)
class NeighborGraph:
    n: int
    weights: sp.csr_matrix
    degrees: np.ndarray
    window: int = DEFAULT_WINDOW
    keep_fraction: float = DEFAULT_KEEP_FRACTION
    mode: WeightMode = DEFAULT_MODE
    build_seconds: float = 0.0

    def __post_init__(self):
        if self.weights.shape != (self.n, self.n):
            raise ShapeError("weight matrix must be n x n")
        self.degrees.flags.writeable = False

    @classmethod
    def empty(cls, n: int) -> "NeighborGraph":
        return cls(n, sp.csr_matrix((n, n)), np.zeros(n))

    @classmethod
    def from_weights(cls, W, **meta) -> "NeighborGraph":
        """Wrap a symmetric nonnegative weight matrix (dense or sparse)."""
        W = sp.csr_matrix(W, dtype=np.float64)
        W = (W - sp.diags(W.diagonal())).tocsr()
        W.eliminate_zeros()
        if (W != W.T).nnz:
            raise ParameterError("weight matrix is not symmetric")
        if W.nnz and W.data.min() < 0:
            raise ParameterError("weights must be >= 0")
        degrees = np.asarray(W.sum(axis=1)).ravel()
        return cls(W.shape[0], W, degrees, **meta)

    @property
    def edge_count(self) -> int:
        return sp.triu(self.weights, k=1).nnz


def _window_offsets(m: int):
    r = m // 2
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            if (dy, dx) != (0, 0)]


def build_neighbor_graph(image: HyperspectralImage, window: int = DEFAULT_WINDOW,
                         keep_fraction: float = DEFAULT_KEEP_FRACTION,
                         mode=DEFAULT_MODE) -> NeighborGraph:
    """Link every pixel to its most similar neighbors inside a local window.

    For pixel i the candidates are the other pixels of the window centred
    on i, truncated at the image border. The ceil(q * #candidates) with
    the smallest spectral angle are kept (ties go to the lower pixel
    index). An edge exists if either endpoint kept the other.
    """
    t0 = time.perf_counter()
    mode = WeightMode.parse(mode)
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be an odd integer >= 3, got {window}")
    if not 0 < keep_fraction <= 1:
        raise ParameterError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    h, w, n = image.height, image.width, image.n_pixels
    if n == 0 or image.bands == 0:
        raise DegenerateInputError("empty image")

    U, valid = unit_columns(image.data)
    if not valid.all():
        warnings.warn(f"{int((~valid).sum())} zero-norm pixels get no edges",
                      stacklevel=2)

    offsets = _window_offsets(window)
    angle = np.full((n, len(offsets)), np.inf)
    cosine = np.zeros((n, len(offsets)))
    nbr = np.full((n, len(offsets)), -1, dtype=np.int64)
    index = np.arange(n).reshape(h, w)
    for o, (dy, dx) in enumerate(offsets):
        rows = slice(max(0, -dy), min(h, h - dy))
        cols = slice(max(0, -dx), min(w, w - dx))
        src = index[rows, cols].ravel()
        if src.size == 0:
            continue
        dst = index[rows.start + dy:rows.stop + dy, cols.start + dx:cols.stop + dx].ravel()
        ok = valid[src] & valid[dst]
        src, dst = src[ok], dst[ok]
        cos = np.clip(np.einsum("ij,ij->j", U[:, src], U[:, dst]), -1.0, 1.0)
        angle[src, o] = np.arccos(cos)
        cosine[src, o] = cos
        nbr[src, o] = dst

    n_cand = (nbr >= 0).sum(axis=1)
    # round() guards ceil against 0.3 * 10 = 3.0000000000000004
    n_keep = np.ceil(np.round(keep_fraction * n_cand, 9)).astype(np.int64)
    order = np.lexsort((nbr, angle), axis=-1)
    angle = np.take_along_axis(angle, order, axis=1)
    cosine = np.take_along_axis(cosine, order, axis=1)
    nbr = np.take_along_axis(nbr, order, axis=1)
    kept = np.arange(len(offsets))[None, :] < n_keep[:, None]

    i = np.broadcast_to(np.arange(n)[:, None], kept.shape)[kept]
    j = nbr[kept]
    vals = cosine[kept] if mode is WeightMode.COSINE else angle[kept]
    # raw_sad between identical pixels gives weight 0; such pairs are dropped.
    directed = sp.coo_matrix((vals, (i, j)), shape=(n, n)).tocsr()
    W = directed.maximum(directed.T).tocsr()
    W.eliminate_zeros()
    degrees = np.asarray(W.sum(axis=1)).ravel()
    elapsed = time.perf_counter() - t0
    log.debug("graph: %d nodes, %d edges, %.3fs", n, W.nnz // 2, elapsed)
    return NeighborGraph(n, W, degrees, window, keep_fraction, mode, elapsed)


def laplacian_quadratic(A, g: NeighborGraph) -> float:
    """Tr(A D A^T) - Tr(A W A^T) = Tr(A L A^T)."""
    A = as_array(A)
    if A.shape[1] != g.n:
        raise ShapeError(f"A has {A.shape[1]} columns, graph has {g.n} nodes")
    dterm = float(np.dot(g.degrees, np.einsum("kn,kn->n", A, A)))
    wterm = float(np.sum(A * apply_weights(A, g)))
    return dterm - wterm


def apply_weights(A, g: NeighborGraph) -> np.ndarray:
    """A @ W with sparse W; column j is sum_i W_ij a_i."""
    A = as_array(A)
    if A.shape[1] != g.n:
        raise ShapeError(f"A has {A.shape[1]} columns, graph has {g.n} nodes")
    return np.asarray((g.weights.T @ A.T).T)


def save_edge_list(g: NeighborGraph, path):
    """Write ``n m q mode`` then one ``i j w`` line per edge with i < j."""
    upper = sp.triu(g.weights, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    lines = [f"{g.n} {g.window} {g.keep_fraction!r} {g.mode.value}"]
    lines += [f"{upper.row[t]} {upper.col[t]} {upper.data[t]:.17g}" for t in order]
    Path(path).write_text("\n".join(lines) + "\n")


def load_edge_list(path) -> NeighborGraph:
    lines = Path(path).read_text().splitlines()
    try:
        n, m, q, mode = lines[0].split()
        n, m, q = int(n), int(m), float(q)
        mode = WeightMode.parse(mode)
    except (IndexError, ValueError) as exc:
        raise ParameterError(f"bad edge-list header in {path}") from exc
    if len(lines) > 1:
        rows = np.loadtxt(lines[1:], ndmin=2)
        i, j, wgt = rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64), rows[:, 2]
    else:
        i = j = np.zeros(0, dtype=np.int64)
        wgt = np.zeros(0)
    if np.any(i >= j) or (i.size and (i.min() < 0 or j.max() >= n)):
        raise ParameterError("edge list must hold 0 <= i < j < n")
    upper = sp.coo_matrix((wgt, (i, j)), shape=(n, n))
    W = (upper + upper.T).tocsr()
    degrees = np.asarray(W.sum(axis=1)).ravel()
    return NeighborGraph(n, W, degrees, m, q, mode)
