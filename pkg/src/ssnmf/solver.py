"""Multiplicative-update solver for graph + lasso regularized NMF.

One iteration updates A, then M, then rescales M to unit-norm columns:

    A <- A * (M^T Y + lam A W) / (M^T M A + lam A D + alpha + eps)
    M <- M * (Y A^T) / (M A A^T + eps)

lam = alpha = 0 gives plain Lee-Seung NMF, lam = 0 gives l1-NMF and
alpha = 0 gives graph-regularized NMF.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (AbundanceMatrix, EndmemberMatrix, HyperspectralImage,
                   Objective, as_array, objective, warn_if_overcomplete)
from .errors import NumericalError, ParameterError, ShapeError
from .graph import (DEFAULT_KEEP_FRACTION, DEFAULT_MODE, DEFAULT_WINDOW,
                    NeighborGraph, apply_weights, build_neighbor_graph,
                    unit_columns)

log = logging.getLogger(__name__)

NORM_MODES = ("l2_columns", "l1_columns")
INIT_BATCH = 100


@dataclass(frozen=True)
class SolverConfig:
    k: int
    lam: float = 0.0
    alpha: float = 0.0
    tau: float = 1e-5
    max_iter: int = 500
    seed: int = 0
    epsilon: float = 1e-12
    norm_mode: str = "l2_columns"

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if self.lam < 0 or self.alpha < 0:
            raise ParameterError("lam and alpha must be >= 0")
        if self.tau <= 0:
            raise ParameterError("tau must be > 0")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be > 0")
        if self.norm_mode not in NORM_MODES:
            raise ParameterError(f"norm_mode must be one of {NORM_MODES}")

    @property
    def variant(self) -> str:
        """Name of the special case this configuration reduces to."""
        if self.lam == 0 and self.alpha == 0:
            return "nmf"
        if self.lam == 0:
            return "l1-nmf"
        if self.alpha == 0:
            return "graph-nmf"
        return "ssnmf"


@dataclass(frozen=True)
class UnmixingResult:
    endmembers: EndmemberMatrix
    abundances: AbundanceMatrix
    objective_trace: List[Objective]
    iterations: int
    converged: bool
    initial_objective: Objective
    wall_times: dict = field(default_factory=dict)

    def totals(self) -> np.ndarray:
        """Initial objective followed by the value after each iteration."""
        return np.array([self.initial_objective.total]
                        + [o.total for o in self.objective_trace])

    def trace_rows(self):
        rows = [(0, self.initial_objective)]
        rows += [(t + 1, o) for t, o in enumerate(self.objective_trace)]
        return [(t, o.total, o.fit, o.graph, o.lasso) for t, o in rows]


def init_endmembers(Y, k: int, seed=0, batch: int = INIT_BATCH) -> EndmemberMatrix:
    """Pick k mutually dissimilar pixels of Y as starting endmembers.

    The first pixel is uniform at random. Every later pick is the member
    of a random candidate batch whose smallest spectral angle to the
    pixels already chosen is largest.
    """
    Y = as_array(Y)
    n = Y.shape[1]
    if k < 1:
        raise ParameterError("k must be >= 1")
    if k > n:
        raise ParameterError(f"cannot pick k={k} endmembers from {n} pixels")
    U, valid = unit_columns(Y)
    pool = np.flatnonzero(valid)
    if pool.size < k:
        raise ParameterError(f"only {pool.size} nonzero pixels for k={k}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.choice(pool))]
    # cosine of the smallest angle to the chosen set, per pool pixel
    best_cos = U[:, pool].T @ U[:, chosen[0]]
    while len(chosen) < k:
        pick = rng.choice(pool.size, size=min(batch, pool.size), replace=False)
        pick = pick[np.argsort(pick)]
        winner = pick[np.argmin(best_cos[pick])]
        chosen.append(int(pool[winner]))
        best_cos = np.maximum(best_cos, U[:, pool].T @ U[:, chosen[-1]])
    return EndmemberMatrix(Y[:, chosen])


def init_abundances(k: int, n: int, seed=0) -> AbundanceMatrix:
    """Uniform(0, 1) entries with every column scaled to unit l1 norm."""
    if k < 1 or n < 1:
        raise ParameterError("k and n must be >= 1")
    rng = np.random.default_rng(seed)
    A = rng.uniform(size=(k, n))
    # uniform() can return exactly 0
    A = np.where(A > 0, A, np.finfo(float).tiny)
    return AbundanceMatrix(A / A.sum(axis=0))


def _mat(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def endmember_step(Y, M, A, epsilon=1e-12):
    """Array form of the M update."""
    return M * (Y @ A.T) / (M @ (A @ A.T) + epsilon)


def abundance_step(Y, M, A, graph, lam, alpha, epsilon=1e-12):
    """Array form of the A update."""
    num = M.T @ Y
    den = (M.T @ M) @ A + alpha + epsilon
    if lam > 0:
        num = num + lam * apply_weights(A, graph)
        den = den + lam * A * graph.degrees
    return A * num / den


def update_endmembers(Y, M, A, epsilon: float = 1e-12) -> EndmemberMatrix:
    Y, M, A = _mat(Y), _mat(M), _mat(A)
    _check(Y, M, A)
    return EndmemberMatrix(endmember_step(Y, M, A, epsilon))


def update_abundances(Y, M, A, graph: Optional[NeighborGraph] = None,
                      lam: float = 0.0, alpha: float = 0.0,
                      epsilon: float = 1e-12) -> AbundanceMatrix:
    Y, M, A = _mat(Y), _mat(M), _mat(A)
    _check(Y, M, A, graph, lam)
    if lam < 0 or alpha < 0:
        raise ParameterError("lam and alpha must be >= 0")
    return AbundanceMatrix(abundance_step(Y, M, A, graph, lam, alpha, epsilon))


def column_norms(M, norm_mode="l2_columns"):
    if norm_mode == "l2_columns":
        return np.sqrt(np.sum(M * M, axis=0))
    if norm_mode == "l1_columns":
        return np.sum(np.abs(M), axis=0)
    raise ParameterError(f"unknown norm_mode {norm_mode!r}")


def rescale_arrays(M, A, norm_mode="l2_columns"):
    norms = column_norms(M, norm_mode)
    dead = norms == 0
    if dead.any():
        warnings.warn(f"{int(dead.sum())} all-zero endmember column(s) left unscaled",
                      stacklevel=3)
        norms = np.where(dead, 1.0, norms)
    return M / norms, A * norms[:, None]


def rescale(M, A, norm_mode: str = "l2_columns"):
    """Fix the scaling ambiguity: unit-norm columns of M, A compensates."""
    M, A = _mat(M), _mat(A)
    if M.shape[1] != A.shape[0]:
        raise ShapeError("M and A disagree on K")
    M2, A2 = rescale_arrays(M, A, norm_mode)
    return EndmemberMatrix(M2), AbundanceMatrix(A2)


def _check(Y, M, A, graph=None, lam=0.0):
    if M.shape[1] != A.shape[0] or Y.shape != (M.shape[0], A.shape[1]):
        raise ShapeError(f"inconsistent shapes Y{Y.shape} M{M.shape} A{A.shape}")
    if lam > 0:
        if graph is None:
            raise ParameterError("lam > 0 needs a neighbor graph")
        if graph.n != A.shape[1]:
            raise ShapeError(f"graph has {graph.n} nodes, image has {A.shape[1]} pixels")


def _initial_factors(Y, k, seed):
    m_seed, a_seed = np.random.SeedSequence(seed).spawn(2)
    M = init_endmembers(Y, k, m_seed).data.copy()
    A = init_abundances(k, Y.shape[1], a_seed).data.copy()
    return M, A


def run(Y, graph: Optional[NeighborGraph], config: SolverConfig,
        M0=None, A0=None) -> UnmixingResult:
    """Alternate A and M updates until the relative objective change < tau.

    ``graph`` may be None when ``config.lam == 0``. ``M0``/``A0`` override
    the random initialization.
    """
    Y = as_array(Y)
    L, N = Y.shape
    k = config.k
    if graph is None:
        graph = NeighborGraph.empty(N)
    _check(Y, np.empty((L, k)), np.empty((k, N)), graph, config.lam)
    warn_if_overcomplete(L, N, k)

    M, A = _initial_factors(Y, k, config.seed)
    if M0 is not None:
        M = _mat(M0).copy()
    if A0 is not None:
        A = _mat(A0).copy()
    lam, alpha, eps = config.lam, config.alpha, config.epsilon

    def score(M, A):
        return objective(Y, M, A, graph, lam, alpha)

    t0 = time.perf_counter()
    previous = initial = score(M, A)
    trace = []
    converged = False
    for it in range(config.max_iter):
        A = abundance_step(Y, M, A, graph, lam, alpha, eps)
        M = endmember_step(Y, M, A, eps)
        M, A = rescale_arrays(M, A, config.norm_mode)
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(A))):
            raise NumericalError(f"non-finite factors at iteration {it + 1}")
        current = score(M, A)
        trace.append(current)
        if previous.total > 0:
            change = abs(previous.total - current.total) / previous.total
        else:
            change = 0.0
        previous = current
        if change < config.tau:
            converged = True
            break
    elapsed = time.perf_counter() - t0
    log.info("%s: %d iterations, objective %.6g, converged=%s",
             config.variant, len(trace), previous.total, converged)
    return UnmixingResult(
        EndmemberMatrix(M), AbundanceMatrix(A), trace, len(trace), converged,
        initial,
        {"graph_build": graph.build_seconds, "iterate": elapsed},
    )


def unmix(image: HyperspectralImage, config: SolverConfig,
          window: int = DEFAULT_WINDOW,
          keep_fraction: float = DEFAULT_KEEP_FRACTION,
          mode=DEFAULT_MODE) -> UnmixingResult:
    """Build the neighbor graph when it is needed, then ``run``."""
    graph = None
    if config.lam > 0:
        graph = build_neighbor_graph(image, window, keep_fraction, mode)
    return run(image, graph, config)
