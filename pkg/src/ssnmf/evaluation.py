"""Endmember SAD / abundance RMSE against a ground truth."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import GroundTruth, as_array
from .errors import ShapeError
from .graph import sad

sad_metric = sad


def rmse(z, z_hat) -> float:
    z = np.asarray(z, dtype=np.float64).ravel()
    z_hat = np.asarray(z_hat, dtype=np.float64).ravel()
    if z.shape != z_hat.shape:
        raise ShapeError(f"maps have lengths {z.size} and {z_hat.size}")
    return float(np.sqrt(np.mean((z - z_hat) ** 2)))


def sad_matrix(truth, est) -> np.ndarray:
    """cost[i, j] = SAD(truth column i, estimated column j).

    A zero column has no direction; its angle to anything is pi/2.
    """
    T, E = as_array(truth), as_array(est)
    nt, ne = np.linalg.norm(T, axis=0), np.linalg.norm(E, axis=0)
    denom = np.outer(nt, ne)
    cos = np.divide(T.T @ E, denom, out=np.zeros_like(denom), where=denom > 0)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def match_endmembers(truth, est) -> Tuple[int, ...]:
    """Minimum total-SAD bijection; entry j is the truth index of estimate j."""
    T, E = as_array(truth), as_array(est)
    if T.shape != E.shape:
        raise ShapeError(f"truth is {T.shape}, estimate is {E.shape}")
    rows, cols = linear_sum_assignment(sad_matrix(T, E))
    assignment = np.empty(T.shape[1], dtype=int)
    assignment[cols] = rows
    return tuple(int(a) for a in assignment)


@dataclass(frozen=True)
class EvalReport:
    assignment: Tuple[int, ...]
    sad_per_endmember: np.ndarray
    rmse_per_map: np.ndarray
    mean_sad: float
    mean_rmse: float

    def to_csv(self, sad_scale: float = 1.0) -> str:
        """Rows per ground-truth endmember then a ``mean`` row.

        ``sad_scale=100`` gives the (x10^2) table convention.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["endmember", "sad_rad" if sad_scale == 1 else "sad_x%g" % sad_scale,
                         "rmse"])
        for k, (s, r) in enumerate(zip(self.sad_per_endmember, self.rmse_per_map)):
            writer.writerow([k + 1, repr(float(s * sad_scale)), repr(float(r))])
        writer.writerow(["mean", repr(float(self.mean_sad * sad_scale)),
                         repr(float(self.mean_rmse))])
        return buf.getvalue()


def evaluate(result, truth: GroundTruth) -> EvalReport:
    """Match estimated endmembers to the truth and score both factors.

    ``result`` is anything with ``endmembers`` and ``abundances``.
    Per-item values are listed in ground-truth order.
    """
    M_true, A_true = as_array(truth.endmembers), as_array(truth.abundances)
    M_est, A_est = as_array(result.endmembers), as_array(result.abundances)
    if M_est.shape != M_true.shape or A_est.shape != A_true.shape:
        raise ShapeError("result and ground truth shapes differ")
    assignment = match_endmembers(M_true, M_est)
    order = np.argsort(assignment)  # order[i] = estimate matched to truth i
    cost = sad_matrix(M_true, M_est)
    sads = cost[np.arange(len(order)), order]
    rmses = np.array([rmse(A_true[i], A_est[j]) for i, j in enumerate(order)])
    return EvalReport(assignment, sads, rmses, float(sads.mean()), float(rmses.mean()))
