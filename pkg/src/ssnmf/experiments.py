"""Repeated-trial protocols behind the command-line tools.

Trial t of a run with base seed s uses seed s + t for both the noise
draw and the solver, so any single trial can be re-run in isolation and
results do not depend on how trials are spread over workers.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import GroundTruth, HyperspectralImage
from .data import NOISE_LADDER_DB, add_gaussian_noise
from .evaluation import evaluate
from .graph import (DEFAULT_KEEP_FRACTION, DEFAULT_MODE, DEFAULT_WINDOW,
                    build_neighbor_graph)
from .params import estimate_alpha0, estimate_lambda0
from .solver import SolverConfig, run

VARIANTS = ("nmf", "ssnmf")
PARAM_EXPONENTS = tuple(range(-4, 5))
PARAM_SWEEP_TRIALS = 10


@dataclass(frozen=True)
class TrialSettings:
    k: int
    tau: float = 1e-5
    max_iter: int = 500
    window: int = DEFAULT_WINDOW
    keep_fraction: float = DEFAULT_KEEP_FRACTION
    mode: str = DEFAULT_MODE.value
    lam: Optional[float] = None
    alpha: Optional[float] = None


def estimate_params(image: HyperspectralImage, seed: int, mode) -> Dict[str, float]:
    return {"alpha0": estimate_alpha0(image),
            "lambda0": estimate_lambda0(image, seed=seed, mode=mode)}


def solve_variant(image: HyperspectralImage, variant: str, settings: TrialSettings,
                  seed: int):
    """Run one solver variant; returns (result, lam, alpha)."""
    if variant == "nmf":
        lam = alpha = 0.0
    elif variant == "ssnmf":
        est = None
        if settings.lam is None or settings.alpha is None:
            est = estimate_params(image, seed, settings.mode)
        lam = settings.lam if settings.lam is not None else est["lambda0"]
        alpha = settings.alpha if settings.alpha is not None else est["alpha0"]
    else:
        raise ValueError(f"unknown variant {variant!r}")
    graph = None
    if lam > 0:
        graph = build_neighbor_graph(image, settings.window, settings.keep_fraction,
                                     settings.mode)
    config = SolverConfig(settings.k, lam, alpha, settings.tau, settings.max_iter, seed)
    result = run(image, graph, config)
    return result, lam, alpha


def run_trial(image: HyperspectralImage, truth: GroundTruth, variant: str,
              snr_db: float, trial: int, base_seed: int,
              settings: TrialSettings) -> dict:
    seed = base_seed + trial
    noisy = add_gaussian_noise(image, snr_db, seed=seed)
    result, lam, alpha = solve_variant(noisy, variant, settings, seed)
    report = evaluate(result, truth)
    return {
        "variant": variant, "snr_db": snr_db, "trial": trial, "seed": seed,
        "lambda": lam, "alpha": alpha, "iterations": result.iterations,
        "converged": int(result.converged),
        "mean_sad": report.mean_sad, "mean_rmse": report.mean_rmse,
        **{f"sad_{i + 1}": v for i, v in enumerate(report.sad_per_endmember)},
        **{f"rmse_{i + 1}": v for i, v in enumerate(report.rmse_per_map)},
    }


def _run_task(args):
    return run_trial(*args)


def _map(tasks, workers: int):
    if workers <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks))


def summarize(rows: List[dict], keys=("variant", "snr_db")) -> List[dict]:
    """Mean and population std of SAD/RMSE per group, in first-seen order."""
    groups: Dict[tuple, List[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, members in groups.items():
        sads = np.array([m["mean_sad"] for m in members])
        rmses = np.array([m["mean_rmse"] for m in members])
        out.append({**dict(zip(keys, key)), "trials": len(members),
                    "sad_mean": float(sads.mean()), "sad_std": float(sads.std()),
                    "rmse_mean": float(rmses.mean()), "rmse_std": float(rmses.std())})
    return out


def sweep(image, truth, settings: TrialSettings,
          snr_levels: Sequence[float] = NOISE_LADDER_DB, trials: int = 1,
          seed: int = 0, variants: Sequence[str] = VARIANTS, workers: int = 1):
    """Every (noise level, trial, variant) combination; returns (log, summary)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tasks = [(image, truth, v, snr, t, seed, settings)
             for snr in snr_levels for t in range(trials) for v in variants]
    rows = _map(tasks, workers)
    return rows, summarize(rows)


def param_sweep(image, truth, settings: TrialSettings, lam_hat: float,
                alpha_hat: float, trials: int = PARAM_SWEEP_TRIALS, seed: int = 0,
                snr_db: float = math.inf, exponents=PARAM_EXPONENTS, workers: int = 1):
    """Scale (lambda, alpha) together by 2^e for each exponent e."""
    tasks = []
    for e in exponents:
        s = replace(settings, lam=lam_hat * 2.0 ** e, alpha=alpha_hat * 2.0 ** e)
        tasks += [(image, truth, "ssnmf", snr_db, t, seed, s) for t in range(trials)]
    rows = _map(tasks, workers)
    labels = [e for e in exponents for _ in range(trials)]
    for row, e in zip(rows, labels):
        row["exponent"] = e
    return rows, summarize(rows, keys=("exponent", "lambda", "alpha"))


def convergence(image: HyperspectralImage, settings: TrialSettings, seed: int = 0,
                variants: Sequence[str] = VARIANTS):
    """Objective traces and graph/iteration timings for each variant."""
    traces, timing = {}, []
    for v in variants:
        t0 = time.perf_counter()
        result, lam, alpha = solve_variant(image, v, settings, seed)
        t_graph = result.wall_times["graph_build"] if lam > 0 else 0.0
        t_iter = result.wall_times["iterate"]
        traces[v] = result
        timing.append({"variant": v, "t_construct_graph": t_graph,
                       "t_iteration": t_iter, "t_convergence": t_graph + t_iter,
                       "iterations": result.iterations,
                       "converged": int(result.converged),
                       "lambda": lam, "alpha": alpha,
                       "t_wall": time.perf_counter() - t0})
    return traces, timing


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def write_csv(path, rows: List[dict], fields: Optional[Sequence[str]] = None):
    rows = list(rows)
    if fields is None:
        fields = list(rows[0]) if rows else []
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for r in rows:
            writer.writerow([_fmt(r.get(f, "")) for f in fields])


def write_trace(path, result):
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "total", "fit", "graph", "lasso"])
        for row in result.trace_rows():
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
