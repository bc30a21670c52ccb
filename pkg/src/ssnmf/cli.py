"""ssnmf command-line tool.

    ssnmf synth --out scene/
    ssnmf unmix scene/cube.hscube --k 4 --truth scene/ --out run/
    ssnmf sweep --trials 5 --snr inf --snr 20 --out sweep/
    ssnmf param-sweep --out params/
    ssnmf convergence --out conv/
    ssnmf graph-export scene/cube.hscube --out edges.txt

Every command writes ``manifest.json`` next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import GroundTruth
from .data import (NOISE_LADDER_DB, SceneSpec, abundance_cube, load_cube,
                   load_endmembers_csv, save_cube, save_endmembers_csv,
                   synthesize_scene)
from .errors import CubeFormatError, DegenerateInputError, ParameterError, ShapeError
from .evaluation import evaluate
from .experiments import (PARAM_EXPONENTS, PARAM_SWEEP_TRIALS, VARIANTS,
                          TrialSettings, convergence, estimate_params,
                          param_sweep, sweep, write_csv, write_trace)
from .graph import (DEFAULT_KEEP_FRACTION, DEFAULT_MODE, DEFAULT_WINDOW,
                    build_neighbor_graph, save_edge_list)
from .raster import render_grayscale, render_pseudocolor
from .solver import SolverConfig, run

log = logging.getLogger("ssnmf")

CUBE = "cube.hscube"
TRUTH_ENDMEMBERS = "truth_endmembers.csv"
TRUTH_ABUNDANCES = "truth_abundances.hscube"


def _snr(text: str) -> float:
    v = float(text)
    if not (v > 0):
        raise argparse.ArgumentTypeError(f"SNR must be > 0 or inf, got {text}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return v


def _add_solver_flags(p, k_required=True):
    p.add_argument("--k", type=int, required=k_required, default=None if k_required else 4,
                   help="number of endmembers")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="graph weight (estimated when omitted)")
    p.add_argument("--alpha", type=float, default=None,
                   help="lasso weight (estimated when omitted)")
    p.add_argument("--tau", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--keep-frac", type=float, default=DEFAULT_KEEP_FRACTION)
    p.add_argument("--weight-mode", choices=["cosine", "raw-sad"],
                   default=DEFAULT_MODE.value.replace("_", "-"))


def _add_scene_flags(p):
    g = p.add_argument_group("input (synthetic scene unless --cube is given)")
    g.add_argument("--cube", type=Path, help="cube file to use instead of a scene")
    g.add_argument("--truth", type=Path, help="directory holding ground-truth files")
    g.add_argument("--height", type=int, default=32)
    g.add_argument("--width", type=int, default=32)
    g.add_argument("--bands", type=int, default=40)
    g.add_argument("--blobs", type=int, default=3)
    g.add_argument("--mixing-sparsity", type=int, default=2)
    g.add_argument("--smoothness", type=float, default=1.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssnmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("synth", help="write a synthetic scene and its ground truth")
    _add_scene_flags(p)
    p.add_argument("--k", type=int, default=4)
    common(p)

    p = sub.add_parser("unmix", help="unmix one cube")
    p.add_argument("cube_path", type=Path)
    _add_solver_flags(p)
    p.add_argument("--no-graph", action="store_true", help="force lambda = 0")
    p.add_argument("--truth", type=Path, help="ground-truth directory to evaluate against")
    common(p)

    p = sub.add_parser("sweep", help="noise-robustness table over SNR levels")
    _add_scene_flags(p)
    _add_solver_flags(p, k_required=False)
    p.add_argument("--trials", type=_positive_int, default=1)
    p.add_argument("--snr", type=_snr, action="append",
                   help="SNR in dB, repeatable (default: inf 30 25 20 15 10 8)")
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--sad-x100", action="store_true", help="report SAD x 10^2")
    common(p)

    p = sub.add_parser("param-sweep", help="performance vs 2^e scaled (lambda, alpha)")
    _add_scene_flags(p)
    _add_solver_flags(p, k_required=False)
    p.add_argument("--trials", type=_positive_int, default=PARAM_SWEEP_TRIALS)
    p.add_argument("--snr", type=_snr, action="append")
    p.add_argument("--workers", type=_positive_int, default=1)
    common(p)

    p = sub.add_parser("convergence", help="objective traces and timing per variant")
    _add_scene_flags(p)
    _add_solver_flags(p, k_required=False)
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    common(p)

    p = sub.add_parser("graph-export", help="write the neighbor graph as an edge list")
    p.add_argument("cube_path", type=Path)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--keep-frac", type=float, default=DEFAULT_KEEP_FRACTION)
    p.add_argument("--weight-mode", choices=["cosine", "raw-sad"],
                   default=DEFAULT_MODE.value.replace("_", "-"))
    p.add_argument("--out", type=Path, required=True)
    return parser


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(out: Path, args, **extra):
    manifest = {
        "command": args.command,
        "arguments": _jsonable(vars(args)),
        "versions": {"ssnmf": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        **_jsonable(extra),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_truth(directory: Path, height: int, width: int) -> GroundTruth:
    from .core import AbundanceMatrix

    M = load_endmembers_csv(directory / TRUTH_ENDMEMBERS)
    A = load_cube(directory / TRUTH_ABUNDANCES)
    if (A.height, A.width) != (height, width):
        raise ShapeError("truth abundance grid differs from the cube")
    return GroundTruth(M, AbundanceMatrix(A.data))


def _scene_spec(args) -> SceneSpec:
    return SceneSpec(args.height, args.width, args.k, args.bands, args.seed,
                     args.blobs, args.mixing_sparsity, args.smoothness)


def _input(args):
    """(image, truth) from --cube/--truth or a synthetic scene."""
    if args.cube is not None:
        image = load_cube(args.cube)
        if args.truth is None:
            raise ParameterError("--cube needs --truth for evaluation")
        truth = load_truth(args.truth, image.height, image.width)
        truth.check_against(image)
        return image, truth, None
    spec = _scene_spec(args)
    image, truth = synthesize_scene(spec)
    return image, truth, asdict(spec)


def _settings(args, **over) -> TrialSettings:
    fields = dict(k=args.k, tau=args.tau, max_iter=args.max_iter, window=args.window,
                  keep_fraction=args.keep_frac,
                  mode=args.weight_mode.replace("-", "_"), lam=args.lam, alpha=args.alpha)
    fields.update(over)
    return TrialSettings(**fields)


def cmd_synth(args):
    spec = _scene_spec(args)
    image, truth = synthesize_scene(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    save_cube(image, args.out / CUBE)
    save_endmembers_csv(truth.endmembers, args.out / TRUTH_ENDMEMBERS)
    save_cube(abundance_cube(truth.abundances, image.height, image.width),
              args.out / TRUTH_ABUNDANCES)
    write_manifest(args.out, args, scene=asdict(spec))


def cmd_unmix(args):
    if args.k < 2:
        raise ParameterError("unmix needs --k >= 2")
    image = load_cube(args.cube_path)
    mode = args.weight_mode.replace("-", "_")
    estimated = {}
    lam, alpha = args.lam, args.alpha
    if args.no_graph:
        lam = 0.0
    if lam is None or alpha is None:
        estimated = estimate_params(image, args.seed, mode)
        lam = estimated["lambda0"] if lam is None else lam
        alpha = estimated["alpha0"] if alpha is None else alpha
    config = SolverConfig(args.k, lam, alpha, args.tau, args.max_iter, args.seed)
    graph = None
    if lam > 0:
        graph = build_neighbor_graph(image, args.window, args.keep_frac, mode)
    result = run(image, graph, config)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    save_endmembers_csv(result.endmembers, out / "endmembers.csv")
    save_cube(abundance_cube(result.abundances, image.height, image.width),
              out / "abundances.hscube")
    write_trace(out / "trace.csv", result)
    A = result.abundances.data
    if config.k <= 4:
        render_pseudocolor(A, image.height, image.width, out / "abundances.ppm")
    for k in range(config.k):
        render_grayscale(A[k], image.height, image.width, out / f"abundance_{k + 1}.pgm")
    report = None
    if args.truth is not None:
        truth = load_truth(args.truth, image.height, image.width)
        report = evaluate(result, truth)
        (out / "report.csv").write_text(report.to_csv())
    write_manifest(out, args, variant=config.variant, config=asdict(config),
                   estimated=estimated, iterations=result.iterations,
                   converged=result.converged, wall_times=result.wall_times,
                   mean_sad=None if report is None else report.mean_sad,
                   mean_rmse=None if report is None else report.mean_rmse)


def cmd_sweep(args):
    image, truth, scene = _input(args)
    levels = args.snr or list(NOISE_LADDER_DB)
    t0 = time.perf_counter()
    rows, summary = sweep(image, truth, _settings(args), levels, args.trials,
                          args.seed, args.variants, args.workers)
    if args.sad_x100:
        for r in summary:
            r["sad_mean"] *= 100
            r["sad_std"] *= 100
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(args.out / "trials.csv", rows)
    write_csv(args.out / "summary.csv", summary,
              ["variant", "snr_db", "trials", "sad_mean", "sad_std", "rmse_mean", "rmse_std"])
    write_manifest(args.out, args, scene=scene, snr_levels=levels,
                   wall_seconds=time.perf_counter() - t0)


def cmd_param_sweep(args):
    image, truth, scene = _input(args)
    lam_hat, alpha_hat = args.lam, args.alpha
    estimated = {}
    mode = args.weight_mode.replace("-", "_")
    if lam_hat is None or alpha_hat is None:
        estimated = estimate_params(image, args.seed, mode)
        lam_hat = estimated["lambda0"] if lam_hat is None else lam_hat
        alpha_hat = estimated["alpha0"] if alpha_hat is None else alpha_hat
    snr = args.snr[0] if args.snr else math.inf
    rows, summary = param_sweep(image, truth, _settings(args), lam_hat, alpha_hat,
                                args.trials, args.seed, snr, PARAM_EXPONENTS,
                                args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(args.out / "trials.csv", rows)
    write_csv(args.out / "param_sweep.csv", summary,
              ["exponent", "lambda", "alpha", "trials", "sad_mean", "sad_std",
               "rmse_mean", "rmse_std"])
    write_manifest(args.out, args, scene=scene, lambda_hat=lam_hat, alpha_hat=alpha_hat,
                   estimated=estimated, snr_db=snr)


def cmd_convergence(args):
    if args.cube is not None:
        image, scene = load_cube(args.cube), None
    else:
        image, _, scene = _input(args)
    traces, timing = convergence(image, _settings(args), args.seed, args.variants)
    args.out.mkdir(parents=True, exist_ok=True)
    for variant, result in traces.items():
        write_trace(args.out / f"trace_{variant}.csv", result)
    write_csv(args.out / "timing.csv", timing,
              ["variant", "t_construct_graph", "t_iteration", "t_convergence",
               "iterations", "converged"])
    write_manifest(args.out, args, scene=scene, timing=timing)


def cmd_graph_export(args):
    image = load_cube(args.cube_path)
    graph = build_neighbor_graph(image, args.window, args.keep_frac,
                                 args.weight_mode.replace("-", "_"))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_edge_list(graph, args.out)


COMMANDS = {
    "synth": cmd_synth,
    "unmix": cmd_unmix,
    "sweep": cmd_sweep,
    "param-sweep": cmd_param_sweep,
    "convergence": cmd_convergence,
    "graph-export": cmd_graph_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (OSError, CubeFormatError, ParameterError, ShapeError,
            DegenerateInputError, ValueError) as exc:
        print(f"ssnmf {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0
