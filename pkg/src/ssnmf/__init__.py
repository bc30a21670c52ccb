"""Structured sparse NMF for hyperspectral unmixing."""

from .core import (AbundanceMatrix, EndmemberMatrix, GroundTruth,
                   HyperspectralImage, Objective, lmm_synthesize, objective,
                   smooth_gradients)
from .errors import (CubeFormatError, DegenerateInputError, NumericalError,
                     ParameterError, ShapeError)
from .evaluation import EvalReport, evaluate, match_endmembers, rmse, sad_metric
from .graph import (NeighborGraph, WeightMode, apply_weights,
                    build_neighbor_graph, laplacian_quadratic, sad)
from .params import (ParamEstimate, estimate_alpha0, estimate_lambda0,
                     make_grids)
from .solver import (SolverConfig, UnmixingResult, init_abundances,
                     init_endmembers, rescale, run, unmix, update_abundances,
                     update_endmembers)

__version__ = "0.1.0"
