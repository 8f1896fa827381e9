"""Ensemble KDE estimation of mutual information for tree-structured graphical models."""

from .data import Dataset, RngStream, derive_seed, load_csv, save_csv, studentize
from .errors import MistError, NumericalError, ValidationError
from .functionals import SHANNON, Functional, g_eval, null_value, renyi
from .kde import BOXCAR, DEFAULT_FLOOR, DensityEngine, DensityFloor, KernelSpec, kde_loo, ratio_eval
from .structure import (FactorTree, MIMatrix, RatioDecomposition, chow_liu, pairwise_decomposition,
                        parse_tree, ratio_decomposition)
from .ensemble import (BasisFunction, EnsembleConfig, EstimatorVariant, WeightVector,
                       bandwidth_schedule, basis_functions, ensemble_estimate, make_config,
                       plugin_estimate, solve_weights)
from .inference import (EdgeTestReport, EstimateResult, bh_fdr, bootstrap, bootstrap_stats,
                        estimate_with_confidence, model_fit_test, p_value, pairwise_edge_test)
from .synthetic import (ChainSpec, CycleSpec, OracleDensity, gen_chain, gen_cycle, oracle_mi)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "RngStream",
    "derive_seed",
    "load_csv",
    "save_csv",
    "studentize",
    "MistError",
    "NumericalError",
    "ValidationError",
    "SHANNON",
    "Functional",
    "g_eval",
    "null_value",
    "renyi",
    "BOXCAR",
    "DEFAULT_FLOOR",
    "DensityEngine",
    "DensityFloor",
    "KernelSpec",
    "kde_loo",
    "ratio_eval",
    "FactorTree",
    "MIMatrix",
    "RatioDecomposition",
    "chow_liu",
    "pairwise_decomposition",
    "parse_tree",
    "ratio_decomposition",
    "BasisFunction",
    "EnsembleConfig",
    "EstimatorVariant",
    "WeightVector",
    "bandwidth_schedule",
    "basis_functions",
    "ensemble_estimate",
    "make_config",
    "plugin_estimate",
    "solve_weights",
    "EdgeTestReport",
    "EstimateResult",
    "bh_fdr",
    "bootstrap",
    "bootstrap_stats",
    "estimate_with_confidence",
    "model_fit_test",
    "p_value",
    "pairwise_edge_test",
    "ChainSpec",
    "CycleSpec",
    "OracleDensity",
    "gen_chain",
    "gen_cycle",
    "oracle_mi",
]
