"""Fractional polynomial model building with influential-point diagnostics."""

from .data import Dataset, VariableMeta, load_dataset, load_schema, prepare
from .fp import FPSpec, PowerTuple, best_fp, fp_basis
from .fsp import FSPResult, run_fsp
from .influence import ipx_multivariable, ipx_univariable, loo_scan, pair_scan
from .linreg import FitResult, fit_ols
from .mfp import MFPModel, compare_models, fit_mfp, fixed_model, r2_reduction

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FPSpec",
    "FSPResult",
    "FitResult",
    "MFPModel",
    "PowerTuple",
    "VariableMeta",
    "best_fp",
    "compare_models",
    "fit_mfp",
    "fit_ols",
    "fixed_model",
    "fp_basis",
    "ipx_multivariable",
    "ipx_univariable",
    "load_dataset",
    "load_schema",
    "loo_scan",
    "pair_scan",
    "prepare",
    "r2_reduction",
    "run_fsp",
]
