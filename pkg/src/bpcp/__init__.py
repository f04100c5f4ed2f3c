"""Robust low-rank recovery by bounded principal component pursuit."""

from .linalg_core import SvdFactors, as_matrix, hadamard, norm_fro, norm_inf, norm_l1, norm_nuclear, norm_op, svd
from .solver import SolveResult, SolverConfig, default_lambda, default_nu, soft_threshold, solve_bpcp, svt

__all__ = [
    "SolveResult",
    "SolverConfig",
    "SvdFactors",
    "as_matrix",
    "default_lambda",
    "default_nu",
    "hadamard",
    "norm_fro",
    "norm_inf",
    "norm_l1",
    "norm_nuclear",
    "norm_op",
    "soft_threshold",
    "solve_bpcp",
    "svd",
    "svt",
]
