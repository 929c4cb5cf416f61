"""Threshold-sparse softmax attention with classical and simulated-quantum support search."""

from .brute import brute_force_support, brute_row_search, row_score_oracle
from .container import load, save
from .grover import (GroverConfig, build_support_grover, find_all_marked, grover_row_search,
                     grover_success_prob, validate_rotation_model)
from .hsr import HsrTree, build_support_hsr, hsr_init, hsr_insert, hsr_query, hsr_remove
from .instances import GenerationError, Instance, InstanceSpec, generate
from .ledger import QueryCostLedger
from .linalg import (GoodnessReport, ShapeError, SparseCorrection, SupportSets, check_goodness,
                     entrywise_inf_norm_diff, matmul)
from .reference import DENSE_GUARD, AttentionOutput, RangeError, exact_attention
from .sparse import (Check, ErrorReport, GoodnessError, SparseB, build_B, certify, error_report,
                     sparse_attention)

__version__ = "0.1.0"

__all__ = [
    "brute_force_support",
    "brute_row_search",
    "row_score_oracle",
    "load",
    "save",
    "GroverConfig",
    "build_support_grover",
    "find_all_marked",
    "grover_row_search",
    "grover_success_prob",
    "validate_rotation_model",
    "HsrTree",
    "build_support_hsr",
    "hsr_init",
    "hsr_insert",
    "hsr_query",
    "hsr_remove",
    "GenerationError",
    "Instance",
    "InstanceSpec",
    "generate",
    "QueryCostLedger",
    "GoodnessReport",
    "ShapeError",
    "SparseCorrection",
    "SupportSets",
    "check_goodness",
    "entrywise_inf_norm_diff",
    "matmul",
    "DENSE_GUARD",
    "AttentionOutput",
    "RangeError",
    "exact_attention",
    "Check",
    "ErrorReport",
    "GoodnessError",
    "SparseB",
    "build_B",
    "certify",
    "error_report",
    "sparse_attention",
]
