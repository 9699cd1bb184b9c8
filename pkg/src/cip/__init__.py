"""Corpus-level constrained inference for graph-based dependency parsing."""

from .config import InferenceConfig
from .constraints import (
    ArcClass,
    Constraint,
    Direction,
    classify_arc,
    coverage,
    expected_ratio,
    is_satisfied,
    load_constraints,
    phi,
    ratio,
    ratio_gap,
    save_constraints,
)
from .core import (
    ArcDistribution,
    Corpus,
    FormatError,
    ParseTree,
    ScoreMatrix,
    Sentence,
    pair_corpus,
    read_conllu,
    read_scores,
    to_distribution,
    uas,
    write_conllu,
    write_scores,
)
from .decoder import (
    InfeasibleError,
    brute_force_constrained,
    brute_force_decode,
    decode_corpus,
    is_projective,
    mst_decode,
    projective_decode,
)
from .lagrangian import DualState, LrParams, augment_scores, lr_infer
from .posterior import (
    FeatureIndex,
    PrParams,
    build_feature_index,
    grad_log_partition,
    log_partition,
    posterior_arc_probs,
    pr_infer,
    solve_dual,
)
from .synthetic import SyntheticSpec, generate_synthetic
from .typology import (
    Orientation,
    TypologyTable,
    compile_binary,
    estimate_ratio,
    fit_unary_ratio,
)

__version__ = "0.1.0"

__all__ = [
    "ArcClass",
    "ArcDistribution",
    "Constraint",
    "Corpus",
    "Direction",
    "DualState",
    "FeatureIndex",
    "FormatError",
    "InfeasibleError",
    "InferenceConfig",
    "LrParams",
    "Orientation",
    "ParseTree",
    "PrParams",
    "ScoreMatrix",
    "Sentence",
    "SyntheticSpec",
    "TypologyTable",
    "augment_scores",
    "brute_force_constrained",
    "brute_force_decode",
    "build_feature_index",
    "classify_arc",
    "compile_binary",
    "coverage",
    "decode_corpus",
    "estimate_ratio",
    "expected_ratio",
    "fit_unary_ratio",
    "generate_synthetic",
    "grad_log_partition",
    "is_projective",
    "is_satisfied",
    "load_constraints",
    "log_partition",
    "lr_infer",
    "mst_decode",
    "pair_corpus",
    "phi",
    "posterior_arc_probs",
    "pr_infer",
    "projective_decode",
    "ratio",
    "ratio_gap",
    "read_conllu",
    "read_scores",
    "save_constraints",
    "solve_dual",
    "to_distribution",
    "uas",
    "write_conllu",
    "write_scores",
]
