"""Differentiable probabilistic temporal-logic alignment.

Scores how well a probabilistic, clip-indexed fact database (a video's
spatio-temporal scene graph) satisfies a finite-trace LTL specification,
with gradients of the score in every fact probability, and trains linear
fact predictors from (video, specification) pairs.
"""
from .checker import (
    INTERVAL,
    SUFFIX,
    AlignmentResult,
    CheckConfig,
    align,
    align_interval,
    check_bool,
    violation,
    violation_score,
)
from .errors import EvaluationError, LaserError, ParseError
from .evaluation import eval_f1, eval_retrieval, mean_violation, retrieval_from_matrix
from .fact_db import FactDatabase, PredicateDecl, Schema
from .losses import LossConfig, alignment_loss, contrastive_loss, semantic_loss, temporal_loss
from .oracle import exact_align, fd_grad
from .predictor import AlignmentPredictor, PredictorParams, TrainConfig, train
from .provenance import ProofSet, TopKProofs, wmc
from .spec_lang import (
    Specification,
    build_action_chain_spec,
    build_pre_post_spec,
    negate,
    parse_spec,
    pretty_print,
    to_nnf,
)
from .synthgen import GenConfig, generate

__version__ = "0.1.0"

__all__ = [
    "INTERVAL", "SUFFIX", "AlignmentResult", "CheckConfig", "align", "align_interval",
    "check_bool", "violation", "violation_score", "EvaluationError", "LaserError",
    "ParseError", "eval_f1", "eval_retrieval", "mean_violation", "retrieval_from_matrix",
    "FactDatabase", "PredicateDecl", "Schema", "LossConfig", "alignment_loss",
    "contrastive_loss", "semantic_loss", "temporal_loss", "exact_align", "fd_grad",
    "AlignmentPredictor", "PredictorParams", "TrainConfig", "train", "ProofSet",
    "TopKProofs", "wmc", "Specification", "build_action_chain_spec", "build_pre_post_spec",
    "negate", "parse_spec", "pretty_print", "to_nnf", "GenConfig", "generate",
]
