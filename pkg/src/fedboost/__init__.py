"""Federated boosting of arbitrary weak learners.

An aggregator and n collaborators train a weighted ensemble over a binary
wire protocol: each round every collaborator fits one weak hypothesis, the
round's hypothesis space is broadcast, weighted errors come back, and the
globally best hypothesis joins the strong model. The data never leaves the
collaborators.
"""

from .aggregator import FederationResult, ProtocolConfig, aggregator_serve
from .boosting import (
    CollaboratorBoostState,
    bagging_aggregate,
    decide_round,
    evaluate_hypotheses,
    initial_state,
    sequential_adaboost,
    update_weights,
)
from .collaborator import CollaboratorResult, run_collaborator
from .core import (
    DatasetShard,
    ErrorReport,
    FederationConfig,
    RoundDecision,
    StrongHypothesis,
    WeakModelEnvelope,
    WeightVector,
    load_ensemble,
    predict_strong,
    predict_strong_batch,
    save_ensemble,
    validate_shard,
)
from .data import ingest_csv, split_iid, split_train_test
from .learners import LearnerSpec, fit_weighted, resolve_spec
from .metrics import MetricRecord, f1_macro
from .plan import Plan, load_plan, render
from .simulate import SimulationReport, simulate
from .store import RetentionPolicy, RoundStore, StoreKey

__version__ = "0.1.0"

__all__ = [
    "CollaboratorBoostState",
    "CollaboratorResult",
    "DatasetShard",
    "ErrorReport",
    "FederationConfig",
    "FederationResult",
    "LearnerSpec",
    "MetricRecord",
    "Plan",
    "ProtocolConfig",
    "RetentionPolicy",
    "RoundDecision",
    "RoundStore",
    "SimulationReport",
    "StoreKey",
    "StrongHypothesis",
    "WeakModelEnvelope",
    "WeightVector",
    "aggregator_serve",
    "bagging_aggregate",
    "decide_round",
    "evaluate_hypotheses",
    "f1_macro",
    "fit_weighted",
    "ingest_csv",
    "initial_state",
    "load_ensemble",
    "load_plan",
    "predict_strong",
    "predict_strong_batch",
    "render",
    "resolve_spec",
    "run_collaborator",
    "save_ensemble",
    "sequential_adaboost",
    "simulate",
    "split_iid",
    "split_train_test",
    "update_weights",
    "validate_shard",
]
