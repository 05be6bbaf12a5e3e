"""Federated boosting round logic for both roles, plus a sequential oracle.

Per round every collaborator trains one weak hypothesis, the whole round's
hypothesis space is broadcast, each collaborator reports the weighted error
of every hypothesis on its local data, and the aggregator picks the
hypothesis with the lowest global weighted error:

    global_error(j) = sum_i errors_i[j] / sum_i weight_norm_i
    alpha = ln((1 - eps) / eps) + ln(K - 1),  eps clamped away from {0, 1}

which is the multiclass (SAMME) coefficient; for K = 2 it reduces to the
classic log-odds. Collaborators then rescale their sample weights:

    w_k <- (w_k / global_norm) * exp(alpha * [k mispredicted])

The division by the broadcast global norm bounds weight magnitudes and
cancels any weight factor common to the whole federation, so decisions are
invariant under rescaling all initial weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import learners
from .core import (
    DatasetShard,
    ErrorReport,
    RoundDecision,
    StrongHypothesis,
    WeakModelEnvelope,
    WeightVector,
    derive_round_seed,
)
from .errors import (
    ArityMismatch,
    DecodeFailure,
    LengthMismatch,
    ReportCountMismatch,
    StaleRound,
)

ERROR_CLAMP = 1e-10


@dataclass(frozen=True)
class CollaboratorBoostState:
    """Weight bookkeeping confined to one collaborator."""

    weights: WeightVector
    round: int
    last_global_norm: float


def initial_state(n_samples: int, initial_weight: float = 1.0) -> CollaboratorBoostState:
    if n_samples < 1:
        raise LengthMismatch("cannot track weights for an empty shard")
    if not (initial_weight > 0.0 and math.isfinite(initial_weight)):
        raise LengthMismatch(f"initial weight must be positive and finite, got {initial_weight}")
    # every sample starts at `initial_weight`; the common factor rides in
    # WeightVector.scale so downstream ratios never see it
    return CollaboratorBoostState(
        weights=WeightVector(np.ones(n_samples), scale=initial_weight),
        round=1,
        last_global_norm=0.0,
    )


def evaluate_hypotheses(
    hypotheses: Sequence[WeakModelEnvelope],
    shard: DatasetShard,
    state: CollaboratorBoostState,
) -> ErrorReport:
    """Weighted error of every broadcast hypothesis on the local shard."""
    if len(state.weights) != shard.shard_size:
        raise ArityMismatch(
            f"state tracks {len(state.weights)} weights, shard has {shard.shard_size} samples"
        )
    values = state.weights.values
    mispredictions = np.zeros((len(hypotheses), shard.shard_size), dtype=bool)
    errors = np.zeros(len(hypotheses))
    for j, envelope in enumerate(hypotheses):
        try:
            model = learners.decode_envelope(envelope)
            predicted = model.predict(shard.features)
        except Exception as exc:
            raise DecodeFailure(j, exc) from exc
        wrong = predicted != shard.labels
        mispredictions[j] = wrong
        errors[j] = np.sum(values[wrong])
    return ErrorReport(errors, float(np.sum(values)), mispredictions, state.round)


def decide_round(reports: Sequence[ErrorReport], n: int, num_classes: int) -> RoundDecision:
    """Pick the hypothesis with the lowest global weighted error.

    Ties break toward the smallest hypothesis index. The error is clamped to
    [1e-10, 1 - 1e-10] so alpha stays finite; a worse-than-random best
    hypothesis is still selected (with negative alpha).
    """
    if len(reports) != n:
        raise ReportCountMismatch(f"expected {n} reports, got {len(reports)}")
    lengths = {len(r.errors) for r in reports}
    if len(lengths) != 1:
        raise LengthMismatch(f"reports disagree on hypothesis count: {sorted(lengths)}")
    rounds = {r.round for r in reports}
    if len(rounds) != 1:
        raise LengthMismatch(f"reports disagree on round: {sorted(rounds)}")

    totals = np.sum(np.vstack([r.errors for r in reports]), axis=0)
    global_norm = float(np.sum(np.array([r.weight_norm for r in reports])))
    global_errors = totals / global_norm
    best = int(np.argmin(global_errors))
    eps = min(max(float(global_errors[best]), ERROR_CLAMP), 1.0 - ERROR_CLAMP)
    alpha = math.log((1.0 - eps) / eps) + math.log(num_classes - 1)
    return RoundDecision(best, alpha, float(global_errors[best]), global_norm, reports[0].round)


def update_weights(
    state: CollaboratorBoostState,
    decision: RoundDecision,
    mispredicted: np.ndarray,
) -> CollaboratorBoostState:
    """Apply the round's alpha to the local weights and advance the round."""
    if decision.round != state.round:
        raise StaleRound(f"decision is for round {decision.round}, state is at {state.round}")
    mispredicted = np.asarray(mispredicted, dtype=bool)
    if mispredicted.shape != (len(state.weights),):
        raise LengthMismatch(
            f"bitmap length {mispredicted.shape} != weight count {len(state.weights)}"
        )
    boost = np.where(mispredicted, math.exp(decision.alpha), 1.0)
    values = state.weights.values / decision.global_norm * boost
    return CollaboratorBoostState(
        weights=WeightVector(values, scale=1.0),  # common factor cancels here
        round=state.round + 1,
        last_global_norm=decision.global_norm,
    )


def sequential_adaboost(
    spec: learners.LearnerSpec,
    dataset: DatasetShard,
    rounds: int,
    seed: int,
    *,
    initial_weight: float = 1.0,
) -> StrongHypothesis:
    """Single-node reference: the same fit/evaluate/decide/update cycle, n=1."""
    state = initial_state(dataset.shard_size, initial_weight)
    terms: list[tuple[WeakModelEnvelope, float]] = []
    for round_no in range(1, rounds + 1):
        envelope = fit_round(spec, dataset, state, seed, origin_id="0")
        report = evaluate_hypotheses([envelope], dataset, state)
        decision = decide_round([report], 1, dataset.num_classes)
        terms.append((envelope, decision.alpha))
        state = update_weights(state, decision, report.mispredictions[decision.best_index])
    return StrongHypothesis(tuple(terms), dataset.num_classes)


def fit_round(
    spec: learners.LearnerSpec,
    shard: DatasetShard,
    state: CollaboratorBoostState,
    seed: int,
    *,
    origin_id: str = "",
) -> WeakModelEnvelope:
    """Fit this round's local weak hypothesis with the derived round seed."""
    fit_seed = derive_round_seed(seed, state.round, shard)
    return learners.fit_weighted(
        spec, shard, state.weights, fit_seed, origin_id=origin_id, round_no=state.round
    )


def bagging_aggregate(rounds_of_hypotheses: Sequence[Sequence[WeakModelEnvelope]]) -> StrongHypothesis:
    """Append every round's hypotheses with alpha = 1: unweighted plurality."""
    terms = []
    num_classes = 2
    for hypotheses in rounds_of_hypotheses:
        for envelope in hypotheses:
            terms.append((envelope, 1.0))
            num_classes = max(num_classes, learners.decode_envelope(envelope).num_classes)
    return StrongHypothesis(tuple(terms), num_classes)
