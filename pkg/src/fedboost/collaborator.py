"""Collaborator role: a strictly sequential task loop.

The collaborator joins with HELLO (announcing its shard size and class
count), receives the learner spec, then repeatedly polls for work. After
finishing each task it asks for a synch and sleeps while the aggregator
answers HOLD; it moves on only once every peer has finished the same task.
Training data never leaves this loop; only models, error reports and
metric values go up the wire.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from . import boosting, learners
from .aggregator import SHUTDOWN_TASK, ProtocolConfig, tasks_for_mode
from .core import DatasetShard, VoteAccumulator
from .errors import AggregatorGone, ConnectionClosed, FederationError
from .metrics import f1_macro
from .protocol import (
    Ack,
    Bye,
    DecisionBroadcast,
    ErrorUpload,
    FrameChannel,
    Hello,
    Hold,
    HypothesisBroadcast,
    MetricUpload,
    ModelUpload,
    Proceed,
    SpecBroadcast,
    Synch,
    TaskAssign,
    TaskPoll,
    Wait,
)
from .store import RetentionPolicy, RoundStore, StoreKey

# optional schedule perturbation, mainly for protocol safety testing
DelayHook = Callable[[str, int], float]


@dataclass
class CollaboratorResult:
    collab_id: str
    f1_history: list[tuple[int, float]]
    store_trace: list[int]
    rounds_completed: int
    ensemble_size: int
    final_state: boosting.CollaboratorBoostState


def run_collaborator(
    conn,
    collab_id: str,
    train: DatasetShard,
    test: DatasetShard,
    *,
    mode: str,
    federation_seed: int,
    protocol: ProtocolConfig | None = None,
    retention: RetentionPolicy = RetentionPolicy(),
    initial_weight: float = 1.0,
    delay_hook: DelayHook | None = None,
) -> CollaboratorResult:
    protocol = protocol or ProtocolConfig()
    channel = FrameChannel(conn, protocol.max_frame_size, protocol.codec)
    tasks = tasks_for_mode(mode)
    try:
        return _run(channel, collab_id, train, test, tasks, mode, federation_seed,
                    protocol, retention, initial_weight, delay_hook)
    except ConnectionClosed as exc:
        raise AggregatorGone(f"collaborator {collab_id}: {exc}") from exc
    finally:
        channel.close()


def _run(channel, collab_id, train, test, tasks, mode, federation_seed,
         protocol, retention, initial_weight, delay_hook) -> CollaboratorResult:
    channel.send(Hello(collab_id, train.shard_size, train.num_classes))
    greeting = channel.recv()
    if not isinstance(greeting, SpecBroadcast):
        raise FederationError(f"expected the learner spec, got {type(greeting).__name__}")
    spec = learners.resolve_spec(greeting.family_id, greeting.hyperparameters)

    state = boosting.initial_state(train.shard_size, initial_weight)
    store = RoundStore(retention)
    accumulator = VoteAccumulator(test.features, max(train.num_classes, test.num_classes))
    hypotheses: tuple = ()
    decision = None
    report = None
    f1_history: list[tuple[int, float]] = []
    store_trace: list[int] = []
    ensemble_size = 0
    rounds_completed = 0
    round_no = 1

    while True:
        msg = _poll(channel, collab_id, round_no, protocol.poll_interval)
        if isinstance(msg, HypothesisBroadcast):
            hypotheses = msg.envelopes
            continue
        if isinstance(msg, DecisionBroadcast):
            decision = msg.decision
            continue
        if not isinstance(msg, TaskAssign):
            raise FederationError(f"unexpected poll reply {type(msg).__name__}")
        if msg.task == SHUTDOWN_TASK:
            channel.send(Bye(collab_id))
            _expect_ack(channel)
            break
        round_no = msg.round

        if msg.task == "train":
            envelope = boosting.fit_round(spec, train, state, federation_seed,
                                          origin_id=collab_id)
            store.put(StoreKey(collab_id, round_no, "train", "model", ("model",)),
                      envelope.to_bytes())
            channel.send(ModelUpload(round_no, envelope))
            _expect_ack(channel)
        elif msg.task == "weak_learners_validate":
            report = boosting.evaluate_hypotheses(hypotheses, train, state)
            store.put(StoreKey(collab_id, round_no, msg.task, "report", ("report",)),
                      report.errors.tobytes())
            channel.send(ErrorUpload(round_no, report))
            _expect_ack(channel)
        elif msg.task == "adaboost_update":
            if decision is None or report is None:
                raise FederationError("update assigned before decision arrived")
            state = boosting.update_weights(
                state, decision, report.mispredictions[decision.best_index])
        elif msg.task == "adaboost_validate":
            if mode == "adaboost_f":
                if decision is None:
                    raise FederationError("validate assigned before decision arrived")
                new_terms = [(hypotheses[decision.best_index], decision.alpha)]
            else:
                new_terms = [(env, 1.0) for env in hypotheses]
            for envelope, alpha in new_terms:
                accumulator.add(learners.decode_envelope(envelope), alpha)
                ensemble_size += 1
            score = f1_macro(accumulator.labels(), test.labels, accumulator.num_classes)
            store.put(StoreKey(collab_id, round_no, msg.task, "metric/f1_macro", ("metric",)),
                      repr(score).encode())
            f1_history.append((round_no, score))
            channel.send(MetricUpload(round_no, "f1_macro", score))
            _expect_ack(channel)
        else:
            raise FederationError(f"aggregator assigned unknown task {msg.task!r}")

        if delay_hook is not None:
            pause = delay_hook(msg.task, round_no)
            if pause > 0:
                time.sleep(pause)
        _barrier(channel, collab_id, msg.task, round_no, protocol.effective_synch_interval)
        if msg.task == tasks[-1]:
            store.clean_up(round_no)
            store_trace.append(len(store))
            rounds_completed = round_no
            round_no += 1

    return CollaboratorResult(
        collab_id=collab_id,
        f1_history=f1_history,
        store_trace=store_trace,
        rounds_completed=rounds_completed,
        ensemble_size=ensemble_size,
        final_state=state,
    )


def _poll(channel, collab_id, round_no, interval):
    while True:
        channel.send(TaskPoll(collab_id, round_no))
        reply = channel.recv()
        if isinstance(reply, Wait):
            time.sleep(interval)
            continue
        return reply


def _barrier(channel, collab_id, task, round_no, interval):
    """Ask for a synch until every collaborator has finished (task, round)."""
    while True:
        channel.send(Synch(collab_id, task, round_no))
        reply = channel.recv()
        if isinstance(reply, Proceed):
            return
        if isinstance(reply, Hold):
            time.sleep(interval)
            continue
        raise FederationError(f"unexpected synch reply {type(reply).__name__}")


def _expect_ack(channel):
    reply = channel.recv()
    if not isinstance(reply, Ack):
        raise FederationError(f"expected ACK, got {type(reply).__name__}")
