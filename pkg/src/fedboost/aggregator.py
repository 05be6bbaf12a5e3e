"""Aggregator role: poll-based task dispatch, barriers, round decisions.

One connection-handling thread runs per collaborator; every protocol state
transition funnels through a single lock-guarded coordinator, so messages
are handled in one global order (the event log's `seq`). Replies are sent
outside the lock. Collaborators drive the round forward by polling; the
coordinator releases a barrier when the last SYNCH for the current task
arrives, then enqueues each collaborator's next downlinks.

Dropped collaborators abort the federation (fail-fast): the coordinator
closes every connection and `aggregator_serve` raises.
"""
from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import boosting
from .core import StrongHypothesis, WeakModelEnvelope, envelope_from_bytes
from .errors import (
    CollaboratorDropped,
    ConnectionClosed,
    DuplicateHello,
    FedBoostError,
    FederationError,
)
from .metrics import GLOBAL, MetricRecord
from .protocol import (
    MAX_FRAME_SIZE,
    Ack,
    Bye,
    DecisionBroadcast,
    ErrorUpload,
    Event,
    FrameChannel,
    Hello,
    Hold,
    HypothesisBroadcast,
    Message,
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

ADABOOST_TASKS = ("train", "weak_learners_validate", "adaboost_update", "adaboost_validate")
BAGGING_TASKS = ("train", "weak_learners_validate", "adaboost_validate")
SHUTDOWN_TASK = "shutdown"


def tasks_for_mode(mode: str) -> tuple[str, ...]:
    if mode == "adaboost_f":
        return ADABOOST_TASKS
    if mode == "bagging":
        return BAGGING_TASKS
    raise FederationError(f"unknown federation mode {mode!r}")


@dataclass
class ProtocolConfig:
    """Wire knobs; the defaults are the tuned values, not the baselines."""

    max_frame_size: int = MAX_FRAME_SIZE
    poll_interval: float = 0.01        # sleep after WAIT (task polling)
    synch_interval: float | None = None  # sleep after HOLD; None = poll_interval
    codec: str = "compact"

    @property
    def effective_synch_interval(self) -> float:
        return self.poll_interval if self.synch_interval is None else self.synch_interval


@dataclass
class FederationResult:
    ensemble: StrongHypothesis
    decisions: list
    metrics: list[MetricRecord]
    events: list[Event]
    store_trace: list[int]  # aggregator store cardinality after each round
    num_classes: int
    wall_time: float


class _Coordinator:
    def __init__(self, config, store: RoundStore, collect_events: bool):
        self._lock = threading.Lock()
        self.config = config
        self.n = config.num_collaborators
        self.tasks = tasks_for_mode(config.mode)
        self.store = store
        self.collect_events = collect_events

        self.round = 1
        self.num_classes = 2
        self.hello_seen: set[str] = set()
        self.queues: dict[str, deque[Message]] = {}
        self.synched: dict[tuple[str, int], set[str]] = {}
        self.barriers_done: set[tuple[str, int]] = set()
        self.current_hyps: tuple[WeakModelEnvelope, ...] = ()
        self.reports: dict[str, object] = {}
        self.f1_uploads: dict[str, float] = {}
        self.ensemble_terms: list[tuple[WeakModelEnvelope, float]] = []
        self.decisions: list = []
        self.metrics: list[MetricRecord] = []
        self.events: list[Event] = []
        self.store_trace: list[int] = []
        self.byes: set[str] = set()
        self.finished = False
        self.failed: Exception | None = None
        self.done = threading.Event()
        self._seq = 0
        self._channels: list[FrameChannel] = []

    # -- plumbing ---------------------------------------------------------

    def register_channel(self, channel: FrameChannel) -> None:
        with self._lock:
            self._channels.append(channel)

    def fail(self, exc: Exception) -> None:
        with self._lock:
            if self.failed is None and not self.done.is_set():
                self.failed = exc
            channels = list(self._channels)
        self.done.set()
        for ch in channels:
            try:
                ch.close()
            except Exception:
                pass

    def _log(self, kind: str, collab: str, round_no: int, detail: str = "") -> None:
        if self.collect_events:
            self.events.append(Event(self._seq, kind, collab, round_no, detail))
        self._seq += 1

    def _enqueue(self, collab: str, msg: Message) -> None:
        self.queues[collab].append(msg)

    # -- message handling ----------------------------------------------------

    def handle(self, origin: str, msg: Message) -> Message:
        """Process one uplink from `origin` and return the reply to send."""
        with self._lock:
            if self.failed is not None:
                raise FederationError("federation already failed") from self.failed
            if isinstance(msg, Hello):
                return self._on_hello(msg)
            if isinstance(msg, TaskPoll):
                return self._on_poll(msg)
            if isinstance(msg, ModelUpload):
                return self._on_model(msg)
            if isinstance(msg, ErrorUpload):
                return self._on_error_upload(origin, msg)
            if isinstance(msg, Synch):
                return self._on_synch(msg)
            if isinstance(msg, MetricUpload):
                return self._on_metric(origin, msg)
            if isinstance(msg, Bye):
                return self._on_bye(msg)
            raise FederationError(f"aggregator cannot handle {type(msg).__name__}")

    def _on_hello(self, msg: Hello) -> Message:
        self._log("recv:HELLO", msg.collab_id, 0, str(msg.shard_size))
        if msg.collab_id in self.hello_seen:
            raise DuplicateHello(f"collaborator {msg.collab_id!r} already joined")
        if len(self.hello_seen) == self.n:
            raise FederationError("all expected collaborators already joined")
        self.hello_seen.add(msg.collab_id)
        self.queues[msg.collab_id] = deque()
        self.num_classes = max(self.num_classes, msg.num_classes)
        spec = self.config.learner
        self.store.put(
            StoreKey(msg.collab_id, None, "hello", "shard_size"),
            int(msg.shard_size).to_bytes(8, "little"),
        )
        if len(self.hello_seen) == self.n:
            for collab in self.hello_seen:
                self._enqueue(collab, TaskAssign("train", 1))
        self._log("send:SPEC_BROADCAST", msg.collab_id, 0, spec.family_id)
        return SpecBroadcast(0, spec.family_id, dict(spec.hyperparameters))

    def _on_poll(self, msg: TaskPoll) -> Message:
        self._log("recv:TASK_POLL", msg.collab_id, msg.round)
        queue = self.queues.get(msg.collab_id)
        if queue is None:
            raise FederationError(f"poll from unknown collaborator {msg.collab_id!r}")
        if not queue:
            self._log("send:WAIT", msg.collab_id, msg.round)
            return Wait()
        reply = queue.popleft()
        if isinstance(reply, TaskAssign):
            self._log("send:TASK_ASSIGN", msg.collab_id, reply.round, reply.task)
        elif isinstance(reply, HypothesisBroadcast):
            self._log("send:HYPOTHESIS_BROADCAST", msg.collab_id, reply.round)
        elif isinstance(reply, DecisionBroadcast):
            self._log("send:DECISION_BROADCAST", msg.collab_id, reply.decision.round)
        return reply

    def _on_model(self, msg: ModelUpload) -> Message:
        self._log("recv:MODEL_UPLOAD", msg.envelope.origin_id, msg.round)
        if msg.round != self.round:
            raise FederationError(
                f"model upload for round {msg.round} while aggregator is at {self.round}"
            )
        self.store.put(
            StoreKey(msg.envelope.origin_id, msg.round, "train", "model", ("model",)),
            msg.envelope.to_bytes(),
        )
        self._log("send:ACK", msg.envelope.origin_id, msg.round)
        return Ack()

    def _on_error_upload(self, origin: str, msg: ErrorUpload) -> Message:
        # reports carry no id field on the wire; the connection names the origin
        self._log("recv:ERROR_UPLOAD", origin, msg.round)
        if msg.round != self.round:
            raise FederationError(
                f"error report for round {msg.round} while aggregator is at {self.round}"
            )
        self.reports[origin] = msg.report
        self.store.put(
            StoreKey(origin, msg.round, "weak_learners_validate", "report", ("report",)),
            np.ascontiguousarray(msg.report.errors, "<f8").tobytes(),
        )
        self._log("send:ACK", origin, msg.round)
        return Ack()

    def _on_metric(self, origin: str, msg: MetricUpload) -> Message:
        self._log("recv:METRIC_UPLOAD", origin, msg.round, msg.name)
        record = MetricRecord(msg.round, origin, msg.name, msg.value)
        self.metrics.append(record)
        if msg.name == "f1_macro":
            self.f1_uploads[origin] = msg.value
        self.store.put(
            StoreKey(origin, msg.round, "adaboost_validate", f"metric/{msg.name}", ("metric",)),
            np.float64(msg.value).tobytes(),
        )
        self._log("send:ACK", origin, msg.round)
        return Ack()

    def _on_synch(self, msg: Synch) -> Message:
        self._log("recv:SYNCH", msg.collab_id, msg.round, msg.task)
        key = (msg.task, msg.round)
        if key not in self.barriers_done:
            if msg.round != self.round or msg.task not in self.tasks:
                raise FederationError(
                    f"unexpected synch for {msg.task!r} round {msg.round} "
                    f"(aggregator at round {self.round})"
                )
            waiting = self.synched.setdefault(key, set())
            waiting.add(msg.collab_id)
            if len(waiting) == self.n:
                self.barriers_done.add(key)
                self._log("barrier", "", msg.round, msg.task)
                self._complete_barrier(msg.task)
        if key in self.barriers_done:
            self._log("send:PROCEED", msg.collab_id, msg.round, msg.task)
            return Proceed()
        self._log("send:HOLD", msg.collab_id, msg.round, msg.task)
        return Hold()

    def _on_bye(self, msg: Bye) -> Message:
        self._log("recv:BYE", msg.collab_id, self.round)
        self.byes.add(msg.collab_id)
        self._log("send:ACK", msg.collab_id, self.round)
        if self.finished and len(self.byes) == self.n:
            self.done.set()
        return Ack()

    # -- round state machine ------------------------------------------------------

    def _sorted_ids(self) -> list[str]:
        return sorted(self.hello_seen, key=lambda c: (len(c), c))

    def _complete_barrier(self, task: str) -> None:
        t = self.round
        if task == "train":
            hyps = []
            for key, blob in self.store.query(round=t, tag="model"):
                hyps.append(envelope_from_bytes(blob, origin_id=key.origin, round_no=t))
            hyps.sort(key=lambda e: (len(e.origin_id), e.origin_id))
            if len(hyps) != self.n:
                raise FederationError(f"round {t}: {len(hyps)} models for {self.n} collaborators")
            self.current_hyps = tuple(hyps)
            self._log("broadcast:HYPOTHESIS_BROADCAST", "", t)
            for collab in self.hello_seen:
                self._enqueue(collab, HypothesisBroadcast(t, self.current_hyps))
                self._enqueue(collab, TaskAssign("weak_learners_validate", t))
        elif task == "weak_learners_validate":
            if self.config.mode == "adaboost_f":
                ordered = [self.reports[c] for c in self._sorted_ids()]
                decision = boosting.decide_round(ordered, self.n, self.num_classes)
                self.decisions.append(decision)
                chosen = self.current_hyps[decision.best_index]
                self.ensemble_terms.append((chosen, decision.alpha))
                self.metrics.append(MetricRecord(t, GLOBAL, "error", decision.global_error))
                self.metrics.append(MetricRecord(t, GLOBAL, "norm", decision.global_norm))
                self.store.put(
                    StoreKey("aggregator", t, "adaboost_update", "decision", ("decision",)),
                    np.array(
                        [decision.best_index, decision.alpha, decision.global_error,
                         decision.global_norm], dtype="<f8",
                    ).tobytes(),
                )
                self._log("broadcast:DECISION_BROADCAST", "", t)
                for collab in self.hello_seen:
                    self._enqueue(collab, DecisionBroadcast(decision))
                    self._enqueue(collab, TaskAssign("adaboost_update", t))
            else:
                for envelope in self.current_hyps:
                    self.ensemble_terms.append((envelope, 1.0))
                for collab in self.hello_seen:
                    self._enqueue(collab, TaskAssign("adaboost_validate", t))
            self.reports.clear()
        elif task == "adaboost_update":
            for collab in self.hello_seen:
                self._enqueue(collab, TaskAssign("adaboost_validate", t))
        elif task == "adaboost_validate":
            if self.f1_uploads:
                mean_f1 = float(np.mean([self.f1_uploads[c] for c in self._sorted_ids()
                                         if c in self.f1_uploads]))
                self.metrics.append(MetricRecord(t, GLOBAL, "f1_macro", mean_f1))
            self.f1_uploads.clear()
            self.store.put(
                StoreKey("aggregator", None, "adaboost_validate", "ensemble"),
                _encode_terms(self.ensemble_terms),
            )
            self.store.clean_up(t)
            self.store_trace.append(len(self.store))
            if t < self.config.rounds:
                self.round = t + 1
                for collab in self.hello_seen:
                    self._enqueue(collab, TaskAssign("train", self.round))
            else:
                self.finished = True
                for collab in self.hello_seen:
                    self._enqueue(collab, TaskAssign(SHUTDOWN_TASK, t))


def _encode_terms(terms) -> bytes:
    from .codec import Writer

    w = Writer()
    w.u64(len(terms))
    for envelope, alpha in terms:
        w.f64(alpha)
        w.raw(envelope.to_bytes())
    return w.getvalue()


def _serve_connection(coord: _Coordinator, channel: FrameChannel) -> None:
    collab_id: str | None = None
    try:
        while True:
            msg = channel.recv()
            if isinstance(msg, Hello):
                collab_id = msg.collab_id
            reply = coord.handle(collab_id or "?", msg)
            channel.send(reply)
            if isinstance(msg, Bye):
                return
    except ConnectionClosed:
        # a connection that never enrolled (no HELLO) is a stray, not a drop
        if collab_id is not None and not coord.done.is_set():
            coord.fail(CollaboratorDropped(collab_id, coord.round))
    except Exception as exc:
        coord.fail(exc)


def aggregator_serve(
    config,
    listener,
    *,
    protocol: ProtocolConfig | None = None,
    retention: RetentionPolicy = RetentionPolicy(),
    collect_events: bool = True,
) -> FederationResult:
    """Run the federation to completion and return the global model.

    Accepts exactly `config.num_collaborators` connections, then executes
    rounds 1..T: assign train, collect the models, barrier, broadcast the
    hypothesis space, assign validation, collect the error reports, barrier,
    decide, broadcast the decision, assign the update, barrier, assign
    final validation, collect metrics, barrier.
    """
    protocol = protocol or ProtocolConfig()
    start = time.perf_counter()
    store = RoundStore(retention)
    coord = _Coordinator(config, store, collect_events)
    store.put(StoreKey("aggregator", None, "plan", "learner_spec"),
              config.learner.family_id.encode())

    threads = []

    def accept_loop():
        # keep accepting until the run ends; enrollment is gated on HELLO,
        # so stray connections (health probes etc.) cannot hold a seat
        while not coord.done.is_set():
            try:
                conn = listener.accept()
            except (ConnectionClosed, OSError):
                return
            channel = FrameChannel(conn, protocol.max_frame_size, protocol.codec)
            coord.register_channel(channel)
            thread = threading.Thread(target=_serve_connection, args=(coord, channel),
                                      daemon=True)
            thread.start()
            threads.append(thread)

    acceptor = threading.Thread(target=accept_loop, daemon=True)
    try:
        acceptor.start()
        coord.done.wait()
    finally:
        try:
            listener.close()
        except Exception:
            pass
        acceptor.join(timeout=10.0)
    for thread in threads:
        thread.join(timeout=10.0)
    for channel in coord._channels:
        try:
            channel.close()
        except Exception:
            pass
    if coord.failed is not None:
        if isinstance(coord.failed, FedBoostError):
            raise coord.failed
        raise FederationError(str(coord.failed)) from coord.failed

    return FederationResult(
        ensemble=StrongHypothesis(tuple(coord.ensemble_terms), coord.num_classes),
        decisions=coord.decisions,
        metrics=coord.metrics,
        events=coord.events,
        store_trace=coord.store_trace,
        num_classes=coord.num_classes,
        wall_time=time.perf_counter() - start,
    )
