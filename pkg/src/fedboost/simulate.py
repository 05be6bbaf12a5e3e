"""Single-process federation harness: aggregator plus n collaborators.

Spawns the aggregator and n collaborator threads over in-memory pipes (or
loopback TCP), runs every round, and returns metric records, the per-round
F1 curve, the final ensemble, the store cardinality traces, and the full
protocol event log. ML content (chosen hypotheses, alphas, F1 values) is
deterministic for a fixed seed regardless of scheduling jitter; only wall
times vary.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace

from . import metrics as metrics_mod
from .aggregator import FederationResult, aggregator_serve
from .collaborator import CollaboratorResult, DelayHook, run_collaborator
from .core import DatasetShard, StrongHypothesis, save_ensemble
from .data import ingest_csv, split_iid, split_train_test
from .errors import FedBoostError, FederationError, MissingField
from .metrics import GLOBAL, MetricRecord
from .plan import Plan
from .protocol import Event, MemoryListener, TcpListener, connect_tcp, verify_event_log

JOIN_TIMEOUT = 600.0


@dataclass
class SimulationReport:
    ensemble: StrongHypothesis
    decisions: list
    metrics: list[MetricRecord]
    events: list[Event]
    f1_curve: list[tuple[int, float]]  # (round, global F1)
    agg_store_trace: list[int]
    collab_store_traces: dict[str, list[int]]
    collaborators: dict[str, CollaboratorResult]
    num_classes: int
    rounds: int
    n: int
    mode: str
    seed: int
    wall_time: float

    @property
    def final_f1(self) -> float:
        return self.f1_curve[-1][1] if self.f1_curve else float("nan")

    def verify_protocol(self) -> list[str]:
        from .aggregator import tasks_for_mode

        return verify_event_log(
            self.events, n=self.n, rounds=self.rounds,
            tasks=tasks_for_mode(self.mode), mode=self.mode,
        )


def simulate(
    plan: Plan,
    dataset: DatasetShard | None = None,
    *,
    collaborators: int | None = None,
    seed: int | None = None,
    initial_weight: float = 1.0,
    delay_hooks: dict[str, DelayHook] | None = None,
    transport: str = "memory",
    collect_events: bool = True,
    weak_scaling: bool = False,
    out=None,
    ensemble_out=None,
    join_timeout: float = JOIN_TIMEOUT,
) -> SimulationReport:
    n = collaborators if collaborators is not None else plan.federation.num_collaborators
    run_seed = seed if seed is not None else plan.federation.seed
    data_seed = plan.data.seed if seed is None else run_seed
    config = replace(plan.federation, num_collaborators=n, seed=run_seed)

    if dataset is None:
        if plan.data.path is None:
            raise MissingField("data.path")
        dataset = ingest_csv(plan.data.path)
    train, test = split_train_test(dataset, plan.data.test_fraction, data_seed)
    shards = [train] * n if weak_scaling else split_iid(train, n, data_seed)

    if transport == "memory":
        listener = MemoryListener()
        connect = listener.connect
    elif transport == "tcp":
        listener = TcpListener("127.0.0.1", 0)
        host, port = listener.address
        connect = lambda: connect_tcp(host, port)
    else:
        raise FederationError(f"unknown transport {transport!r}")

    agg_out: dict = {}
    collab_out: dict[str, CollaboratorResult] = {}
    collab_errors: dict[str, Exception] = {}
    start = time.perf_counter()

    def agg_target():
        try:
            agg_out["result"] = aggregator_serve(
                config, listener,
                protocol=plan.protocol, retention=plan.retention,
                collect_events=collect_events,
            )
        except Exception as exc:
            agg_out["error"] = exc

    def collab_target(index: int):
        collab_id = str(index)
        try:
            conn = connect()
            collab_out[collab_id] = run_collaborator(
                conn, collab_id, shards[index], test,
                mode=config.mode, federation_seed=run_seed,
                protocol=plan.protocol, retention=plan.retention,
                initial_weight=initial_weight,
                delay_hook=(delay_hooks or {}).get(collab_id),
            )
        except Exception as exc:
            collab_errors[collab_id] = exc

    threads = [threading.Thread(target=agg_target, daemon=True, name="aggregator")]
    threads += [
        threading.Thread(target=collab_target, args=(i,), daemon=True, name=f"collab-{i}")
        for i in range(n)
    ]
    for thread in threads:
        thread.start()
    deadline = time.monotonic() + join_timeout
    for thread in threads:
        thread.join(timeout=max(0.0, deadline - time.monotonic()))
    listener.close()
    if any(thread.is_alive() for thread in threads):
        raise FederationError(f"federation did not finish within {join_timeout}s")
    if "error" in agg_out:
        cause = agg_out["error"]
        if isinstance(cause, FedBoostError):
            raise cause
        raise FederationError(f"aggregator failed: {cause}") from cause
    if collab_errors:
        collab_id, cause = sorted(collab_errors.items())[0]
        raise FederationError(f"collaborator {collab_id} failed: {cause}") from cause

    result: FederationResult = agg_out["result"]
    f1_curve = [
        (rec.round, rec.value)
        for rec in result.metrics
        if rec.collaborator == GLOBAL and rec.name == "f1_macro"
    ]
    report = SimulationReport(
        ensemble=result.ensemble,
        decisions=result.decisions,
        metrics=result.metrics,
        events=result.events,
        f1_curve=f1_curve,
        agg_store_trace=result.store_trace,
        collab_store_traces={c: r.store_trace for c, r in collab_out.items()},
        collaborators=collab_out,
        num_classes=result.num_classes,
        rounds=config.rounds,
        n=n,
        mode=config.mode,
        seed=run_seed,
        wall_time=time.perf_counter() - start,
    )
    if out is not None:
        metrics_mod.write_report(out, report.metrics, summary=_summary(report))
    if ensemble_out is not None and len(report.ensemble):
        save_ensemble(ensemble_out, report.ensemble)
    return report


def _summary(report: SimulationReport) -> dict:
    return {
        "collaborators": report.n,
        "rounds": report.rounds,
        "mode": report.mode,
        "seed": report.seed,
        "num_classes": report.num_classes,
        "ensemble_terms": len(report.ensemble),
        "final_f1": report.final_f1,
        "wall_time_s": report.wall_time,
    }
