"""Scaling and ablation benchmarks.

Strong scaling keeps the total training set fixed and splits it across n
collaborators; weak scaling hands every collaborator the full training set
so the problem grows with n. Both report wall time per configuration as
mean +- 95% CI over r repetitions, with speedup and efficiency relative to
the n=1 row. Ablation mode walks the optimization ladder (frame size,
codec, store retention, poll sleeps) one toggle at a time plus all-on,
reporting speedups over the all-off baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .aggregator import ProtocolConfig
from .core import DatasetShard
from .data import ingest_csv
from .errors import PlanError
from .plan import Plan
from .protocol import BASELINE_FRAME_SIZE, MAX_FRAME_SIZE
from .simulate import simulate
from .store import RetentionPolicy

# two-sided 97.5% Student t quantiles; beyond 30 dof the normal value serves
_T_CRIT = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365,
    8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160,
    14: 2.145, 15: 2.131, 20: 2.086, 25: 2.060, 30: 2.042,
}


def _t_crit(dof: int) -> float:
    if dof <= 0:
        return float("nan")
    if dof in _T_CRIT:
        return _T_CRIT[dof]
    keys = sorted(_T_CRIT)
    for k in keys:
        if dof < k:
            return _T_CRIT[k]
    return 1.96


def mean_ci(times: list[float]) -> tuple[float, float]:
    n = len(times)
    mean = sum(times) / n
    if n < 2:
        return mean, 0.0
    var = sum((t - mean) ** 2 for t in times) / (n - 1)
    return mean, _t_crit(n - 1) * math.sqrt(var / n)


@dataclass
class BenchRow:
    label: str
    collaborators: int
    times: list[float]
    mean: float
    ci95: float
    speedup: float | None = None     # baseline mean / this mean
    efficiency: float | None = None  # speedup / n (strong), t1/tn (weak)


def _run_once(plan: Plan, dataset: DatasetShard, n: int, *, weak: bool, transport: str) -> float:
    report = simulate(
        plan, dataset, collaborators=n, transport=transport,
        collect_events=False, weak_scaling=weak,
    )
    return report.wall_time


def bench_scaling(
    plan: Plan,
    dataset: DatasetShard | None,
    mode: str,
    n_list: list[int],
    reps: int = 5,
    *,
    transport: str = "memory",
) -> list[BenchRow]:
    if mode not in ("strong", "weak"):
        raise PlanError(f"scaling mode must be strong or weak, got {mode!r}")
    if dataset is None:
        if plan.data.path is None:
            raise PlanError("bench needs a dataset: give --data or set data.path")
        dataset = ingest_csv(plan.data.path)
    weak = mode == "weak"
    rows = []
    for n in n_list:
        times = [_run_once(plan, dataset, n, weak=weak, transport=transport)
                 for _ in range(reps)]
        mean, ci = mean_ci(times)
        label = f"{mode} n={n}" + (" (baseline)" if n == 1 else "")
        rows.append(BenchRow(label, n, times, mean, ci))
    base = next((r for r in rows if r.collaborators == 1), rows[0])
    for row in rows:
        row.speedup = base.mean / row.mean
        row.efficiency = (row.speedup / row.collaborators) if mode == "strong" else row.speedup
    return rows


# (label, protocol overrides, retention): one toggle per rung, then all-on
ABLATION_BASELINE = dict(max_frame_size=BASELINE_FRAME_SIZE, codec="baseline",
                         poll_interval=10.0, synch_interval=1.0)
ABLATION_LADDER: list[tuple[str, dict, RetentionPolicy]] = [
    ("baseline", {}, RetentionPolicy(None)),
    ("+frame32", dict(max_frame_size=MAX_FRAME_SIZE), RetentionPolicy(None)),
    ("+codec", dict(codec="compact"), RetentionPolicy(None)),
    ("+retention", {}, RetentionPolicy(2)),
    ("+fast-poll", dict(poll_interval=0.01, synch_interval=0.01), RetentionPolicy(None)),
    ("all-on", dict(max_frame_size=MAX_FRAME_SIZE, codec="compact",
                    poll_interval=0.01, synch_interval=0.01), RetentionPolicy(2)),
]


def ablation_plan(plan: Plan, overrides: dict, retention: RetentionPolicy) -> Plan:
    knobs = dict(ABLATION_BASELINE)
    knobs.update(overrides)
    return replace(plan, protocol=ProtocolConfig(**knobs), retention=retention)


def bench_ablation(
    plan: Plan,
    dataset: DatasetShard | None,
    n: int,
    reps: int = 1,
    *,
    ladder: list[tuple[str, dict, RetentionPolicy]] | None = None,
    transport: str = "tcp",
) -> list[BenchRow]:
    if dataset is None:
        if plan.data.path is None:
            raise PlanError("bench needs a dataset: give --data or set data.path")
        dataset = ingest_csv(plan.data.path)
    rows = []
    for label, overrides, retention in (ladder or ABLATION_LADDER):
        run_plan = ablation_plan(plan, overrides, retention)
        times = [_run_once(run_plan, dataset, n, weak=False, transport=transport)
                 for _ in range(reps)]
        mean, ci = mean_ci(times)
        rows.append(BenchRow(label, n, times, mean, ci))
    base = rows[0]
    for row in rows:
        row.speedup = base.mean / row.mean
    return rows


def format_table(rows: list[BenchRow]) -> str:
    width = max(16, max(len(row.label) for row in rows) + 1)
    header = (f"{'config':<{width}} {'n':>4} {'mean (s)':>10} {'ci95':>8} "
              f"{'speedup':>8} {'efficiency':>11}")
    lines = [header, "-" * len(header)]
    for row in rows:
        speedup = f"{row.speedup:.2f}" if row.speedup is not None else "-"
        eff = f"{row.efficiency:.2f}" if row.efficiency is not None else "-"
        lines.append(
            f"{row.label:<{width}} {row.collaborators:>4} {row.mean:>10.3f} "
            f"{row.ci95:>8.3f} {speedup:>8} {eff:>11}"
        )
    return "\n".join(lines)


def rows_to_dicts(rows: list[BenchRow]) -> list[dict]:
    return [
        {
            "label": row.label,
            "collaborators": row.collaborators,
            "times_s": row.times,
            "mean_s": row.mean,
            "ci95_s": row.ci95,
            "speedup": row.speedup,
            "efficiency": row.efficiency,
        }
        for row in rows
    ]
