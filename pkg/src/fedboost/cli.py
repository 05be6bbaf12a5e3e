"""Command line entry points: aggregator, collaborator, simulate, bench.

Exit codes: 0 success, 2 configuration error, 3 federation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .aggregator import aggregator_serve
from .bench import bench_ablation, bench_scaling, format_table, rows_to_dicts
from .collaborator import run_collaborator
from .core import save_ensemble
from .data import ingest_csv, split_train_test
from .errors import FedBoostError, PlanError
from .metrics import GLOBAL
from .plan import load_plan
from .protocol import TcpListener, connect_tcp
from .simulate import simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FEDERATION = 3


def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise PlanError(f"address must be host:port, got {text!r}")
    return host, int(port)


def _cmd_aggregator(args) -> int:
    plan = load_plan(args.plan)
    host, port = _parse_address(args.listen)
    listener = TcpListener(host, port)
    print(f"aggregator listening on {listener.address[0]}:{listener.address[1]} "
          f"({plan.federation.num_collaborators} collaborators, "
          f"{plan.federation.rounds} rounds)")
    result = aggregator_serve(plan.federation, listener,
                              protocol=plan.protocol, retention=plan.retention)
    final = [m for m in result.metrics if m.collaborator == GLOBAL and m.name == "f1_macro"]
    if final:
        print(f"final global f1_macro: {final[-1].value:.4f}")
    if args.out:
        save_ensemble(args.out, result.ensemble)
        print(f"ensemble ({len(result.ensemble)} terms) written to {args.out}")
    return EXIT_OK


def _cmd_collaborator(args) -> int:
    plan = load_plan(args.plan)
    shard = ingest_csv(args.data)
    if args.test_data:
        train, test = shard, ingest_csv(args.test_data)
    else:
        train, test = split_train_test(shard, plan.data.test_fraction, plan.data.seed)
    host, port = _parse_address(args.connect)
    conn = connect_tcp(host, port)
    result = run_collaborator(
        conn, str(args.id), train, test,
        mode=plan.federation.mode,
        federation_seed=args.seed if args.seed is not None else plan.federation.seed,
        protocol=plan.protocol, retention=plan.retention,
    )
    if result.f1_history:
        print(f"collaborator {result.collab_id}: final local f1_macro "
              f"{result.f1_history[-1][1]:.4f} after {result.rounds_completed} rounds")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    plan = load_plan(args.plan)
    dataset = ingest_csv(args.data) if args.data else None
    report = simulate(
        plan, dataset,
        collaborators=args.collaborators,
        seed=args.seed,
        transport=args.transport,
        out=args.out,
        ensemble_out=args.ensemble_out,
    )
    print(f"simulated {report.n} collaborators x {report.rounds} rounds "
          f"({report.mode}) in {report.wall_time:.2f}s")
    if report.f1_curve:
        print(f"final global f1_macro: {report.final_f1:.4f}")
    if args.out:
        print(f"report written to {args.out}")
    if args.ensemble_out:
        print(f"ensemble written to {args.ensemble_out}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    plan = load_plan(args.plan)
    dataset = ingest_csv(args.data) if args.data else None
    n_list = [int(x) for x in args.collaborators.split(",") if x]
    if args.mode == "ablation":
        rows = bench_ablation(plan, dataset, n_list[-1], reps=args.reps,
                              transport=args.transport)
    else:
        rows = bench_scaling(plan, dataset, args.mode, n_list, reps=args.reps,
                             transport=args.transport)
    print(format_table(rows))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(rows_to_dicts(rows), f, indent=2)
        print(f"timings written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedboost",
        description="Federated boosting of arbitrary weak learners.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log plan defaults etc.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregator", help="run the aggregator role over TCP")
    p.add_argument("--plan", required=True)
    p.add_argument("--listen", required=True, metavar="HOST:PORT")
    p.add_argument("--out", help="write the final ensemble here")
    p.set_defaults(func=_cmd_aggregator)

    p = sub.add_parser("collaborator", help="run one collaborator role over TCP")
    p.add_argument("--plan", required=True)
    p.add_argument("--id", required=True, type=int)
    p.add_argument("--data", required=True, help="this collaborator's CSV shard")
    p.add_argument("--test-data", help="held-out CSV; default splits --data")
    p.add_argument("--connect", required=True, metavar="HOST:PORT")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_collaborator)

    p = sub.add_parser("simulate", help="run aggregator + collaborators in one process")
    p.add_argument("--plan", required=True)
    p.add_argument("--data", help="dataset CSV; defaults to the plan's data.path")
    p.add_argument("--collaborators", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the line-delimited run report here")
    p.add_argument("--ensemble-out", help="write the final ensemble here")
    p.add_argument("--transport", choices=["memory", "tcp"], default="memory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bench", help="strong/weak scaling or optimization ablation")
    p.add_argument("--plan", required=True)
    p.add_argument("--mode", choices=["strong", "weak", "ablation"], required=True)
    p.add_argument("--collaborators", default="1,2,4,8",
                   help="comma-separated list; ablation uses the last entry")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--data", help="dataset CSV; defaults to the plan's data.path")
    p.add_argument("--out", help="write timings as JSON here")
    p.add_argument("--transport", choices=["memory", "tcp"], default="tcp")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except PlanError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedBoostError as exc:
        print(f"federation error: {exc}", file=sys.stderr)
        return EXIT_FEDERATION


if __name__ == "__main__":
    sys.exit(main())
