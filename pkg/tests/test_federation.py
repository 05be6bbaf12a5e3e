import threading

import numpy as np
import pytest

from conftest import quick_plan
from fedboost.aggregator import aggregator_serve
from fedboost.boosting import sequential_adaboost
from fedboost.core import predict_strong_batch
from fedboost.data import make_blobs, split_train_test
from fedboost.errors import DuplicateHello, FederationError
from fedboost.learners import resolve_spec
from fedboost.protocol import FrameChannel, Hello, MemoryListener
from fedboost.simulate import simulate


class TestRoundProtocol:
    def test_two_collaborators_one_round(self):
        rep = simulate(quick_plan(2, 1), make_blobs(60, 2, 2, seed=0))
        assert len(rep.ensemble) == 1
        barriers = [e for e in rep.events if e.kind == "barrier"]
        assert len(barriers) == 4  # one per task in the adaboost cycle
        assert rep.verify_protocol() == []

    def test_trace_counts(self):
        n, rounds = 3, 4
        rep = simulate(quick_plan(n, rounds), make_blobs(90, 2, 3, seed=1))
        decisions = [e for e in rep.events if e.kind == "broadcast:DECISION_BROADCAST"]
        error_uploads = [e for e in rep.events if e.kind == "recv:ERROR_UPLOAD"]
        assert len(decisions) == rounds
        assert len(error_uploads) == rounds * n
        assert len(rep.decisions) == rounds
        assert rep.verify_protocol() == []

    def test_trace_counts_hundred_rounds_eight_collaborators(self):
        n, rounds = 8, 100
        rep = simulate(quick_plan(n, rounds), make_blobs(400, 2, 4, seed=2))
        assert sum(e.kind == "broadcast:DECISION_BROADCAST" for e in rep.events) == rounds
        assert sum(e.kind == "recv:ERROR_UPLOAD" for e in rep.events) == rounds * n
        assert rep.verify_protocol() == []

    def test_ensemble_grows_one_term_per_round(self):
        for rounds in (1, 5):
            rep = simulate(quick_plan(2, rounds), make_blobs(80, 2, 2, seed=3))
            assert len(rep.ensemble) == rounds

    def test_bagging_grows_n_terms_per_round(self):
        plan = quick_plan(3, 4, mode_tasks=(
            "train", "weak_learners_validate", "adaboost_validate"))
        rep = simulate(plan, make_blobs(90, 2, 2, seed=3))
        assert rep.mode == "bagging"
        assert len(rep.ensemble) == 12
        assert rep.verify_protocol() == []
        assert not any(e.kind == "broadcast:DECISION_BROADCAST" for e in rep.events)


class TestOracleEquivalence:
    def test_single_collaborator_equals_sequential(self):
        dataset = make_blobs(150, 3, 4, separation=1.5, seed=7)
        plan = quick_plan(1, 10, family="tree", seed=21)
        rep = simulate(plan, dataset)

        train, test = split_train_test(dataset, plan.data.test_fraction, 21)
        oracle = sequential_adaboost(resolve_spec("tree"), train, 10, seed=21)

        assert np.array_equal(rep.ensemble.alphas, oracle.alphas)
        for (e1, _), (e2, _) in zip(rep.ensemble.terms, oracle.terms):
            assert e1.payload == e2.payload
        assert np.array_equal(
            predict_strong_batch(rep.ensemble, test.features),
            predict_strong_batch(oracle, test.features),
        )


class TestDeterminism:
    def test_ml_content_is_seed_deterministic_across_runs(self):
        dataset = make_blobs(120, 3, 4, separation=1.4, seed=5)
        plan = quick_plan(4, 6, family="tree", seed=9)
        a = simulate(plan, dataset)
        b = simulate(plan, dataset)
        assert np.array_equal(a.ensemble.alphas, b.ensemble.alphas)
        assert [d.best_index for d in a.decisions] == [d.best_index for d in b.decisions]
        assert a.f1_curve == b.f1_curve
        for (e1, _), (e2, _) in zip(a.ensemble.terms, b.ensemble.terms):
            assert e1.payload == e2.payload

    def test_seed_changes_content(self):
        dataset = make_blobs(120, 3, 4, separation=1.0, seed=5)
        a = simulate(quick_plan(2, 4, family="knn", seed=1), dataset)
        b = simulate(quick_plan(2, 4, family="knn", seed=2), dataset)
        assert any(x[0].payload != y[0].payload
                   for x, y in zip(a.ensemble.terms, b.ensemble.terms))


class TestBarrierBehaviour:
    def test_single_collaborator_never_holds(self):
        rep = simulate(quick_plan(1, 3), make_blobs(40, 2, 2, seed=0))
        assert not any(e.kind == "send:HOLD" for e in rep.events)

    def test_delayed_collaborator_makes_peers_hold(self):
        plan = quick_plan(3, 2)
        hooks = {"0": lambda task, r: 0.1 if task == "train" else 0.0}
        rep = simulate(plan, make_blobs(60, 2, 2, seed=0), delay_hooks=hooks)
        holds = [e for e in rep.events if e.kind == "send:HOLD" and e.detail == "train"]
        held_collabs = {e.collab for e in holds}
        assert held_collabs >= {"1", "2"}
        assert rep.verify_protocol() == []


class TestTransportsAndFailure:
    def test_tcp_loopback_run(self):
        rep = simulate(quick_plan(2, 2), make_blobs(60, 2, 3, seed=2), transport="tcp")
        assert len(rep.ensemble) == 2
        assert rep.verify_protocol() == []

    def test_collaborator_crash_fails_fast(self):
        def bomb(task, round_no):
            if round_no == 2 and task == "train":
                raise RuntimeError("injected crash")
            return 0.0

        with pytest.raises(FederationError):
            simulate(quick_plan(3, 5), make_blobs(60, 2, 2, seed=0),
                     delay_hooks={"1": bomb}, join_timeout=30.0)

    def test_duplicate_hello_rejected(self):
        listener = MemoryListener()
        plan = quick_plan(2, 1)
        result = {}

        def serve():
            try:
                aggregator_serve(plan.federation, listener, protocol=plan.protocol)
            except Exception as exc:
                result["error"] = exc

        thread = threading.Thread(target=serve, daemon=True)
        thread.start()
        first = FrameChannel(listener.connect())
        second = FrameChannel(listener.connect())
        first.send(Hello("7", 10, 2))
        first.recv()
        second.send(Hello("7", 10, 2))
        thread.join(timeout=10)
        assert isinstance(result.get("error"), DuplicateHello)


class TestStoreTraces:
    def test_windowed_store_is_bounded(self):
        plan = quick_plan(3, 12, store={"window": 2})
        rep = simulate(plan, make_blobs(90, 2, 2, seed=4))
        assert len(rep.agg_store_trace) == 12
        # steady-state bound: at most two rounds of per-round insertions (+ exempt)
        per_round = rep.agg_store_trace[0]
        assert max(rep.agg_store_trace) <= 2 * per_round
        for trace in rep.collab_store_traces.values():
            assert max(trace) <= 2 * trace[0]

    def test_unbounded_store_grows_linearly(self):
        plan = quick_plan(2, 12, store={"window": "unbounded"})
        rep = simulate(plan, make_blobs(60, 2, 2, seed=4))
        trace = rep.agg_store_trace
        assert trace[-1] > trace[len(trace) // 2] > trace[0]

    def test_report_and_ensemble_files(self, tmp_path):
        out = tmp_path / "report.jsonl"
        ens = tmp_path / "model.ensemble"
        rep = simulate(quick_plan(2, 3), make_blobs(60, 2, 2, seed=1),
                       out=out, ensemble_out=ens)
        from fedboost.core import load_ensemble
        from fedboost.metrics import read_report

        records, summary = read_report(out)
        assert summary["rounds"] == 3
        assert summary["ensemble_terms"] == 3
        assert any(r.name == "f1_macro" and r.collaborator == "global" for r in records)
        loaded = load_ensemble(ens)
        assert len(loaded) == len(rep.ensemble)
