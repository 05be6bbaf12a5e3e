import subprocess
import sys

from fedboost.cli import main
from fedboost.core import load_ensemble
from fedboost.data import make_blobs
from fedboost.metrics import read_report
from fedboost.plan import plan_from_dict, render


def shard_to_csv(shard, path):
    header = ",".join([f"f{i}" for i in range(shard.n_features)] + ["label"])
    lines = [header]
    for row, label in zip(shard.features, shard.labels):
        lines.append(",".join(f"{v:.6f}" for v in row) + f",c{label}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_plan(tmp_path, n, rounds, family="stump", **federation_extra):
    plan = plan_from_dict({
        "federation": {"collaborators": n, "rounds": rounds,
                       "learner": {"family": family}, **federation_extra},
        "protocol": {"poll_interval": 0.002},
    })
    path = tmp_path / "plan.yaml"
    path.write_text(render(plan))
    return path


class TestSimulateCommand:
    def test_writes_report_and_ensemble(self, tmp_path):
        plan = write_plan(tmp_path, 2, 3)
        csv = shard_to_csv(make_blobs(80, 2, 3, seed=1), tmp_path / "data.csv")
        report = tmp_path / "report.jsonl"
        ensemble = tmp_path / "model.ensemble"
        code = main(["simulate", "--plan", str(plan), "--data", str(csv),
                     "--out", str(report), "--ensemble-out", str(ensemble),
                     "--seed", "5"])
        assert code == 0
        records, summary = read_report(report)
        assert summary["rounds"] == 3
        assert len(load_ensemble(ensemble)) == 3

    def test_collaborator_override(self, tmp_path):
        plan = write_plan(tmp_path, 4, 1)
        csv = shard_to_csv(make_blobs(60, 2, 2, seed=2), tmp_path / "data.csv")
        report = tmp_path / "report.jsonl"
        assert main(["simulate", "--plan", str(plan), "--data", str(csv),
                     "--collaborators", "2", "--out", str(report)]) == 0
        _, summary = read_report(report)
        assert summary["collaborators"] == 2


class TestExitCodes:
    def test_unknown_plan_key_is_config_error(self, tmp_path):
        path = tmp_path / "plan.yaml"
        path.write_text("federation:\n  colaborators: 2\n")
        assert main(["simulate", "--plan", str(path)]) == 2

    def test_missing_plan_file_is_config_error(self, tmp_path):
        assert main(["simulate", "--plan", str(tmp_path / "nope.yaml")]) == 2

    def test_missing_data_is_config_error(self, tmp_path):
        plan = write_plan(tmp_path, 2, 1)
        assert main(["simulate", "--plan", str(plan)]) == 2


class TestBenchCommand:
    def test_strong_mode_prints_table(self, tmp_path, capsys):
        plan = write_plan(tmp_path, 1, 1)
        csv = shard_to_csv(make_blobs(60, 2, 2, seed=3), tmp_path / "data.csv")
        out = tmp_path / "bench.json"
        code = main(["bench", "--plan", str(plan), "--mode", "strong",
                     "--collaborators", "1,2", "--reps", "1",
                     "--data", str(csv), "--transport", "memory",
                     "--out", str(out)])
        assert code == 0
        assert "speedup" in capsys.readouterr().out
        assert out.exists()


class TestNetworkedRoles:
    def test_aggregator_and_collaborators_as_subprocesses(self, tmp_path):
        n, rounds = 2, 2
        plan = write_plan(tmp_path, n, rounds)
        dataset = make_blobs(80, 2, 3, seed=4)
        csvs = [shard_to_csv(
            type(dataset)(dataset.features[i::n], dataset.labels[i::n], 2),
            tmp_path / f"shard{i}.csv") for i in range(n)]
        ensemble_path = tmp_path / "model.ensemble"
        port = _free_port()

        agg = subprocess.Popen(
            [sys.executable, "-m", "fedboost.cli", "aggregator",
             "--plan", str(plan), "--listen", f"127.0.0.1:{port}",
             "--out", str(ensemble_path)],
            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        try:
            _wait_for_port(port)
            collabs = [
                subprocess.Popen(
                    [sys.executable, "-m", "fedboost.cli", "collaborator",
                     "--plan", str(plan), "--id", str(i), "--data", str(csvs[i]),
                     "--connect", f"127.0.0.1:{port}"],
                    stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
                for i in range(n)
            ]
            for proc in collabs:
                out, err = proc.communicate(timeout=60)
                assert proc.returncode == 0, err
            out, err = agg.communicate(timeout=60)
            assert agg.returncode == 0, err
        finally:
            agg.kill()
        assert len(load_ensemble(ensemble_path)) == rounds


def _free_port():
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for_port(port, timeout=20.0):
    import socket
    import time

    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.05)
    raise TimeoutError(f"port {port} never opened")
