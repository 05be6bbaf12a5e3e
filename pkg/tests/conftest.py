import numpy as np
import pytest

from fedboost.plan import plan_from_dict

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def quick_plan(n, rounds, family="stump", hp=None, *, mode_tasks=None, seed=0, **extra):
    """A plan with fast poll intervals for in-process simulation tests."""
    raw = {
        "federation": {
            "collaborators": n,
            "rounds": rounds,
            "seed": seed,
            "learner": {"family": family, "hyperparameters": hp or {}},
        },
        "protocol": {"poll_interval": 0.001},
    }
    if mode_tasks is not None:
        raw["tasks"] = list(mode_tasks)
    raw.update(extra)
    return plan_from_dict(raw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
