"""Experiment plan: the YAML file that drives a federation run.

Every key is validated; unknown keys are rejected rather than silently
ignored, and every defaulted field is logged. Schema (defaults in
brackets)::

    federation:
      collaborators: <int, required>
      rounds:        <int, required>
      mode:          adaboost_f | bagging   [inferred from tasks]
      seed:          <int>                  [0]
      learner:
        family:          stump | tree | gaussian_nb | knn  (required)
        hyperparameters: <per-family map>   [family defaults]
    tasks: <list>                           [canonical cycle for the mode]
    protocol:
      max_frame_size: <bytes>               [33554432]
      poll_interval:  <seconds>             [0.01]
      synch_interval: <seconds>             [= poll_interval]
      codec:          compact | baseline    [compact]
    store:
      window: <rounds> | unbounded          [2]
    data:
      path:          <csv path or null>     [null]
      split:         iid                    [iid]
      seed:          <int>                  [federation.seed]
      test_fraction: <float in (0,1)>       [0.2]

The adaboost_f task cycle is (train, weak_learners_validate,
adaboost_update, adaboost_validate); leaving adaboost_update out selects
federated bagging. Rotations of the cycle are accepted and normalized.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import yaml

from .aggregator import ADABOOST_TASKS, BAGGING_TASKS, ProtocolConfig
from .core import FederationConfig
from .errors import BadTaskOrder, MissingField, PlanError, UnknownKey
from .learners import resolve_spec
from .protocol import MAX_FRAME_SIZE
from .store import RetentionPolicy

logger = logging.getLogger(__name__)

TASK_VOCABULARY = ADABOOST_TASKS + (
    "aggregated_model_validation",
    "locally_tuned_model_validation",
)


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    split: str = "iid"
    seed: int = 0
    test_fraction: float = 0.2


@dataclass(frozen=True)
class Plan:
    federation: FederationConfig
    tasks: tuple[str, ...]
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    retention: RetentionPolicy = field(default_factory=RetentionPolicy)
    data: DataConfig = field(default_factory=DataConfig)


def _require_mapping(obj, path: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise PlanError(f"{path} must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(mapping: dict, allowed: set[str], path: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise UnknownKey(f"{path}.{key}" if path else str(key))


def _get_int(mapping, key, path, *, default=None, minimum=None):
    if key not in mapping or mapping[key] is None:
        if default is None:
            raise MissingField(f"{path}.{key}")
        logger.info("plan: defaulted %s.%s = %r", path, key, default)
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise PlanError(f"{path}.{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise PlanError(f"{path}.{key} must be >= {minimum}, got {value}")
    return value


def _get_float(mapping, key, path, default):
    if key not in mapping or mapping[key] is None:
        logger.info("plan: defaulted %s.%s = %r", path, key, default)
        return default
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PlanError(f"{path}.{key} must be a number, got {value!r}")
    return float(value)


def _get_str(mapping, key, path, *, default=None, choices=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise MissingField(f"{path}.{key}")
        logger.info("plan: defaulted %s.%s = %r", path, key, default)
        return default
    value = mapping[key]
    if not isinstance(value, str):
        raise PlanError(f"{path}.{key} must be a string, got {value!r}")
    if choices is not None and value not in choices:
        raise PlanError(f"{path}.{key} must be one of {sorted(choices)}, got {value!r}")
    return value


def _normalize_tasks(tasks: list, mode: str | None) -> tuple[tuple[str, ...], str]:
    """Validate the task list against the mode's cycle; rotations allowed."""
    if not tasks:
        raise BadTaskOrder("task list must not be empty")
    for i, task in enumerate(tasks):
        if task not in TASK_VOCABULARY:
            raise BadTaskOrder(f"tasks[{i}]: unknown task {task!r}")
    inferred = "adaboost_f" if "adaboost_update" in tasks else "bagging"
    if mode is None:
        mode = inferred
        logger.info("plan: inferred federation.mode = %r from the task list", mode)
    elif mode != inferred:
        raise BadTaskOrder(
            f"mode {mode!r} does not match the task list (which implies {inferred!r})"
        )
    cycle = ADABOOST_TASKS if mode == "adaboost_f" else BAGGING_TASKS
    n = len(cycle)
    if len(tasks) != n or not any(
        tuple(tasks) == cycle[r:] + cycle[:r] for r in range(n)
    ):
        raise BadTaskOrder(
            f"{mode} requires the tasks {list(cycle)} in cyclic order, got {tasks}"
        )
    return tuple(tasks), mode


def plan_from_dict(raw: dict) -> Plan:
    raw = _require_mapping(raw, "plan")
    _check_keys(raw, {"federation", "tasks", "protocol", "store", "data"}, "")

    fed = _require_mapping(raw.get("federation"), "federation")
    _check_keys(fed, {"collaborators", "rounds", "mode", "seed", "learner"}, "federation")
    n = _get_int(fed, "collaborators", "federation", minimum=1)
    rounds = _get_int(fed, "rounds", "federation", minimum=1)
    seed = _get_int(fed, "seed", "federation", default=0)
    mode = _get_str(fed, "mode", "federation", choices={"adaboost_f", "bagging"})

    if "learner" not in fed or fed["learner"] is None:
        raise MissingField("federation.learner")
    learner = _require_mapping(fed["learner"], "federation.learner")
    _check_keys(learner, {"family", "hyperparameters"}, "federation.learner")
    family = _get_str(learner, "family", "federation.learner", required=True)
    hp = _require_mapping(learner.get("hyperparameters"), "federation.learner.hyperparameters")
    spec = resolve_spec(family, hp)
    if not learner.get("hyperparameters"):
        logger.info("plan: defaulted federation.learner.hyperparameters = %r",
                    dict(spec.hyperparameters))

    tasks_raw = raw.get("tasks")
    if tasks_raw is None:
        cycle = ADABOOST_TASKS if mode in (None, "adaboost_f") else BAGGING_TASKS
        tasks_raw = list(cycle)
        logger.info("plan: defaulted tasks = %r", tasks_raw)
    if not isinstance(tasks_raw, list):
        raise PlanError(f"tasks must be a list, got {type(tasks_raw).__name__}")
    tasks, mode = _normalize_tasks(tasks_raw, mode)

    proto = _require_mapping(raw.get("protocol"), "protocol")
    _check_keys(proto, {"max_frame_size", "poll_interval", "synch_interval", "codec"},
                "protocol")
    max_frame = _get_int(proto, "max_frame_size", "protocol", default=MAX_FRAME_SIZE, minimum=64)
    poll = _get_float(proto, "poll_interval", "protocol", 0.01)
    synch = None
    if proto.get("synch_interval") is not None:
        synch = _get_float(proto, "synch_interval", "protocol", poll)
    codec = _get_str(proto, "codec", "protocol", default="compact",
                     choices={"compact", "baseline"})
    if poll < 0 or (synch is not None and synch < 0):
        raise PlanError("protocol intervals must be >= 0")
    protocol = ProtocolConfig(max_frame, poll, synch, codec)

    store = _require_mapping(raw.get("store"), "store")
    _check_keys(store, {"window"}, "store")
    window_raw = store.get("window", "absent")
    if window_raw == "absent":
        logger.info("plan: defaulted store.window = 2")
        retention = RetentionPolicy(2)
    elif window_raw in (None, "unbounded"):
        retention = RetentionPolicy(None)
    elif isinstance(window_raw, int) and not isinstance(window_raw, bool) and window_raw >= 1:
        retention = RetentionPolicy(window_raw)
    else:
        raise PlanError(f"store.window must be an integer >= 1 or 'unbounded', got {window_raw!r}")

    data = _require_mapping(raw.get("data"), "data")
    _check_keys(data, {"path", "split", "seed", "test_fraction"}, "data")
    path = _get_str(data, "path", "data")
    split = _get_str(data, "split", "data", default="iid", choices={"iid"})
    data_seed = _get_int(data, "seed", "data", default=seed)
    test_fraction = _get_float(data, "test_fraction", "data", 0.2)
    if not 0.0 < test_fraction < 1.0:
        raise PlanError(f"data.test_fraction must be in (0, 1), got {test_fraction}")

    federation = FederationConfig(n, rounds, mode, spec, seed)
    return Plan(federation, tasks, protocol, retention,
                DataConfig(path, split, data_seed, test_fraction))


def load_plan(path) -> Plan:
    """Parse and fully validate a plan file."""
    with open(path, encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise PlanError(f"plan is not valid YAML: {exc}") from exc
    return plan_from_dict(raw if raw is not None else {})


def plan_to_dict(plan: Plan) -> dict:
    fed = plan.federation
    return {
        "federation": {
            "collaborators": fed.num_collaborators,
            "rounds": fed.rounds,
            "mode": fed.mode,
            "seed": fed.seed,
            "learner": {
                "family": fed.learner.family_id,
                "hyperparameters": dict(fed.learner.hyperparameters),
            },
        },
        "tasks": list(plan.tasks),
        "protocol": {
            "max_frame_size": plan.protocol.max_frame_size,
            "poll_interval": plan.protocol.poll_interval,
            "synch_interval": plan.protocol.synch_interval,
            "codec": plan.protocol.codec,
        },
        "store": {"window": "unbounded" if plan.retention.unbounded else plan.retention.window},
        "data": {
            "path": plan.data.path,
            "split": plan.data.split,
            "seed": plan.data.seed,
            "test_fraction": plan.data.test_fraction,
        },
    }


def render(plan: Plan) -> str:
    """YAML text such that load_plan(render(plan)) == plan."""
    return yaml.safe_dump(plan_to_dict(plan), sort_keys=False)
