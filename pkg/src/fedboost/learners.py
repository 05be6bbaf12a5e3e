"""Native weak-learner families behind a uniform weighted-fit interface.

Four families are registered: ``stump`` (one axis-aligned split), ``tree``
(greedy CART, weighted Gini, best-first growth to `max_leaves`),
``gaussian_nb`` (per-class weighted means/variances) and ``knn``
(weighted bootstrap resample, Euclidean k nearest neighbours).

Every family fits deterministically from (spec, shard, weights, seed) and
serializes to a versioned binary payload; decode(encode(m)) predicts
bit-identically to m. Payload layouts (format_version 1, all integers
little-endian):

stump::      [kind u8: 0=constant 1=split][num_classes u32]
             constant -> [label u32]
             split    -> [feature u32][threshold f64][left u32][right u32]
tree::       [num_classes u32][n_features u32][n_nodes u32] then per node
             [kind u8: 0=leaf 1=internal]
             leaf     -> [label u32]
             internal -> [feature u32][threshold f64][left u32][right u32]
gaussian_nb::[num_classes u32][n_features u32][priors K*f64]
             [means K*d f64][variances K*d f64]
knn::        [num_classes u32][k u32][n_features u32][m u64]
             [labels m*u32][features m*d f64]

Splits send equal values left (x[f] <= threshold). Fitting normalizes the
weight vector by its maximum, so scaling every weight by the same positive
factor cannot change the fitted model bytes when the weights are uniform.
A family whose fit turns out worse than the best constant prediction falls
back to that constant, so a fitted model never loses to majority vote on
its own weighted training data.
"""
from __future__ import annotations

import functools
import heapq
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .codec import Reader, Writer
from .core import DatasetShard, WeakModelEnvelope, WeightVector, check_arity
from .errors import (
    ArityMismatch,
    DegenerateShard,
    MalformedPayload,
    UnknownFamily,
    VersionUnsupported,
)

FORMAT_VERSION = 1

MIN_GAIN_FRACTION = 1e-12  # of node weight mass; rejects pure-noise splits
VARIANCE_FLOOR = 1e-9


@dataclass(frozen=True)
class LearnerSpec:
    """A learner family plus its hyperparameters."""

    family_id: str
    hyperparameters: Mapping[str, float] = field(default_factory=dict)


def resolve_spec(family_id: str, hyperparameters: Mapping[str, float] | None = None) -> LearnerSpec:
    """Validate the family and fill hyperparameter defaults."""
    family = get_family(family_id)
    hp = dict(family.defaults)
    for key, value in (hyperparameters or {}).items():
        if key not in family.defaults:
            raise UnknownFamily(
                f"family {family_id!r} has no hyperparameter {key!r} "
                f"(known: {sorted(family.defaults)})"
            )
        hp[key] = value
    family.validate(hp)
    return LearnerSpec(family_id, hp)


def get_family(family_id: str):
    try:
        return _FAMILIES[family_id]
    except KeyError:
        raise UnknownFamily(f"unknown learner family {family_id!r}") from None


def registered_families() -> tuple[str, ...]:
    return tuple(_FAMILIES)


# --- weighted class masses, shared by the fitters -----------------------------


def _class_masses(y: np.ndarray, w: np.ndarray, num_classes: int) -> np.ndarray:
    return np.bincount(y, weights=w, minlength=num_classes)


def _majority(y: np.ndarray, w: np.ndarray, num_classes: int) -> int:
    return int(np.argmax(_class_masses(y, w, num_classes)))


# --- stump ---------------------------------------------------------------------


@dataclass(frozen=True)
class Stump:
    """One axis-aligned split; `feature < 0` marks a constant classifier."""

    num_classes: int
    feature: int
    threshold: float
    left: int
    right: int

    @classmethod
    def constant(cls, label: int, num_classes: int) -> "Stump":
        return cls(num_classes, -1, 0.0, label, label)

    @property
    def n_features(self):
        return None  # only the split feature index is known

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.feature < 0:
            return np.full(X.shape[0], self.left, dtype=np.int64)
        if self.feature >= X.shape[1]:
            raise ArityMismatch(
                f"stump splits feature {self.feature}, input has {X.shape[1]} columns"
            )
        return np.where(X[:, self.feature] <= self.threshold, self.left, self.right).astype(np.int64)


def _best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray, num_classes: int):
    """Best weighted-Gini axis split over all features of a node.

    Returns (gain, feature, threshold) or None when no split separates the
    node. Ties break toward the smaller feature index, then the smaller
    threshold. Candidate thresholds are midpoints between consecutive
    distinct sorted values.
    """
    n, d = X.shape
    if n < 2:
        return None
    masses = _class_masses(y, w, num_classes)
    total = float(masses.sum())
    if total <= 0.0:
        return None
    parent_impurity = total - float((masses ** 2).sum()) / total

    order = np.argsort(X, axis=0, kind="stable")  # (n, d)
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    ws = w[order]
    onehot = (ys[..., None] == np.arange(num_classes)) * ws[..., None]  # (n, d, K)
    cum = np.cumsum(onehot, axis=0)
    totals = cum[-1]  # (d, K)

    left_w = cum[:-1].sum(axis=2)  # (n-1, d)
    right_w = totals.sum(axis=1)[None, :] - left_w
    sumsq_left = (cum[:-1] ** 2).sum(axis=2)
    sumsq_right = ((totals[None, :, :] - cum[:-1]) ** 2).sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        child_impurity = (left_w - sumsq_left / left_w) + (right_w - sumsq_right / right_w)
    child_impurity[(left_w <= 0.0) | (right_w <= 0.0)] = np.inf
    gain = parent_impurity - child_impurity
    gain[xs[:-1] >= xs[1:]] = -np.inf  # no boundary between equal values

    flat = np.argmax(gain.T)  # feature-major: ties favour smaller feature
    feature, pos = divmod(int(flat), n - 1)
    best_gain = float(gain[pos, feature])
    if not np.isfinite(best_gain) or best_gain <= MIN_GAIN_FRACTION * total:
        return None
    threshold = float((xs[pos, feature] + xs[pos + 1, feature]) / 2.0)
    return best_gain, feature, threshold


class _StumpFamily:
    name = "stump"
    defaults: dict[str, float] = {}

    @staticmethod
    def validate(hp: dict) -> None:
        pass

    @staticmethod
    def fit(X, y, w, num_classes, hp, seed) -> Stump:
        split = _best_split(X, y, w, num_classes)
        if split is None:
            return Stump.constant(_majority(y, w, num_classes), num_classes)
        _, feature, threshold = split
        mask = X[:, feature] <= threshold
        left = _majority(y[mask], w[mask], num_classes)
        right = _majority(y[~mask], w[~mask], num_classes)
        return Stump(num_classes, feature, threshold, left, right)

    @staticmethod
    def constant(label, num_classes, X, y) -> Stump:
        return Stump.constant(label, num_classes)

    @staticmethod
    def encode(m: Stump) -> bytes:
        w = Writer()
        if m.feature < 0:
            w.u8(0).u32(m.num_classes).u32(m.left)
        else:
            w.u8(1).u32(m.num_classes).u32(m.feature).f64(m.threshold).u32(m.left).u32(m.right)
        return w.getvalue()

    @staticmethod
    def decode(payload: bytes) -> Stump:
        r = Reader(payload, MalformedPayload)
        kind = r.u8()
        num_classes = r.u32()
        if kind == 0:
            m = Stump.constant(r.u32(), num_classes)
        elif kind == 1:
            m = Stump(num_classes, r.u32(), r.f64(), r.u32(), r.u32())
        else:
            raise MalformedPayload(f"bad stump kind {kind}")
        r.expect_end()
        return m


# --- CART tree -------------------------------------------------------------------


@dataclass(frozen=True)
class TreeModel:
    """Axis-aligned binary tree stored as parallel node arrays; node 0 is root."""

    num_classes: int
    n_features: int
    feature: np.ndarray    # int32, -1 for leaves
    threshold: np.ndarray  # float64
    child_left: np.ndarray
    child_right: np.ndarray
    leaf_label: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        check_arity(self.n_features, X.shape[1])
        idx = np.zeros(X.shape[0], dtype=np.int32)
        for _ in range(len(self.feature)):  # depth can never exceed node count
            feat = self.feature[idx]
            active = np.nonzero(feat >= 0)[0]
            if active.size == 0:
                return self.leaf_label[idx].astype(np.int64)
            node = idx[active]
            go_left = X[active, feat[active]] <= self.threshold[node]
            idx[active] = np.where(go_left, self.child_left[node], self.child_right[node])
        raise MalformedPayload("tree walk did not reach a leaf; node graph is cyclic")


class _TreeBuilder:
    def __init__(self, num_classes):
        self.feature = []
        self.threshold = []
        self.child_left = []
        self.child_right = []
        self.leaf_label = []
        self.num_classes = num_classes

    def add_leaf(self, y, w) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.child_left.append(-1)
        self.child_right.append(-1)
        self.leaf_label.append(_majority(y, w, self.num_classes))
        return len(self.feature) - 1

    def make_internal(self, node, feature, threshold, left, right) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.child_left[node] = left
        self.child_right[node] = right
        self.leaf_label[node] = -1


class _TreeFamily:
    name = "tree"
    defaults = {"max_leaves": 10}

    @staticmethod
    def validate(hp: dict) -> None:
        if int(hp["max_leaves"]) < 2:
            raise UnknownFamily(f"tree max_leaves must be >= 2, got {hp['max_leaves']}")

    @staticmethod
    def fit(X, y, w, num_classes, hp, seed) -> TreeModel:
        max_leaves = int(hp["max_leaves"])
        builder = _TreeBuilder(num_classes)
        root = builder.add_leaf(y, w)
        rows = np.arange(X.shape[0])

        # best-first frontier: most impurity decrease splits first
        heap = []
        counter = 0

        def push(node, idx):
            nonlocal counter
            split = _best_split(X[idx], y[idx], w[idx], num_classes)
            if split is not None:
                gain, feature, threshold = split
                heapq.heappush(heap, (-gain, counter, node, idx, feature, threshold))
                counter += 1

        push(root, rows)
        leaves = 1
        while heap and leaves < max_leaves:
            _, _, node, idx, feature, threshold = heapq.heappop(heap)
            mask = X[idx, feature] <= threshold
            left_idx, right_idx = idx[mask], idx[~mask]
            left = builder.add_leaf(y[left_idx], w[left_idx])
            right = builder.add_leaf(y[right_idx], w[right_idx])
            builder.make_internal(node, feature, threshold, left, right)
            leaves += 1
            push(left, left_idx)
            push(right, right_idx)

        return TreeModel(
            num_classes,
            X.shape[1],
            np.array(builder.feature, dtype=np.int32),
            np.array(builder.threshold, dtype=np.float64),
            np.array(builder.child_left, dtype=np.int32),
            np.array(builder.child_right, dtype=np.int32),
            np.array(builder.leaf_label, dtype=np.int32),
        )

    @staticmethod
    def constant(label, num_classes, X, y) -> TreeModel:
        return TreeModel(
            num_classes,
            X.shape[1],
            np.array([-1], dtype=np.int32),
            np.array([0.0]),
            np.array([-1], dtype=np.int32),
            np.array([-1], dtype=np.int32),
            np.array([label], dtype=np.int32),
        )

    @staticmethod
    def encode(m: TreeModel) -> bytes:
        w = Writer()
        w.u32(m.num_classes).u32(m.n_features).u32(len(m.feature))
        for i in range(len(m.feature)):
            if m.feature[i] < 0:
                w.u8(0).u32(int(m.leaf_label[i]))
            else:
                w.u8(1).u32(int(m.feature[i])).f64(float(m.threshold[i]))
                w.u32(int(m.child_left[i])).u32(int(m.child_right[i]))
        return w.getvalue()

    @staticmethod
    def decode(payload: bytes) -> TreeModel:
        r = Reader(payload, MalformedPayload)
        num_classes = r.u32()
        n_features = r.u32()
        n_nodes = r.u32()
        if n_nodes == 0:
            raise MalformedPayload("tree with zero nodes")
        feature = np.full(n_nodes, -1, dtype=np.int32)
        threshold = np.zeros(n_nodes)
        child_left = np.full(n_nodes, -1, dtype=np.int32)
        child_right = np.full(n_nodes, -1, dtype=np.int32)
        leaf_label = np.full(n_nodes, -1, dtype=np.int32)
        for i in range(n_nodes):
            kind = r.u8()
            if kind == 0:
                leaf_label[i] = r.u32()
            elif kind == 1:
                feature[i] = r.u32()
                threshold[i] = r.f64()
                child_left[i] = r.u32()
                child_right[i] = r.u32()
                if child_left[i] >= n_nodes or child_right[i] >= n_nodes:
                    raise MalformedPayload(f"node {i} points past the node list")
            else:
                raise MalformedPayload(f"bad tree node kind {kind}")
        r.expect_end()
        return TreeModel(num_classes, n_features, feature, threshold,
                         child_left, child_right, leaf_label)


# --- gaussian naive bayes -----------------------------------------------------------


@dataclass(frozen=True)
class GaussianNBModel:
    num_classes: int
    priors: np.ndarray     # (K,) weighted class masses, normalized
    means: np.ndarray      # (K, d)
    variances: np.ndarray  # (K, d), floored

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        check_arity(self.n_features, X.shape[1])
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)  # -inf for locally absent classes
        diff = X[:, None, :] - self.means[None, :, :]  # (m, K, d)
        log_lik = -0.5 * (np.log(2.0 * np.pi * self.variances)[None] + diff ** 2 / self.variances[None])
        return np.argmax(log_prior[None, :] + log_lik.sum(axis=2), axis=1).astype(np.int64)


class _GaussianNBFamily:
    name = "gaussian_nb"
    defaults: dict[str, float] = {}

    @staticmethod
    def validate(hp: dict) -> None:
        pass

    @staticmethod
    def fit(X, y, w, num_classes, hp, seed) -> GaussianNBModel:
        d = X.shape[1]
        masses = _class_masses(y, w, num_classes)
        means = np.zeros((num_classes, d))
        variances = np.ones((num_classes, d))
        for k in range(num_classes):
            mask = y == k
            if masses[k] <= 0.0:
                continue
            wk = w[mask]
            xk = X[mask]
            mu = (wk[:, None] * xk).sum(axis=0) / masses[k]
            var = (wk[:, None] * (xk - mu) ** 2).sum(axis=0) / masses[k]
            means[k] = mu
            variances[k] = np.maximum(var, VARIANCE_FLOOR)
        priors = masses / masses.sum()
        return GaussianNBModel(num_classes, priors, means, variances)

    @staticmethod
    def constant(label, num_classes, X, y) -> GaussianNBModel:
        priors = np.zeros(num_classes)
        priors[label] = 1.0
        d = X.shape[1]
        return GaussianNBModel(num_classes, priors, np.zeros((num_classes, d)),
                               np.ones((num_classes, d)))

    @staticmethod
    def encode(m: GaussianNBModel) -> bytes:
        w = Writer()
        w.u32(m.num_classes).u32(m.n_features)
        w.raw(np.ascontiguousarray(m.priors, "<f8").tobytes())
        w.raw(np.ascontiguousarray(m.means, "<f8").tobytes())
        w.raw(np.ascontiguousarray(m.variances, "<f8").tobytes())
        return w.getvalue()

    @staticmethod
    def decode(payload: bytes) -> GaussianNBModel:
        r = Reader(payload, MalformedPayload)
        num_classes = r.u32()
        d = r.u32()
        priors = np.frombuffer(r.raw(8 * num_classes), "<f8").copy()
        means = np.frombuffer(r.raw(8 * num_classes * d), "<f8").reshape(num_classes, d).copy()
        variances = np.frombuffer(r.raw(8 * num_classes * d), "<f8").reshape(num_classes, d).copy()
        r.expect_end()
        return GaussianNBModel(num_classes, priors, means, variances)


# --- k nearest neighbours ------------------------------------------------------------


@dataclass(frozen=True)
class KnnModel:
    num_classes: int
    k: int
    points: np.ndarray  # (m, d)
    labels: np.ndarray  # (m,)

    @property
    def n_features(self) -> int:
        return self.points.shape[1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        check_arity(self.n_features, X.shape[1])
        k = min(self.k, self.points.shape[0])
        out = np.empty(X.shape[0], dtype=np.int64)
        classes = np.arange(self.num_classes)
        # bound the (rows, stored, features) difference tensor to ~16 MB
        cell = max(1, self.points.shape[0] * self.points.shape[1])
        block = max(1, 2_000_000 // cell)
        for start in range(0, X.shape[0], block):
            chunk = X[start:start + block]
            diff = chunk[:, None, :] - self.points[None, :, :]
            dist = (diff ** 2).sum(axis=2)
            # stable sort: distance ties resolve to the earlier stored point
            neighbours = np.argsort(dist, axis=1, kind="stable")[:, :k]
            votes = self.labels[neighbours]
            counts = (votes[:, :, None] == classes).sum(axis=1)
            out[start:start + block] = np.argmax(counts, axis=1)
        return out


class _KnnFamily:
    name = "knn"
    defaults = {"k": 5}

    @staticmethod
    def validate(hp: dict) -> None:
        if int(hp["k"]) < 1:
            raise UnknownFamily(f"knn k must be >= 1, got {hp['k']}")

    @staticmethod
    def fit(X, y, w, num_classes, hp, seed) -> KnnModel:
        # no native weight support: train on a weighted bootstrap resample
        rng = np.random.Generator(np.random.PCG64(seed))
        p = w / w.sum()
        idx = rng.choice(X.shape[0], size=X.shape[0], replace=True, p=p)
        return KnnModel(num_classes, int(hp["k"]), X[idx].copy(), y[idx].copy())

    @staticmethod
    def constant(label, num_classes, X, y) -> KnnModel:
        return KnnModel(num_classes, 1, X[:1].copy(),
                        np.array([label], dtype=np.int64))

    @staticmethod
    def encode(m: KnnModel) -> bytes:
        w = Writer()
        w.u32(m.num_classes).u32(m.k).u32(m.n_features).u64(m.points.shape[0])
        w.raw(np.ascontiguousarray(m.labels, "<u4").tobytes())
        w.raw(np.ascontiguousarray(m.points, "<f8").tobytes())
        return w.getvalue()

    @staticmethod
    def decode(payload: bytes) -> KnnModel:
        r = Reader(payload, MalformedPayload)
        num_classes = r.u32()
        k = r.u32()
        d = r.u32()
        m = r.u64()
        labels = np.frombuffer(r.raw(4 * m), "<u4").astype(np.int64)
        points = np.frombuffer(r.raw(8 * m * d), "<f8").reshape(m, d).copy()
        r.expect_end()
        return KnnModel(num_classes, k, points, labels)


_FAMILIES = {
    f.name: f for f in (_StumpFamily, _TreeFamily, _GaussianNBFamily, _KnnFamily)
}


# --- uniform interface ------------------------------------------------------------------


def fit_weighted(
    spec: LearnerSpec,
    shard: DatasetShard,
    weights: WeightVector,
    seed: int,
    *,
    origin_id: str = "",
    round_no: int = 0,
) -> WeakModelEnvelope:
    """Fit one weak hypothesis on a shard under per-sample weights.

    Deterministic given (spec, shard, weights, seed). A shard where only one
    class is present yields a constant classifier; only an empty shard is an
    error.
    """
    family = get_family(spec.family_id)
    hp = dict(family.defaults)
    hp.update(spec.hyperparameters)
    family.validate(hp)
    if shard.shard_size == 0:
        raise DegenerateShard("cannot fit on an empty shard")
    if len(weights) != shard.shard_size:
        raise ArityMismatch(
            f"weight vector length {len(weights)} != shard size {shard.shard_size}"
        )

    X, y = shard.features, shard.labels
    w = weights.values / weights.values.max()
    model = family.fit(X, y, w, shard.num_classes, hp, seed)

    # weak-learner floor: never predict worse than the best constant
    masses = _class_masses(y, w, shard.num_classes)
    const_label = int(np.argmax(masses))
    const_error = float(masses.sum() - masses[const_label])
    model_error = float(w[model.predict(X) != y].sum())
    if model_error > const_error:
        model = family.constant(const_label, shard.num_classes, X, y)

    return WeakModelEnvelope(
        spec.family_id, FORMAT_VERSION, family.encode(model), origin_id, round_no
    )


def predict(model, x) -> int:
    """Class id of a single feature row under one weak model."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ArityMismatch("expected a single feature row")
    return int(model.predict(x[None, :])[0])


def encode(model) -> bytes:
    for family in _FAMILIES.values():
        if isinstance(model, _MODEL_TYPES[family.name]):
            return family.encode(model)
    raise UnknownFamily(f"no registered family for model type {type(model).__name__}")


def decode(family_id: str, format_version: int, payload: bytes):
    family = get_family(family_id)
    if format_version != FORMAT_VERSION:
        raise VersionUnsupported(
            f"family {family_id!r} payload version {format_version} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    return family.decode(payload)


_MODEL_TYPES = {
    "stump": Stump,
    "tree": TreeModel,
    "gaussian_nb": GaussianNBModel,
    "knn": KnnModel,
}


@functools.lru_cache(maxsize=16384)
def decode_envelope(envelope: WeakModelEnvelope):
    """Decode with memoization; envelopes are immutable so this is safe."""
    return decode(envelope.family_id, envelope.format_version, envelope.payload)
