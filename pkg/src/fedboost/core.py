"""Domain types shared by every module: shards, envelopes, ensembles, weights.

All types here are immutable after construction and safe to hand between
threads. The canonical envelope byte layout (the unit that is stored and
shipped) is::

    [family_id: u8-length-prefixed UTF-8]
    [format_version: u32 LE]
    [payload length: u64 LE]
    [payload bytes]

The ensemble file format is this envelope layout concatenated behind a
header: magic ``MAFL``, file version u32 LE, term count u64 LE, then per
term an alpha f64 LE followed by one envelope.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .codec import Reader, Writer
from .errors import (
    ArityMismatch,
    EmptyEnsemble,
    LabelOutOfRange,
    MalformedPayload,
    NonFiniteFeature,
    ShapeMismatch,
)

ENSEMBLE_MAGIC = b"MAFL"
ENSEMBLE_FILE_VERSION = 1


def _frozen_array(a, dtype) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DatasetShard:
    """A node-local labelled feature matrix. Rows are samples.

    `features` is (N, d) float64 and `labels` is (N,) integer class ids in
    [0, num_classes). The fingerprint is a stable 64-bit digest of the data,
    used to derive per-round training seeds that do not depend on how
    collaborators happen to be numbered.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    fingerprint: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen_array(self.features, np.float64))
        object.__setattr__(self, "labels", _frozen_array(self.labels, np.int64))
        digest = hashlib.sha256()
        digest.update(self.features.tobytes())
        digest.update(self.labels.tobytes())
        digest.update(int(self.num_classes).to_bytes(4, "little"))
        object.__setattr__(self, "fingerprint", int.from_bytes(digest.digest()[:8], "little"))

    @property
    def shard_size(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def validate_shard(shard: DatasetShard) -> None:
    """Raise a typed error unless every DatasetShard invariant holds."""
    feats, labels = shard.features, shard.labels
    if feats.ndim != 2:
        raise ShapeMismatch(f"features must be 2-D, got {feats.ndim}-D")
    if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
        raise ShapeMismatch(
            f"labels length {labels.shape[0] if labels.ndim == 1 else labels.shape} "
            f"!= feature rows {feats.shape[0]}"
        )
    if shard.num_classes < 2:
        raise ShapeMismatch(f"num_classes must be >= 2, got {shard.num_classes}")
    bad = np.nonzero((labels < 0) | (labels >= shard.num_classes))[0]
    if bad.size:
        row = int(bad[0])
        raise LabelOutOfRange(row, int(labels[row]), shard.num_classes)
    finite = np.isfinite(feats)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise NonFiniteFeature(int(row), int(col))


@dataclass(frozen=True)
class WeakModelEnvelope:
    """A serialized weak hypothesis as it crosses the wire.

    The family payload codec guarantees that decoding yields a model whose
    predictions are bit-identical to the original on any input. `origin_id`
    and `round` are carried alongside the canonical bytes by messages and
    store keys; they are not part of the canonical layout.
    """

    family_id: str
    format_version: int
    payload: bytes
    origin_id: str = ""
    round: int = 0

    def to_bytes(self) -> bytes:
        w = Writer()
        w.pstr(self.family_id)
        w.u32(self.format_version)
        w.u64(len(self.payload))
        w.raw(self.payload)
        return w.getvalue()


def envelope_from_reader(r: Reader, *, origin_id: str = "", round_no: int = 0) -> WeakModelEnvelope:
    family = r.pstr()
    version = r.u32()
    size = r.u64()
    payload = r.raw(size)
    return WeakModelEnvelope(family, version, payload, origin_id, round_no)


def envelope_from_bytes(data: bytes, *, origin_id: str = "", round_no: int = 0) -> WeakModelEnvelope:
    r = Reader(data, MalformedPayload)
    env = envelope_from_reader(r, origin_id=origin_id, round_no=round_no)
    r.expect_end()
    return env


@dataclass(frozen=True)
class StrongHypothesis:
    """The global model: an ordered ensemble of (weak hypothesis, alpha)."""

    terms: tuple[tuple[WeakModelEnvelope, float], ...]
    num_classes: int

    def __len__(self) -> int:
        return len(self.terms)

    def append(self, envelope: WeakModelEnvelope, alpha: float) -> "StrongHypothesis":
        return StrongHypothesis(self.terms + ((envelope, float(alpha)),), self.num_classes)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for _, a in self.terms], dtype=np.float64)


class WeightVector:
    """Per-sample boosting weights held privately by a collaborator.

    The weight of sample k is ``scale * values[k]``. The scale is a factor
    common to the entire federation (it starts as the initial per-sample
    weight and is folded away at the first global-norm division), so every
    ratio computed downstream uses the `values` part only. Keeping the
    common factor symbolic is what makes round decisions bit-identical
    under a rescaling of all initial weights.
    """

    __slots__ = ("values", "scale")

    def __init__(self, values: np.ndarray, scale: float = 1.0):
        self.values = _frozen_array(values, np.float64)
        self.scale = float(scale)

    @property
    def norm(self) -> float:
        """Sum of entries of the scale-free part."""
        return float(np.sum(self.values))

    def __len__(self) -> int:
        return len(self.values)


class ErrorReport:
    """Per-hypothesis weighted errors on one collaborator's local data.

    `errors[j]` is the weight mass of the samples hypothesis j gets wrong
    and `weight_norm` the total weight mass, both in the scale-free parts
    of the collaborator's WeightVector. `mispredictions[j]` is the bitmap
    of wrong samples, cached so the weight update needs no re-inference.
    """

    __slots__ = ("errors", "weight_norm", "mispredictions", "round")

    def __init__(self, errors, weight_norm: float, mispredictions, round_no: int):
        self.errors = _frozen_array(errors, np.float64)
        self.weight_norm = float(weight_norm)
        self.mispredictions = _frozen_array(mispredictions, bool)
        self.round = int(round_no)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ErrorReport):
            return NotImplemented
        return (
            self.round == other.round
            and self.weight_norm == other.weight_norm
            and np.array_equal(self.errors, other.errors)
            and np.array_equal(self.mispredictions, other.mispredictions)
        )


@dataclass(frozen=True)
class RoundDecision:
    """Aggregator verdict for one round: best hypothesis index and alpha."""

    best_index: int
    alpha: float
    global_error: float
    global_norm: float
    round: int


@dataclass(frozen=True)
class FederationConfig:
    num_collaborators: int
    rounds: int
    mode: str  # "adaboost_f" | "bagging"
    learner: "LearnerSpec"
    seed: int


def derive_round_seed(seed: int, round_no: int, shard: DatasetShard) -> int:
    """Per-(seed, round, data) training seed, independent of node numbering."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, round_no, shard.fingerprint])
    lo, hi = ss.generate_state(2)
    return int(lo) | (int(hi) << 32)


# --- strong-hypothesis prediction -------------------------------------------


def _decoded_terms(h: StrongHypothesis):
    from . import learners  # local import: learners depends on core types

    return [(learners.decode_envelope(env), alpha) for env, alpha in h.terms]


def predict_strong_batch(h: StrongHypothesis, X: np.ndarray) -> np.ndarray:
    """Weighted plurality vote of the ensemble over a feature matrix."""
    if len(h.terms) == 0:
        raise EmptyEnsemble("cannot predict with an empty ensemble")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch("expected a 2-D feature matrix")
    acc = VoteAccumulator(X, h.num_classes)
    for model, alpha in _decoded_terms(h):
        acc.add(model, alpha)
    return acc.labels()


def predict_strong(h: StrongHypothesis, x) -> int:
    """Class id for one feature row: argmax_y sum_t alpha_t [h_t(x) = y].

    Vote ties break toward the smallest class id.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("expected a single feature row")
    return int(predict_strong_batch(h, x[None, :])[0])


class VoteAccumulator:
    """Running weighted vote of a growing ensemble on a fixed matrix.

    Appending a term costs one weak-model prediction pass, so evaluating
    the ensemble after every federated round stays O(rounds) overall
    instead of O(rounds^2).
    """

    def __init__(self, X: np.ndarray, num_classes: int):
        self._X = np.ascontiguousarray(X, dtype=np.float64)
        self._votes = np.zeros((self._X.shape[0], num_classes), dtype=np.float64)
        self._rows = np.arange(self._X.shape[0])

    @property
    def num_classes(self) -> int:
        return self._votes.shape[1]

    def add(self, model, alpha: float) -> None:
        if model.num_classes > self._votes.shape[1]:
            extra = model.num_classes - self._votes.shape[1]
            self._votes = np.pad(self._votes, ((0, 0), (0, extra)))
        self._votes[self._rows, model.predict(self._X)] += alpha

    def labels(self) -> np.ndarray:
        return np.argmax(self._votes, axis=1)


# --- ensemble file I/O --------------------------------------------------------


def save_ensemble(path, h: StrongHypothesis) -> None:
    w = Writer()
    w.raw(ENSEMBLE_MAGIC)
    w.u32(ENSEMBLE_FILE_VERSION)
    w.u64(len(h.terms))
    for env, alpha in h.terms:
        w.f64(alpha)
        w.raw(env.to_bytes())
    with open(path, "wb") as f:
        f.write(w.getvalue())


def load_ensemble(path) -> StrongHypothesis:
    from . import learners

    with open(path, "rb") as f:
        r = Reader(f.read(), MalformedPayload)
    if r.raw(4) != ENSEMBLE_MAGIC:
        raise MalformedPayload("bad magic bytes")
    version = r.u32()
    if version != ENSEMBLE_FILE_VERSION:
        raise MalformedPayload(f"unsupported ensemble file version {version}")
    count = r.u64()
    terms = []
    num_classes = 2
    for _ in range(count):
        alpha = r.f64()
        env = envelope_from_reader(r)
        terms.append((env, alpha))
        num_classes = max(num_classes, learners.decode_envelope(env).num_classes)
    r.expect_end()
    if not terms:
        raise EmptyEnsemble("ensemble file holds no terms")
    return StrongHypothesis(tuple(terms), num_classes)


def check_arity(n_features_expected: int | None, x_features: int) -> None:
    if n_features_expected is not None and n_features_expected != x_features:
        raise ArityMismatch(
            f"model expects {n_features_expected} features, input has {x_features}"
        )
