import numpy as np
import pytest

from fedboost.core import (
    DatasetShard,
    StrongHypothesis,
    WeakModelEnvelope,
    WeightVector,
    envelope_from_bytes,
    load_ensemble,
    predict_strong,
    predict_strong_batch,
    save_ensemble,
    validate_shard,
)
from fedboost.data import make_blobs
from fedboost.errors import (
    ArityMismatch,
    EmptyEnsemble,
    LabelOutOfRange,
    MalformedPayload,
    NonFiniteFeature,
    ShapeMismatch,
)
from fedboost.learners import (
    FORMAT_VERSION,
    Stump,
    decode_envelope,
    fit_weighted,
    resolve_spec,
)


def const_env(label, num_classes=2):
    from fedboost.learners import _StumpFamily

    payload = _StumpFamily.encode(Stump.constant(label, num_classes))
    return WeakModelEnvelope("stump", FORMAT_VERSION, payload)


class TestValidateShard:
    def test_minimal_well_formed(self):
        shard = DatasetShard(np.zeros((3, 2)), np.array([0, 1, 0]), 2)
        validate_shard(shard)  # does not raise

    def test_label_out_of_range_names_row(self):
        shard = DatasetShard(np.zeros((3, 2)), np.array([0, 2, 0]), 2)
        with pytest.raises(LabelOutOfRange) as err:
            validate_shard(shard)
        assert err.value.row == 1

    def test_non_finite_feature_names_cell(self):
        features = np.zeros((3, 2))
        features[1, 1] = np.nan
        with pytest.raises(NonFiniteFeature) as err:
            validate_shard(DatasetShard(features, np.array([0, 1, 0]), 2))
        assert (err.value.row, err.value.col) == (1, 1)

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            validate_shard(DatasetShard(np.zeros((3, 2)), np.array([0, 1]), 2))

    def test_single_class_count_rejected(self):
        with pytest.raises(ShapeMismatch):
            validate_shard(DatasetShard(np.zeros((2, 1)), np.array([0, 0]), 1))


class TestPredictStrong:
    def test_single_term(self):
        h = StrongHypothesis(((const_env(1), 0.7),), 2)
        assert predict_strong(h, np.array([4.2])) == 1

    def test_tie_breaks_to_smallest_class(self):
        h = StrongHypothesis(((const_env(1), 0.5), (const_env(0), 0.5)), 2)
        assert predict_strong(h, np.array([0.0])) == 0

    def test_vote_matches_brute_force_tally(self, rng):
        # oracle: per-sample dict tally over decoded weak model outputs
        shard = make_blobs(20, 3, 4, seed=9)
        terms = []
        for seed in (1, 2, 3):
            sub = make_blobs(30, 3, 4, seed=seed)
            env = fit_weighted(resolve_spec("stump"), sub, WeightVector(np.ones(30)), seed)
            terms.append((env, float(rng.uniform(0.2, 2.0))))
        h = StrongHypothesis(tuple(terms), 3)

        expected = []
        for x in shard.features:
            votes = {c: 0.0 for c in range(3)}
            for env, alpha in terms:
                model = decode_envelope(env)
                votes[int(model.predict(x[None, :])[0])] += alpha
            best = max(votes.values())
            expected.append(min(c for c, v in votes.items() if v == best))
        assert predict_strong_batch(h, shard.features).tolist() == expected

    def test_invariant_under_uniform_alpha_scaling(self):
        shard = make_blobs(25, 3, 4, seed=4)
        env = fit_weighted(resolve_spec("stump"), shard, WeightVector(np.ones(25)), 0)
        base = StrongHypothesis(((env, 0.3), (const_env(2, 3), 0.9)), 3)
        for lam in (1e-3, 7.0, 1e3):
            scaled = StrongHypothesis(
                tuple((e, a * lam) for e, a in base.terms), 3)
            assert np.array_equal(
                predict_strong_batch(base, shard.features),
                predict_strong_batch(scaled, shard.features),
            )

    def test_empty_ensemble(self):
        with pytest.raises(EmptyEnsemble):
            predict_strong(StrongHypothesis((), 2), np.array([1.0]))

    def test_arity_mismatch(self):
        shard = make_blobs(30, 2, 3, seed=1)
        env = fit_weighted(resolve_spec("tree"), shard, WeightVector(np.ones(30)), 1)
        h = StrongHypothesis(((env, 1.0),), 2)
        with pytest.raises(ArityMismatch):
            predict_strong(h, np.zeros(5))


class TestEnvelopeCodec:
    def test_canonical_byte_layout(self):
        env = WeakModelEnvelope("stump", 1, b"\xaa\xbb")
        raw = env.to_bytes()
        assert raw == b"\x05stump" + (1).to_bytes(4, "little") + (2).to_bytes(8, "little") + b"\xaa\xbb"
        assert envelope_from_bytes(raw) == env

    def test_truncated_envelope(self):
        raw = WeakModelEnvelope("stump", 1, b"\xaa\xbb").to_bytes()
        with pytest.raises(MalformedPayload):
            envelope_from_bytes(raw[:-1])

    def test_round_trip_preserves_predictions_for_every_family(self):
        # 1000 random models across the registered families, 100 inputs each
        rng = np.random.default_rng(77)
        per_family = 250
        for family in ("stump", "tree", "gaussian_nb", "knn"):
            spec = resolve_spec(family)
            for i in range(per_family):
                n = int(rng.integers(5, 40))
                k = int(rng.integers(2, 5))
                d = int(rng.integers(1, 6))
                shard = DatasetShard(
                    rng.normal(size=(n, d)), rng.integers(0, k, size=n), k)
                weights = WeightVector(rng.uniform(0.1, 2.0, size=n))
                env = fit_weighted(spec, shard, weights, seed=i)
                model = decode_envelope(env)
                clone = decode_envelope(envelope_from_bytes(env.to_bytes()))
                probe = rng.normal(size=(100, d))
                assert np.array_equal(model.predict(probe), clone.predict(probe))


class TestEnsembleFile:
    def test_save_load_round_trip(self, tmp_path):
        shard = make_blobs(40, 3, 4, seed=2)
        terms = []
        for seed in range(3):
            env = fit_weighted(resolve_spec("tree"), shard, WeightVector(np.ones(40)), seed)
            terms.append((env, 0.5 + seed))
        h = StrongHypothesis(tuple(terms), 3)
        path = tmp_path / "model.ensemble"
        save_ensemble(path, h)
        loaded = load_ensemble(path)
        assert loaded.alphas.tolist() == h.alphas.tolist()
        assert np.array_equal(
            predict_strong_batch(loaded, shard.features),
            predict_strong_batch(h, shard.features),
        )
        assert path.read_bytes()[:4] == b"MAFL"

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ensemble"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(MalformedPayload):
            load_ensemble(path)


class TestWeightVector:
    def test_norm_is_sum_of_entries(self, rng):
        values = rng.uniform(0.01, 5.0, size=333)
        wv = WeightVector(values)
        assert wv.norm == pytest.approx(float(values.sum()), rel=1e-12)

    def test_shard_fingerprint_tracks_content(self):
        a = DatasetShard(np.ones((4, 2)), np.array([0, 1, 0, 1]), 2)
        b = DatasetShard(np.ones((4, 2)), np.array([0, 1, 0, 1]), 2)
        c = DatasetShard(np.ones((4, 2)) * 2, np.array([0, 1, 0, 1]), 2)
        assert a.fingerprint == b.fingerprint
        assert a.fingerprint != c.fingerprint
