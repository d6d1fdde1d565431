"""Fusion head and whole-model behavior: hand cases, a frozen golden user,
the placeholder path for zero-mapping users, persistence round trips, and
an end-to-end gradient audit."""

from __future__ import annotations

import numpy as np
import pytest

from hankit.classifier import (
    HanModel,
    ModelFormatError,
    Prediction,
    cross_entropy,
    forward,
    forward_user,
    init_classifier,
    init_model,
    load_model,
    predict_record,
    predict_user,
    save_model,
)
from hankit.data import UserRecord
from hankit.errors import EmptyUserError
from hankit.tensor import Binding, Tensor, finite_diff_check

from conftest import ref_predict

# Frozen golden user: d=8, model seed 7, inputs from default_rng(2024),
# verified against the plain-numpy reference at 2e-16 before freezing.
GOLDEN_PROBS = [0.10673032813459143, 0.8932696718654086]
GOLDEN_LOSS = 0.11286675952189017
GOLDEN_TRACE_T1 = [0.03033499804853851, 0.10659215724125864, 0.8630728447102027]
GOLDEN_NULL_PROBS = [0.4408120302969947, 0.5591879697030053]


def golden_inputs():
    rng = np.random.default_rng(2024)
    tweets = rng.normal(size=(3, 8)).round(3)
    mcms = rng.normal(size=(2, 8)).round(3)
    return tweets, mcms


class TestHead:
    def test_zero_params_give_even_split(self):
        clf = init_classifier(4, seed=0)
        for p in clf.params():
            p.data[...] = 0.0
        probs = forward(Tensor(np.ones(2)), Tensor(np.ones(2)), clf, Binding(clf.params()))
        np.testing.assert_array_equal(probs.data, [0.5, 0.5])

    def test_final_bias_sets_odds(self):
        clf = init_classifier(2, seed=0)
        for p in clf.params():
            p.data[...] = 0.0
        clf.b3.data[...] = [np.log(3.0), 0.0]
        probs = forward(Tensor(np.ones(1)), Tensor(np.ones(1)), clf, Binding(clf.params()))
        np.testing.assert_allclose(probs.data, [0.75, 0.25], atol=1e-12)

    def test_width_mismatch(self):
        clf = init_classifier(4, seed=0)
        from hankit.tensor import DimensionError

        with pytest.raises(DimensionError):
            forward(Tensor(np.ones(3)), Tensor(np.ones(3)), clf, Binding(clf.params()))

    def test_ablated_head_takes_single_branch(self):
        clf = init_classifier(5, seed=1)
        probs = forward(Tensor(np.ones(5)), None, clf, Binding(clf.params()))
        assert probs.data.shape == (2,)
        assert abs(probs.data.sum() - 1.0) < 1e-12

    def test_cross_entropy_rejects_bad_label(self):
        clf = init_classifier(2, seed=0)
        probs = forward(Tensor(np.ones(1)), Tensor(np.ones(1)), clf, Binding(clf.params()))
        for y in (-1, 2):
            with pytest.raises(ValueError):
                cross_entropy(probs, y)


class TestPredictUser:
    def test_golden_user(self):
        model = init_model(d=8, num_layers=2, seed=7)
        tweets, mcms = golden_inputs()
        pred, trace_t, trace_c = predict_user(model, tweets, None, mcms, None, label=1)
        np.testing.assert_allclose(pred.probs, GOLDEN_PROBS, atol=1e-9)
        np.testing.assert_allclose(trace_t.weights[1], GOLDEN_TRACE_T1, atol=1e-9)
        assert pred.label == 1
        assert abs(pred.loss - GOLDEN_LOSS) < 1e-9
        assert trace_c is not None and trace_c.mask.shape == (2,)

    def test_golden_null_mcm_path(self):
        model = init_model(d=8, num_layers=2, seed=7)
        tweets, _ = golden_inputs()
        pred, _, trace_c = predict_user(model, tweets)
        np.testing.assert_allclose(pred.probs, GOLDEN_NULL_PROBS, atol=1e-9)
        np.testing.assert_array_equal(trace_c.mask, [True])
        np.testing.assert_array_equal(trace_c.weights[0], [1.0])

    def test_agrees_with_reference(self):
        for seed in range(5):
            model = init_model(d=6, num_layers=2, seed=seed)
            rng = np.random.default_rng(100 + seed)
            tweets = rng.normal(size=(4, 6))
            mcms = rng.normal(size=(3, 6))
            pred, _, _ = predict_user(model, tweets, None, mcms, None)
            np.testing.assert_allclose(pred.probs, ref_predict(model, tweets, mcms), atol=1e-12)

    def test_probs_sum_to_one(self):
        model = init_model(d=4, num_layers=1, seed=3)
        pred, _, _ = predict_user(model, np.random.default_rng(0).normal(size=(2, 4)))
        assert abs(pred.probs.sum() - 1.0) < 1e-12

    def test_tie_resolves_to_zero(self):
        model = init_model(d=4, num_layers=1, seed=0)
        for p in model.parameters():
            p.data[...] = 0.0
        pred, _, _ = predict_user(model, np.ones((2, 4)))
        np.testing.assert_array_equal(pred.probs, [0.5, 0.5])
        assert pred.label == 0

    def test_tweet_order_does_not_matter(self):
        model = init_model(d=8, num_layers=2, seed=11)
        rng = np.random.default_rng(12)
        tweets = rng.normal(size=(5, 8))
        base, _, _ = predict_user(model, tweets)
        perm, _, _ = predict_user(model, tweets[::-1].copy())
        np.testing.assert_allclose(perm.probs, base.probs, atol=1e-10)

    def test_no_tweets_rejected(self):
        model = init_model(d=4, num_layers=1, seed=0)
        with pytest.raises(EmptyUserError):
            predict_user(model, np.zeros((0, 4)))

    def test_repeat_is_bit_identical(self):
        model = init_model(d=8, num_layers=2, seed=5)
        tweets = np.random.default_rng(6).normal(size=(3, 8))
        a, _, _ = predict_user(model, tweets)
        b, _, _ = predict_user(model, tweets)
        np.testing.assert_array_equal(a.probs, b.probs)

    def test_loss_none_without_label(self):
        model = init_model(d=4, num_layers=1, seed=0)
        pred, _, _ = predict_user(model, np.ones((1, 4)))
        assert pred.loss is None

    def test_ablated_model_ignores_mcms(self):
        model = init_model(d=8, num_layers=2, seed=7, ablate_mcm=True)
        tweets, mcms = golden_inputs()
        with_mcms, _, trace_c = predict_user(model, tweets, None, mcms, None)
        without, _, _ = predict_user(model, tweets)
        np.testing.assert_array_equal(with_mcms.probs, without.probs)
        assert trace_c is None

    def test_ablated_param_names_have_no_mcm(self):
        model = init_model(d=4, num_layers=1, seed=0, ablate_mcm=True)
        names = [p.name for p in model.parameters()]
        assert not any(n.startswith("mcm.") or n == "null_mcm" for n in names)
        assert model.clf.in_width == 4

    def test_full_param_order_stable(self):
        model = init_model(d=4, num_layers=1, seed=0)
        names = [p.name for p in model.parameters()]
        assert names[0] == "tweet.v0"
        assert names.index("null_mcm") == names.index("clf.w1") - 1
        assert len(names) == len(set(names))


class TestPredictRecord:
    def test_cap_truncates_both_branches(self):
        model = init_model(d=4, num_layers=1, seed=0, cap=3)
        rng = np.random.default_rng(1)
        rec = UserRecord(
            user_id="u", label=1,
            tweets=["t"] * 6, tweet_emb=rng.normal(size=(6, 4)),
            mcms=["m"] * 5, mcm_emb=rng.normal(size=(5, 4)),
        )
        _, trace_t, trace_c = predict_record(model, rec)
        assert trace_t.mask.shape == (3,)
        assert trace_c.mask.shape == (3,)

    def test_matches_predict_user_under_cap(self):
        model = init_model(d=4, num_layers=1, seed=2, cap=200)
        rng = np.random.default_rng(3)
        rec = UserRecord(
            user_id="u", label=0,
            tweets=["a", "b"], tweet_emb=rng.normal(size=(2, 4)),
            mcms=[], mcm_emb=np.zeros((0, 4)),
        )
        via_record, _, _ = predict_record(model, rec)
        direct, _, _ = predict_user(model, rec.tweet_emb, label=0)
        np.testing.assert_array_equal(via_record.probs, direct.probs)
        assert via_record.loss == direct.loss


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        model = init_model(d=8, num_layers=2, seed=7, cap=50)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert (loaded.d, loaded.num_layers, loaded.cap, loaded.ablate_mcm) == (8, 2, 50, False)
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert a.name == b.name
            np.testing.assert_array_equal(a.data, b.data)
        tweets, mcms = golden_inputs()
        pa, _, _ = predict_user(model, tweets, None, mcms, None)
        pb, _, _ = predict_user(loaded, tweets, None, mcms, None)
        np.testing.assert_array_equal(pa.probs, pb.probs)

    def test_save_is_deterministic(self, tmp_path):
        model = init_model(d=4, num_layers=1, seed=9)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_ablated_round_trip(self, tmp_path):
        model = init_model(d=4, num_layers=1, seed=1, ablate_mcm=True)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.ablate_mcm and loaded.mcm_encoder is None and loaded.null_mcm is None

    def test_rejects_wrong_format(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"format": "something-else", "version": 1}')
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_rejects_tampered_shape(self, tmp_path):
        model = init_model(d=4, num_layers=1, seed=0)
        path = tmp_path / "model.json"
        save_model(model, path)
        doc = path.read_text().replace('"shape":[4,4]', '"shape":[4,5]', 1)
        path.write_text(doc)
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_rejects_non_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("not json at all")
        with pytest.raises(ModelFormatError):
            load_model(path)


class TestModelGradients:
    def test_whole_model_finite_difference(self):
        model = init_model(d=6, num_layers=2, seed=30)
        rng = np.random.default_rng(31)
        tweets = rng.normal(size=(3, 6))
        mcms = rng.normal(size=(2, 6))

        def build(binding):
            probs, _, _ = forward_user(
                model, binding, tweets, np.ones(3, dtype=bool), mcms, np.ones(2, dtype=bool)
            )
            return cross_entropy(probs, 1)

        err = finite_diff_check(build, model.parameters(), eps=1e-5)
        assert err <= 1e-4, f"max relative gradient error {err}"

    def test_null_mcm_receives_gradient(self):
        model = init_model(d=4, num_layers=1, seed=32)
        tweets = np.random.default_rng(33).normal(size=(2, 4))

        def build(binding):
            probs, _, _ = forward_user(
                model, binding, tweets, np.ones(2, dtype=bool), np.zeros((0, 4)), np.zeros(0, dtype=bool)
            )
            return cross_entropy(probs, 0)

        err = finite_diff_check(build, model.parameters(), eps=1e-5)
        assert err <= 1e-4, f"max relative gradient error {err}"
