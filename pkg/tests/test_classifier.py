import json

import numpy as np
import pytest

from mrccg import cg, classifier, datasets, featmap
from mrccg.errors import DataError
from mrccg.sparsevec import SparseVector

from conftest import make_instance


def hand_model(nu=1.0, scaler=None):
    """d=2, K=2 identity model: score_0 = x_0, score_1 = 0.5 * x_1."""
    fmap = featmap.FeatureMap(featmap.identity_map(2), 2)
    mu = SparseVector(4, [0, 3], [1.0, 0.5])
    return classifier.MrcModel(mu=mu, selected=np.array([0, 3]), nu=nu,
                               r_star=0.25, fmap=fmap, scaler=scaler)


def trained(seed, **kw):
    data, fmap, _, _ = make_instance(seed)
    model, _ = cg.train(data, fmap, cg.CgConfig(n_max=6, init_size=3,
                                                k_max=60, **kw))
    return data, model


class TestHandExamples:
    def test_scores(self):
        model = hand_model()
        np.testing.assert_allclose(
            classifier.decision_scores(model, [2.0, 2.0]), [2.0, 1.0])
        got = classifier.decision_scores(model, [[2.0, 2.0], [0.0, -4.0]])
        np.testing.assert_allclose(got, [[2.0, 1.0], [0.0, -2.0]])

    def test_proba(self):
        model = hand_model()  # threshold nu - 1 = 0
        np.testing.assert_allclose(
            classifier.predict_proba(model, [2.0, 2.0]), [2 / 3, 1 / 3])

    def test_uniform_fallback(self):
        model = hand_model()
        h = classifier.predict_proba(model, [-1.0, -1.0])
        np.testing.assert_allclose(h, [0.5, 0.5])
        # Deterministic rule still ranks the raw scores.
        assert classifier.predict(model, [-1.0, -1.0]) == 1

    def test_threshold_shifts_proba(self):
        h = classifier.predict_proba(hand_model(nu=1.5), [2.0, 2.0])
        np.testing.assert_allclose(h, [1.5 / 2.0, 0.5 / 2.0])

    def test_tie_breaks_to_smaller_label(self):
        model = hand_model()
        assert classifier.predict(model, [0.0, 0.0]) == 0
        assert classifier.predict(model, [1.0, 2.0]) == 0

    def test_single_vs_batch_types(self):
        model = hand_model()
        assert isinstance(classifier.predict(model, [1.0, 0.0]), int)
        batch = classifier.predict(model, [[1.0, 0.0]])
        assert batch.shape == (1,) and batch.dtype == np.int64

    def test_scaler_applied_once(self):
        scaler = datasets.ScalerParams(np.array([1.0, 2.0]),
                                       np.array([2.0, 4.0]),
                                       np.array([False, False]))
        model = hand_model(scaler=scaler)
        x = np.array([3.0, 10.0])
        manual = (x - scaler.mean) / scaler.std
        np.testing.assert_allclose(
            classifier.decision_scores(model, x),
            [manual[0], 0.5 * manual[1]])
        # predict_proba must not rescale a second time.
        pos = np.maximum([manual[0], 0.5 * manual[1]], 0.0)
        np.testing.assert_allclose(classifier.predict_proba(model, x),
                                   pos / pos.sum())

    def test_bad_width_rejected(self):
        with pytest.raises(DataError, match="input features"):
            classifier.predict(hand_model(), [1.0, 2.0, 3.0])


class TestTrainedModels:
    @pytest.mark.parametrize("seed", range(8))
    def test_proba_rows_are_distributions(self, seed):
        data, model = trained(1000 + seed)
        h = classifier.predict_proba(model, data.instances)
        assert h.shape == (data.n, data.n_classes)
        assert np.all(h >= 0)
        np.testing.assert_allclose(h.sum(axis=1), 1.0, atol=1e-12)

    def test_single_matches_batch_row(self):
        data, model = trained(1010)
        h = classifier.predict_proba(model, data.instances)
        p = classifier.predict(model, data.instances)
        for i in range(min(4, data.n)):
            # BLAS takes a different path for one row than for a batch, so
            # agreement is numerical, not bitwise.
            np.testing.assert_allclose(
                classifier.predict_proba(model, data.instances[i]), h[i],
                rtol=0, atol=1e-14)
            assert classifier.predict(model, data.instances[i]) == p[i]

    def test_scores_match_block_dot_oracle(self):
        data, model = trained(1011)
        dense_mu = model.mu.to_dense()
        got = classifier.decision_scores(model, data.instances)
        for i in range(data.n):
            for y in range(data.n_classes):
                ref = featmap.phi(model.fmap, data.instances[i],
                                  y).to_dense() @ dense_mu
                assert got[i, y] == pytest.approx(ref, abs=1e-12)

    def test_empirical_error_consistency(self):
        data, model = trained(1012)
        det, loss = classifier.empirical_error(model, data)
        h = classifier.predict_proba(model, data.instances)
        ref_loss = 1.0 - h[np.arange(data.n), data.labels].mean()
        assert loss == pytest.approx(ref_loss, abs=1e-12)
        assert 0.0 <= det <= 1.0
        assert det <= 2.0 * loss + 1e-9

    def test_sample_labels(self):
        data, model = trained(1013)
        a = classifier.sample_labels(model, data.instances, rng=7)
        b = classifier.sample_labels(model, data.instances,
                                     rng=np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (data.n,)
        assert np.all((0 <= a) & (a < data.n_classes))

    def test_sample_labels_frequencies(self):
        model = hand_model()
        X = np.tile([2.0, 2.0], (20000, 1))  # h = (2/3, 1/3) every row
        draws = classifier.sample_labels(model, X, rng=3)
        assert np.mean(draws == 1) == pytest.approx(1 / 3, abs=0.02)


class TestRiskBound:
    def test_exact_mean_recovers_r_minus_lam(self):
        data, model = trained(1020)
        sel = model.selected
        e = model.stats.tau[sel]
        want = model.r_star - model.stats.lam[sel] @ np.abs(
            model.mu.restrict(sel))
        assert classifier.risk_bound_rhs(model, e) == pytest.approx(
            want, abs=1e-12)

    def test_box_edge_recovers_r(self):
        data, model = trained(1021)
        sel = model.selected
        e = model.stats.tau[sel] + model.stats.lam[sel]
        assert classifier.risk_bound_rhs(model, e) == pytest.approx(
            model.r_star, abs=1e-12)

    def test_requires_stats(self, tmp_path):
        _, model = trained(1022)
        path = tmp_path / "m.json"
        classifier.save_model(model, path)
        loaded = classifier.load_model(path)
        with pytest.raises(ValueError, match="statistics"):
            classifier.risk_bound_rhs(loaded, np.zeros(loaded.selected.size))

    def test_shape_checked(self):
        _, model = trained(1023)
        with pytest.raises(ValueError, match="expectation"):
            classifier.risk_bound_rhs(model, np.zeros(model.selected.size + 1))


class TestSerialization:
    def test_round_trip_identity(self, tmp_path):
        data, model = trained(1030)
        path = tmp_path / "model.json"
        classifier.save_model(model, path)
        loaded = classifier.load_model(path)
        assert loaded.r_star == model.r_star
        assert loaded.nu == model.nu
        np.testing.assert_array_equal(loaded.selected, model.selected)
        np.testing.assert_array_equal(loaded.mu.indices, model.mu.indices)
        np.testing.assert_array_equal(loaded.mu.values, model.mu.values)
        assert loaded.label_values == model.label_values
        np.testing.assert_array_equal(
            classifier.predict_proba(loaded, data.instances),
            classifier.predict_proba(model, data.instances))

    def test_round_trip_rff_and_scaler(self, tmp_path):
        rng = np.random.default_rng(42)
        data = datasets.synthetic_gaussian(20, 3, 2, seed=9)
        scaled, scaler = datasets.standardize(data)
        imap = featmap.rff_fit(3, 8, gamma=0.7, seed=11)
        fmap = featmap.FeatureMap(imap, 2)
        model, _ = cg.train(scaled, fmap, cg.CgConfig(n_max=5, k_max=40))
        model.scaler = scaler
        model.standardized = True
        path = tmp_path / "model.json"
        classifier.save_model(model, path)
        loaded = classifier.load_model(path)
        np.testing.assert_array_equal(loaded.fmap.instance_map.freq,
                                      imap.freq)
        assert loaded.standardized
        np.testing.assert_array_equal(loaded.scaler.mean, scaler.mean)
        np.testing.assert_array_equal(loaded.scaler.std, scaler.std)
        X = rng.normal(size=(7, 3))
        np.testing.assert_array_equal(classifier.predict(loaded, X),
                                      classifier.predict(model, X))
        np.testing.assert_array_equal(
            classifier.predict_proba(loaded, X),
            classifier.predict_proba(model, X))

    def test_trace_becomes_dict_rows(self, tmp_path):
        _, model = trained(1031)
        path = tmp_path / "model.json"
        classifier.save_model(model, path)
        loaded = classifier.load_model(path)
        assert isinstance(loaded.trace, list)
        assert loaded.trace[0]["k"] == 1
        assert loaded.trace[-1]["r"] == model.r_star
        # A re-save of the loaded model keeps the dict rows as they are.
        classifier.save_model(loaded, path)
        assert classifier.load_model(path).trace == loaded.trace

    def test_rejects_non_json(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("not json at all{")
        with pytest.raises(DataError, match="JSON"):
            classifier.load_model(path)

    def test_rejects_wrong_format_and_version(self, tmp_path):
        _, model = trained(1032)
        path = tmp_path / "model.json"
        classifier.save_model(model, path)
        doc = json.loads(path.read_text())
        bad = dict(doc, format="something-else")
        path.write_text(json.dumps(bad))
        with pytest.raises(DataError, match="not a model file"):
            classifier.load_model(path)
        bad = dict(doc, version=99)
        path.write_text(json.dumps(bad))
        with pytest.raises(DataError, match="version"):
            classifier.load_model(path)

    def test_rejects_out_of_range_r(self, tmp_path):
        _, model = trained(1033)
        path = tmp_path / "model.json"
        classifier.save_model(model, path)
        doc = json.loads(path.read_text())
        doc["r_star"] = 0.9  # past 1 - 1/K for K = 2
        if model.n_classes > 2:
            doc["r_star"] = 1.2
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="r_star"):
            classifier.load_model(path)

    def test_rejects_support_outside_selected(self, tmp_path):
        _, model = trained(1034)
        path = tmp_path / "model.json"
        classifier.save_model(model, path)
        doc = json.loads(path.read_text())
        doc["selected"] = doc["mu_indices"][1:]
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="support"):
            classifier.load_model(path)


class TestModelValidation:
    def test_dim_mismatch(self):
        fmap = featmap.FeatureMap(featmap.identity_map(2), 2)
        with pytest.raises(DataError, match="dimension"):
            classifier.MrcModel(mu=SparseVector(3, [0], [1.0]),
                                selected=np.array([0]), nu=1.0, r_star=0.1,
                                fmap=fmap)

    def test_support_outside_selected(self):
        fmap = featmap.FeatureMap(featmap.identity_map(2), 2)
        with pytest.raises(DataError, match="support"):
            classifier.MrcModel(mu=SparseVector(4, [0, 1], [1.0, 1.0]),
                                selected=np.array([0]), nu=1.0, r_star=0.1,
                                fmap=fmap)

    def test_threshold_property(self):
        assert hand_model(nu=1.25).phi_threshold == 0.25
