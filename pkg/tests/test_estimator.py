"""scikit-learn facade: estimator contract, fitting, prediction."""

import numpy as np
import numpy.testing as npt
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import epiconv as ec
from epiconv import HistoneCNNClassifier

from conftest import SMALL_SPEC


def _small_clf(**overrides):
    kwargs = dict(
        kernel=5, filters=8, pool=5, hidden=(32, 16), dropout=0.25,
        lr=0.01, epochs=5, batch=1, random_state=3,
    )
    kwargs.update(overrides)
    return HistoneCNNClassifier(**kwargs)


@pytest.fixture(scope="module")
def arrays():
    ds = ec.discretize_expression(ec.generate_synthetic(SMALL_SPEC))
    X, y = ds.to_arrays()
    return X, y


class TestSklearnContract:
    def test_get_params_round_trip(self):
        clf = _small_clf()
        params = clf.get_params()
        assert params["kernel"] == 5
        assert params["hidden"] == (32, 16)
        assert params["n_marks"] is None
        assert params["validation_fraction"] == 0.1
        rebuilt = HistoneCNNClassifier(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        clf = _small_clf()
        clf.set_params(lr=0.5, epochs=2)
        assert clf.lr == 0.5
        assert clf.epochs == 2

    def test_clone_preserves_settings(self):
        clf = _small_clf(log1p=True)
        copy = clone(clf)
        assert copy.get_params() == clf.get_params()

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            _small_clf().predict(np.zeros((2, 5, 40)))


class TestFit:
    def test_fit_returns_self_and_sets_attributes(self, arrays):
        X, y = arrays
        clf = _small_clf(epochs=2)
        assert clf.fit(X, y) is clf
        npt.assert_array_equal(clf.classes_, [-1, 1])
        assert clf.n_features_in_ == 5 * 40
        assert clf.model_.hyper.n_marks == 5
        assert len(clf.history_) == 2

    def test_learns_planted_data(self, arrays):
        X, y = arrays
        clf = _small_clf(validation_fraction=0.0).fit(X, y)
        accuracy = (clf.predict(X) == y).mean()
        assert accuracy >= 0.95

    def test_internal_validation_split(self, arrays):
        X, y = arrays
        clf = _small_clf(epochs=2, validation_fraction=0.2).fit(X, y)
        assert clf.model_.best_val_auc is not None
        assert all(r.val_auc is not None for r in clf.history_)

    def test_no_validation(self, arrays):
        X, y = arrays
        clf = _small_clf(epochs=2, validation_fraction=0.0).fit(X, y)
        assert clf.model_.best_val_auc is None
        assert clf.model_.selected_epoch == 2

    def test_explicit_validation_data(self, arrays):
        X, y = arrays
        clf = _small_clf(epochs=2)
        clf.fit(X[:160], y[:160], validation_data=(X[160:], y[160:]))
        assert clf.model_.best_val_auc is not None

    def test_single_class_validation_slice_warns(self, arrays):
        X, _ = arrays
        n = 20
        order = np.random.default_rng(3).permutation(n)
        y = np.ones(n, dtype=np.int64)
        # make every sample outside the validation slice carry both classes
        y[order[2:11]] = -1
        assert np.unique(y[order[:2]]).size == 1
        clf = _small_clf(epochs=1, validation_fraction=0.1)
        with pytest.warns(UserWarning, match="single class"):
            clf.fit(X[:n], y)
        assert clf.model_.best_val_auc is None

    def test_invalid_fraction(self, arrays):
        X, y = arrays
        with pytest.raises(ValueError):
            _small_clf(validation_fraction=1.0).fit(X, y)

    def test_bad_labels_rejected(self, arrays):
        X, _ = arrays
        with pytest.raises(ec.DimensionError, match="labels"):
            _small_clf().fit(X, np.zeros(X.shape[0], dtype=int))

    def test_bad_hyper_surface(self, arrays):
        X, y = arrays
        with pytest.raises(ValueError):
            _small_clf(kernel=41, epochs=1).fit(X, y)  # wider than the input

    def test_deterministic(self, arrays):
        X, y = arrays
        p1 = _small_clf(epochs=2).fit(X, y).predict_proba(X[:10])
        p2 = _small_clf(epochs=2).fit(X, y).predict_proba(X[:10])
        npt.assert_array_equal(p1, p2)

    def test_seed_matters(self, arrays):
        X, y = arrays
        p1 = _small_clf(epochs=1, random_state=0).fit(X, y).predict_proba(X[:5])
        p2 = _small_clf(epochs=1, random_state=1).fit(X, y).predict_proba(X[:5])
        assert not np.array_equal(p1, p2)


@pytest.fixture(scope="module")
def fitted(arrays):
    X, y = arrays
    return _small_clf(validation_fraction=0.0).fit(X, y), X, y


class TestPredict:
    def test_proba_shape_and_normalization(self, fitted):
        clf, X, _ = fitted
        probs = clf.predict_proba(X[:8])
        assert probs.shape == (8, 2)
        npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs >= 0)

    def test_predict_matches_proba_argmax(self, fitted):
        clf, X, _ = fitted
        probs = clf.predict_proba(X[:20])
        labels = clf.predict(X[:20])
        npt.assert_array_equal(labels, clf.classes_[np.argmax(probs, axis=1)])
        assert set(np.unique(labels)) <= {-1, 1}

    def test_flattened_input_equivalent(self, fitted):
        clf, X, _ = fitted
        flat = X[:6].reshape(6, -1)
        npt.assert_array_equal(
            clf.predict_proba(flat), clf.predict_proba(X[:6])
        )

    def test_bin_mismatch_rejected(self, fitted):
        clf, X, _ = fitted
        with pytest.raises(ec.DimensionError, match="bins"):
            clf.predict(X[:2, :, :30])

    def test_fit_from_flattened_input(self, arrays):
        X, y = arrays
        clf = _small_clf(epochs=1, n_marks=5, validation_fraction=0.0)
        clf.fit(X[:40].reshape(40, -1), y[:40])
        assert clf.model_.hyper.n_marks == 5
        assert clf.model_.hyper.bins == 40
