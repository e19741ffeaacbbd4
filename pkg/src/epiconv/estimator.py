"""A scikit-learn style facade over the training loop.

`HistoneCNNClassifier` follows the estimator contract (``get_params`` /
``set_params`` / ``fit`` / ``predict`` / ``predict_proba``, clonable, all
constructor arguments stored verbatim) so it composes with scikit-learn
tooling, while delegating all of the math to the package's own layers.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DimensionError
from .nn import Hyperparams, forward
from .training import TrainConfig, train_arrays
from .validation import as_label_array, as_signal_array


class HistoneCNNClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier over (marks x bins) signal matrices.

    ``X`` may be a 3-d array of shape (n_samples, n_marks, n_bins) or a 2-d
    array of flattened rows together with ``n_marks``.  Labels are -1/+1.
    A held-out slice of the training data (``validation_fraction``) picks the
    best epoch by validation AUC unless ``validation_data`` is given to
    ``fit`` explicitly.
    """

    def __init__(
        self,
        kernel: int = 10,
        filters: int = 50,
        pool: int = 5,
        hidden: tuple[int, ...] = (625, 125),
        dropout: float = 0.5,
        lr: float = 0.001,
        epochs: int = 100,
        batch: int = 1,
        n_marks: int | None = None,
        log1p: bool = False,
        standardize: bool = False,
        validation_fraction: float = 0.1,
        random_state: int = 0,
    ):
        self.kernel = kernel
        self.filters = filters
        self.pool = pool
        self.hidden = hidden
        self.dropout = dropout
        self.lr = lr
        self.epochs = epochs
        self.batch = batch
        self.n_marks = n_marks
        self.log1p = log1p
        self.standardize = standardize
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y, validation_data=None):
        X3 = as_signal_array(X, self.n_marks)
        n = X3.shape[0]
        y = as_label_array(y, n)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")

        hyper = Hyperparams(
            n_marks=X3.shape[1],
            bins=X3.shape[2],
            kernel=self.kernel,
            filters=self.filters,
            pool=self.pool,
            hidden=tuple(self.hidden),
            dropout=self.dropout,
            lr=self.lr,
            epochs=self.epochs,
            batch=self.batch,
            seed=self.random_state,
        )

        if validation_data is not None:
            X_va = as_signal_array(validation_data[0], hyper.n_marks)
            y_va = as_label_array(validation_data[1], X_va.shape[0])
            X_tr, y_tr = X3, y
        elif self.validation_fraction > 0.0:
            n_val = int(np.floor(n * self.validation_fraction + 0.5))
            if 0 < n_val < n:
                order = np.random.default_rng(self.random_state).permutation(n)
                val_idx, tr_idx = order[:n_val], order[n_val:]
                if np.unique(y[val_idx]).size == 2:
                    X_tr, y_tr = X3[tr_idx], y[tr_idx]
                    X_va, y_va = X3[val_idx], y[val_idx]
                else:
                    warnings.warn(
                        "validation slice drew a single class; training "
                        "without epoch selection"
                    )
                    X_tr, y_tr, X_va, y_va = X3, y, None, None
            else:
                X_tr, y_tr, X_va, y_va = X3, y, None, None
        else:
            X_tr, y_tr, X_va, y_va = X3, y, None, None

        config = TrainConfig(
            hyper=hyper, log1p=self.log1p, standardize=self.standardize
        )
        self.model_, self.history_ = train_arrays(
            X_tr, y_tr, X_va, y_va, config
        )
        self.classes_ = np.array([-1, 1], dtype=np.int64)
        self.n_features_in_ = X3.shape[1] * X3.shape[2]
        return self

    def _signal(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        hyper = self.model_.hyper
        X3 = as_signal_array(X, hyper.n_marks)
        if X3.shape[2] != hyper.bins:
            raise DimensionError(
                f"input has {X3.shape[2]} bins, the fitted model expects "
                f"{hyper.bins}"
            )
        return self.model_.transform.apply(X3)

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities, columns ordered like ``classes_`` (-1 then +1)."""
        X3 = self._signal(X)
        hyper = self.model_.hyper
        return np.stack(
            [forward(x, self.model_.params, hyper, mode="eval").probs for x in X3]
        )

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]
