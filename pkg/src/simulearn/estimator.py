"""Scikit-learn style estimator facade over the joint-group trainer.

``MultiGroupImageClassifier`` follows the usual conventions (``fit`` /
``predict`` / ``predict_proba`` / ``get_params``), so it composes with
``sklearn.base.clone``, pipelines, and model-selection utilities.  The
target images and labels go through ``fit(X, y)``; an auxiliary dataset is
passed alongside via ``aux_X`` / ``aux_y``.  Without one, training falls
back to the plain cross-entropy baseline.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .data import GroupedDataset, Sample
from .groups import AUXILIARY, TARGET, GroupLayout
from .metrics import dacc
from .model import build_cnn_spec, extend_multi_group, init_params, model_forward
from .training import TrainConfig, train


def check_image_batch(X, *, name="X") -> np.ndarray:
    """Coerce to a finite float64 (N, H, W, C) array; accepts (N, H, W)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4 or X.shape[0] == 0:
        raise ValueError(
            f"{name} must be a non-empty (N, H, W) or (N, H, W, C) array, got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_labels(y, n_samples: int, *, name="y") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"{name} must be a 1-d array of {n_samples} labels, got {y.shape}")
    return y


class MultiGroupImageClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier regularized by joint training with auxiliary classes.

    Parameters mirror the training protocol: ``lam`` weights the target
    cross-entropy term against the auxiliary one, ``alpha``/``beta`` scale
    the inter-group penalty, and the architecture knobs configure the small
    convolutional backbone.  ``score`` reports delimited accuracy, which
    ignores the auxiliary outputs.
    """

    def __init__(
        self,
        lam=0.7,
        alpha=1.0,
        beta=1.0,
        epochs=30,
        batch_size=32,
        learning_rate=0.01,
        optimizer="adagrad",
        conv_filters=(8, 16),
        kernel_size=3,
        conv_stride=2,
        n1=32,
        n2=16,
        dropout_rate=0.0,
        seed=0,
    ):
        self.lam = lam
        self.alpha = alpha
        self.beta = beta
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.conv_filters = conv_filters
        self.kernel_size = kernel_size
        self.conv_stride = conv_stride
        self.n1 = n1
        self.n2 = n2
        self.dropout_rate = dropout_rate
        self.seed = seed

    def fit(self, X, y, aux_X=None, aux_y=None):
        X = check_image_batch(X)
        y = check_labels(y, X.shape[0])
        self.classes_, target_idx = np.unique(y, return_inverse=True)
        k = len(self.classes_)
        if k < 2:
            raise ValueError("need at least two target classes")
        if (aux_X is None) != (aux_y is None):
            raise ValueError("pass aux_X and aux_y together or not at all")

        joint = aux_X is not None
        aux_samples: list[Sample] = []
        m = 0
        if joint:
            aux_X = check_image_batch(aux_X, name="aux_X")
            aux_y = check_labels(aux_y, aux_X.shape[0], name="aux_y")
            if aux_X.shape[1:] != X.shape[1:]:
                raise ValueError(
                    f"auxiliary images have shape {aux_X.shape[1:]}, target {X.shape[1:]}"
                )
            aux_classes, aux_idx = np.unique(aux_y, return_inverse=True)
            m = len(aux_classes)
            aux_samples = [
                Sample(aux_X[i], AUXILIARY, int(aux_idx[i])) for i in range(len(aux_X))
            ]

        layout = GroupLayout(k=k, m=m)
        target_samples = [
            Sample(X[i], TARGET, int(target_idx[i])) for i in range(len(X))
        ]
        dataset = GroupedDataset(layout, target_samples, [], [], aux_samples)

        spec = build_cnn_spec(
            k,
            conv_filters=tuple(self.conv_filters),
            kernel_size=self.kernel_size,
            conv_stride=self.conv_stride,
            n1=self.n1,
            n2=self.n2,
            dropout_rate=self.dropout_rate,
        )
        rng = np.random.default_rng([self.seed, 100])
        params = init_params(spec, X.shape[1:], rng)
        if joint:
            spec, params = extend_multi_group(spec, params, m, np.random.default_rng([self.seed, 101]))

        config = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            lam=self.lam,
            alpha=self.alpha,
            beta=self.beta,
            mode="simultaneous" if joint else ("dropout" if self.dropout_rate > 0 else "baseline"),
            dropout_rate=self.dropout_rate,
            seed=self.seed,
        )
        result = train(spec, params, dataset, config)
        self.spec_ = result.spec
        self.params_ = result.params
        self.layout_ = layout
        self.history_ = result.history
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("fit must be called before predicting")

    def _forward(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_image_batch(X)
        if X.shape[1:] != self.params_.input_shape:
            raise ValueError(
                f"images have shape {X.shape[1:]}, model expects {self.params_.input_shape}"
            )
        probs, _ = model_forward(self.spec_, self.params_, X)
        return probs

    def predict_proba(self, X) -> np.ndarray:
        """Target-class probabilities, renormalized over the target group."""
        probs = self._forward(X)[:, : self.layout_.k]
        return probs / probs.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        """Delimited argmax: auxiliary outputs are ignored."""
        probs = self._forward(X)
        return self.classes_[np.argmax(probs[:, : self.layout_.k], axis=1)]

    def score(self, X, y, sample_weight=None) -> float:
        """Delimited accuracy on the given target samples."""
        self._check_fitted()
        y = check_labels(y, np.asarray(X).shape[0])
        probs = self._forward(X)
        class_to_idx = {c: i for i, c in enumerate(self.classes_)}
        labels = np.zeros((len(y), self.layout_.n))
        for row, value in enumerate(y):
            if value not in class_to_idx:
                raise ValueError(f"label {value!r} was not seen during fit")
            labels[row, class_to_idx[value]] = 1.0
        return dacc(probs, labels, self.layout_)
