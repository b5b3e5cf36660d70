"""Scikit-learn style wrappers over topologization and the classifier.

TopologyTransformer exposes image topologization as a stateless
fit/transform step; ConvNetClassifier wraps the numpy convolutional net
behind fit/predict/predict_proba. Both accept images as (N, 784) flat rows
or (N, 28, 28) stacks with values in [0, 1] and preserve the input layout.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .geometry import Frame
from .nn import ClassifierModel, TrainConfig, train
from .dataset import Dataset
from .signature import LossSpec
from .topologize import TopologizeConfig, topologize_batch


def _as_image_stack(X) -> tuple[np.ndarray, bool]:
    """Return ((N, H, W) float64 stack, was_flat) for flat or stacked input."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[1] == 784:
        return X.reshape(-1, 28, 28), True
    if X.ndim == 3:
        return X, False
    raise ValueError(
        f"expected (N, 784) rows or (N, H, W) image stack, got shape {X.shape}")


class TopologyTransformer(TransformerMixin, BaseEstimator):
    """Per-image topologization as a transformer (stateless; fit validates).

    Parameters mirror LossSpec and TopologizeConfig: `loss` is one of
    nonparametric / parametrized / weighted; `dim` bounds (or selects, for
    the parametrized kind) the homology dimension; `sign` +1 promotes the
    loss as written, -1 negates it.
    """

    def __init__(self, loss: str = "nonparametric", dim: int = 1,
                 p: float = 1.0, q: float = 1.0,
                 weights: tuple[float, ...] = (0.0, 0.0), sign: int = 1,
                 steps: int = 10, learning_rate: float = 0.1,
                 threshold: float = 0.5, workers: int | None = None):
        self.loss = loss
        self.dim = dim
        self.p = p
        self.q = q
        self.weights = weights
        self.sign = sign
        self.steps = steps
        self.learning_rate = learning_rate
        self.threshold = threshold
        self.workers = workers

    def _config(self) -> TopologizeConfig:
        spec = LossSpec(kind=self.loss, n=self.dim, p=self.p, q=self.q,
                        weights=tuple(self.weights), sign=self.sign)
        return TopologizeConfig(spec=spec, steps=self.steps,
                                learning_rate=self.learning_rate)

    def fit(self, X, y=None):
        _as_image_stack(X)
        self._config()
        return self

    def transform(self, X) -> np.ndarray:
        stack, flat = _as_image_stack(X)
        frame = Frame(stack.shape[2], stack.shape[1])
        out, _ = topologize_batch(stack, self._config(),
                                  threshold=self.threshold,
                                  workers=self.workers, frame=frame)
        return out.reshape(len(out), -1) if flat else out


class ConvNetClassifier(ClassifierMixin, BaseEstimator):
    """The 28x28 convolutional net as an estimator.

    fit() trains with Adam using the fixed architecture; predict() returns
    argmax labels; predict_proba() returns softmax probabilities.
    """

    def __init__(self, epochs: int = 9, batch_size: int = 100,
                 learning_rate: float = 0.01, seed: int = 0,
                 model_seed: int = 0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.model_seed = model_seed

    def fit(self, X, y):
        stack, _ = _as_image_stack(X)
        if stack.shape[1:] != (28, 28):
            raise ValueError(f"classifier expects 28x28 images, got {stack.shape[1:]}")
        y = np.asarray(y, dtype=np.int64)
        ds = Dataset(stack, y, "fit")
        cfg = TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                          learning_rate=self.learning_rate, seed=self.seed)
        self.model_ = ClassifierModel(seed=self.model_seed)
        self.history_ = train(self.model_, ds, cfg)
        self.classes_ = np.arange(10, dtype=np.int64)
        return self

    def _check_fitted(self) -> ClassifierModel:
        if not hasattr(self, "model_"):
            raise AttributeError("this ConvNetClassifier instance is not fitted yet")
        return self.model_

    def predict_log_proba(self, X) -> np.ndarray:
        model = self._check_fitted()
        stack, _ = _as_image_stack(X)
        out = [model.forward(stack[s:s + 200]) for s in range(0, len(stack), 200)]
        return np.concatenate(out, axis=0)

    def predict_proba(self, X) -> np.ndarray:
        return np.exp(self.predict_log_proba(X))

    def predict(self, X) -> np.ndarray:
        return self.predict_log_proba(X).argmax(axis=1)
