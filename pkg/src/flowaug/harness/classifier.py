"""Small convolutional baseline classifier on the in-package autodiff stack.

Two conv blocks (3x3 conv, relu, 2x2 average pool) feed a pooled dense
head: one more 2x2 average pool, flatten, hidden dense layer, logits.
Training uses Adam with early stopping on validation loss and restores the
best-validation weights. Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..core import Adam, Parameter, Tensor, avg_pool2x2, conv2d, gradient, log_softmax, make_rng
from ..validation import check_images, check_labels
from .folds import stratified_split


def _he(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(scale=np.sqrt(2.0 / fan_in), size=shape)


class ConvNetClassifier(BaseEstimator, ClassifierMixin):
    """Image classifier with a fixed two-block architecture.

    Parameters mirror the constructor arguments so the estimator clones
    cleanly. `fit` accepts an explicit validation split; without one it
    carves a stratified `val_fraction` out of the training data.
    """

    def __init__(
        self,
        *,
        channels: tuple[int, int] = (8, 16),
        hidden: int = 32,
        epochs: int = 100,
        patience: int = 5,
        batch_size: int = 64,
        lr: float = 2e-3,
        val_fraction: float = 0.15,
        seed: int = 0,
    ):
        self.channels = channels
        self.hidden = hidden
        self.epochs = epochs
        self.patience = patience
        self.batch_size = batch_size
        self.lr = lr
        self.val_fraction = val_fraction
        self.seed = seed

    def _build_params(self, c_in: int, features: int, n_classes: int) -> list[Parameter]:
        rng = make_rng(self.seed, "classifier", "init")
        c1, c2 = self.channels
        return [
            Parameter("block0/weight", _he(rng, (3, 3, c_in, c1), 9 * c_in)),
            Parameter("block0/bias", np.zeros(c1)),
            Parameter("block1/weight", _he(rng, (3, 3, c1, c2), 9 * c1)),
            Parameter("block1/bias", np.zeros(c2)),
            Parameter("dense/weight", _he(rng, (features, self.hidden), features)),
            Parameter("dense/bias", np.zeros(self.hidden)),
            Parameter("logits/weight", rng.normal(scale=np.sqrt(1.0 / self.hidden), size=(self.hidden, n_classes))),
            Parameter("logits/bias", np.zeros(n_classes)),
        ]

    def _logits(self, x: np.ndarray) -> Tensor:
        w0, b0, w1, b1, wd, bd, wl, bl = self.params_
        # fixed affine preprocessing: pixel values live in [0, 1) around 0.5
        h = conv2d(Tensor((x - 0.5) * 4.0), w0, b0).relu()
        h = avg_pool2x2(h)
        h = conv2d(h, w1, b1).relu()
        h = avg_pool2x2(h)
        h = avg_pool2x2(h)
        b, hh, ww, c = h.shape
        h = h.reshape(b, hh * ww * c)
        h = (h @ wd + bd).relu()
        return h @ wl + bl

    def _loss(self, x: np.ndarray, y_enc: np.ndarray) -> Tensor:
        logp = log_softmax(self._logits(x))
        onehot = np.zeros((y_enc.size, len(self.classes_)))
        onehot[np.arange(y_enc.size), y_enc] = 1.0
        return (logp * Tensor(onehot)).sum() * (-1.0 / y_enc.size)

    def _eval_loss(self, x: np.ndarray, y_enc: np.ndarray, chunk: int = 512) -> float:
        total = 0.0
        for start in range(0, x.shape[0], chunk):
            piece = slice(start, start + chunk)
            n = x[piece].shape[0]
            total += self._loss(x[piece], y_enc[piece]).item() * n
        return total / x.shape[0]

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_images(X, "X")
        y = check_labels(y, X.shape[0], "y")
        if X.shape[1] % 8 or X.shape[2] % 8:
            raise ValueError(f"spatial dims must be divisible by 8, got {X.shape}")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("training set contains a single class; nothing to separate")
        y_enc = np.searchsorted(self.classes_, y)

        if X_val is None:
            parts = stratified_split(y_enc, (1.0 - self.val_fraction, self.val_fraction), self.seed)
            train_idx, val_idx = parts
            X_val, yv_enc = X[val_idx], y_enc[val_idx]
            X, y_enc = X[train_idx], y_enc[train_idx]
        else:
            X_val = check_images(X_val, "X_val")
            y_val = check_labels(y_val, X_val.shape[0], "y_val")
            yv_enc = np.searchsorted(self.classes_, y_val)

        self.input_shape_ = X.shape[1:]
        features = (X.shape[1] // 8) * (X.shape[2] // 8) * self.channels[1]
        self.params_ = self._build_params(X.shape[3], features, self.classes_.size)
        optimizer = Adam(self.params_)
        n = X.shape[0]
        best_val = np.inf
        best_state = [p.data.copy() for p in self.params_]
        bad_epochs = 0
        self.history_ = []

        for epoch in range(self.epochs):
            order = make_rng(self.seed, "classifier", "shuffle", f"epoch{epoch}").permutation(n)
            train_loss = 0.0
            for start in range(0, n, self.batch_size):
                batch = order[start : start + self.batch_size]
                optimizer.zero_grad()
                loss = self._loss(X[batch], y_enc[batch])
                gradient(loss, self.params_)
                optimizer.step(self.lr)
                train_loss += loss.item() * batch.size
            val_loss = self._eval_loss(X_val, yv_enc)
            self.history_.append((epoch, train_loss / n, val_loss))
            if val_loss < best_val:
                best_val = val_loss
                best_state = [p.data.copy() for p in self.params_]
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= self.patience:
                    break

        for p, data in zip(self.params_, best_state):
            p.data = data
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_images(X, "X")
        if X.shape[1:] != self.input_shape_:
            raise ValueError(
                f"expected images shaped {self.input_shape_}, got {X.shape[1:]}"
            )
        out = np.empty((X.shape[0], self.classes_.size))
        for start in range(0, X.shape[0], 512):
            piece = slice(start, start + 512)
            logits = self._logits(X[piece]).data
            logits = logits - logits.max(axis=1, keepdims=True)
            exp = np.exp(logits)
            out[piece] = exp / exp.sum(axis=1, keepdims=True)
        return out

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
