"""Feedforward regression network trained with mini-batch gradient descent.

Plain numpy, no autograd: the backward pass is written out so analytic
gradients can be checked against central finite differences.
"""

from __future__ import annotations

import numpy as np

LEAK = 0.01  # slope of the negative branch of the piecewise-linear activation


def _activate(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAK * z)


def _activate_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, LEAK)


class MLPRegressor:
    def __init__(self, input_dim: int, hidden: tuple[int, ...] = (64, 64), seed: int = 0):
        rng = np.random.default_rng(seed)
        dims = [input_dim, *hidden, 1]
        self.weights = [
            rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
            for i in range(len(dims) - 1)
        ]
        self.biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]

    def _forward(self, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        pre: list[np.ndarray] = []
        act: list[np.ndarray] = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            pre.append(z)
            h = z if i == last else _activate(z)  # linear output layer
            act.append(h)
        return pre, act

    def predict(self, X: np.ndarray) -> np.ndarray:
        _, act = self._forward(np.atleast_2d(X))
        return act[-1][:, 0]

    def loss_and_grads(
        self, X: np.ndarray, y: np.ndarray
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean squared error and its gradients w.r.t. every weight and bias."""
        X = np.atleast_2d(X)
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        n = X.shape[0]
        pre, act = self._forward(X)
        diff = act[-1] - y
        loss = float(np.mean(diff**2))

        grads_w = [np.zeros_like(W) for W in self.weights]
        grads_b = [np.zeros_like(b) for b in self.biases]
        delta = 2.0 * diff / n
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = act[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * _activate_grad(pre[i - 1])
        return loss, grads_w, grads_b

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        epochs: int = 300,
        batch_size: int = 32,
        lr: float = 0.02,
        lr_decay: float = 0.995,
        seed: int = 0,
    ) -> list[float]:
        """Mini-batch gradient descent with a fixed geometric learning-rate
        schedule. Returns the per-epoch training loss."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(seed)
        history: list[float] = []
        n = X.shape[0]
        for epoch in range(epochs):
            order = rng.permutation(n)
            rate = lr * (lr_decay**epoch)
            epoch_loss = 0.0
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                loss, grads_w, grads_b = self.loss_and_grads(X[idx], y[idx])
                epoch_loss += loss * len(idx)
                for i in range(len(self.weights)):
                    self.weights[i] -= rate * grads_w[i]
                    self.biases[i] -= rate * grads_b[i]
            history.append(epoch_loss / n)
        return history

    # -- flat parameter access (used by the finite-difference check) --------

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def set_params(self, flat: np.ndarray) -> None:
        offset = 0
        for group in (self.weights, self.biases):
            for i, arr in enumerate(group):
                size = arr.size
                group[i] = flat[offset : offset + size].reshape(arr.shape).copy()
                offset += size

    def flat_grads(self, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        loss, gw, gb = self.loss_and_grads(X, y)
        return loss, np.concatenate([a.ravel() for a in gw + gb])

    def to_dict(self) -> dict:
        return {
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MLPRegressor":
        model = cls.__new__(cls)
        model.weights = [np.asarray(w, dtype=float) for w in data["weights"]]
        model.biases = [np.asarray(b, dtype=float) for b in data["biases"]]
        return model
