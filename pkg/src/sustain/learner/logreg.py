"""L2-regularized logistic regression baseline fitted by damped Newton steps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sustain.learner.boosting import log_loss, sigmoid, validate_xy


@dataclass
class LogisticModel:
    coef: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    n_iter: int
    grad_norm: float

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return ((X - self.mean) / self.scale) @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def fit_logreg(X, y, *, C: float = 1.0, tol: float = 1e-6, max_iter: int = 100) -> LogisticModel:
    """Minimize sum of log-losses + ||w||^2 / (2C) on standardized columns.

    The intercept is unpenalized. Iterates until the gradient's Euclidean
    norm drops below ``tol``.
    """
    X, yf = validate_xy(X, y)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = np.hstack([np.ones((X.shape[0], 1)), (X - mean) / scale])
    penalty = np.full(Z.shape[1], 1.0 / C)
    penalty[0] = 0.0
    w = np.zeros(Z.shape[1])

    def objective(w):
        z = Z @ w
        return float(np.sum(np.logaddexp(0, z) - yf * z) + 0.5 * np.sum(penalty * w * w))

    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(Z @ w)
        grad = Z.T @ (p - yf) + penalty * w
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            break
        hess = (Z * (p * (1 - p))[:, None]).T @ Z + np.diag(penalty)
        hess[0, 0] += 1e-12
        step = np.linalg.solve(hess, grad)
        f0 = objective(w)
        t = 1.0
        while t > 1e-10 and objective(w - t * step) > f0 - 1e-4 * t * grad @ step:
            t *= 0.5
        w = w - t * step
    return LogisticModel(w[1:], float(w[0]), mean, scale, it, grad_norm)


def training_log_loss(model: LogisticModel, X, y) -> float:
    return log_loss(np.asarray(y, dtype=float), model.predict_proba(X))
