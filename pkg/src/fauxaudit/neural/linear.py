"""L2-regularized logistic regression used by the linear-metric baselines."""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .mlp import Layer, MlpModel, sigmoid


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    iterations: int = 0
    grad_norm: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ContractError("linear model coefficients must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def decision_function(self, x):
        return np.asarray(x, dtype=np.float64) @ self.weights + self.bias

    def predict_proba(self, x):
        z = np.atleast_1d(self.decision_function(x)).astype(np.float64)
        return sigmoid(z)

    def as_mlp(self):
        """The same predictor as a one-layer sigmoid :class:`MlpModel`."""
        return MlpModel((Layer(self.weights[None, :], [self.bias], "sigmoid"),))


def fit_logistic(x, c, l2=1e-2, tol=1e-6, max_iter=5000):
    """Full-batch gradient descent on mean log-loss + ``l2/2 * ||w||^2``.

    The intercept is not penalized. Steps use the global Lipschitz bound
    ``0.25 * lambda_max(X'X / n) + l2`` of the objective, starting from zero,
    so duplicated columns always receive identical weights.

    Parameters
    ----------
    x : (n, d) array
    c : (n,) array of 0/1
    """
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != c.shape[0] or x.shape[0] == 0:
        raise ContractError("fit_logistic needs a non-empty (n, d) matrix and n labels")
    if not np.all((c == 0) | (c == 1)):
        raise ContractError("fit_logistic needs a binary target")
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    lip = 0.25 * np.linalg.eigvalsh(xa.T @ xa / n)[-1] + l2
    step = 1.0 / lip
    theta = np.zeros(d + 1)
    penalty = np.full(d + 1, l2)
    penalty[-1] = 0.0
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(xa @ theta)
        grad = xa.T @ (p - c) / n + penalty * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            break
        theta = theta - step * grad
    return LinearModel(theta[:d], float(theta[d]), iterations=it, grad_norm=gnorm)
