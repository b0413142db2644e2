"""Integrated-gradient attributions for :class:`MlpModel` outputs."""

import numpy as np

from ..errors import ContractError
from .mlp import input_gradient

DEFAULT_STEPS = 64


def integrated_gradient(model, x, baseline, output_index=0, steps=DEFAULT_STEPS,
                        space="probability"):
    """(x - baseline) times the midpoint-rule mean gradient along the path.

    Works on a single vector or on a batch of rows; ``baseline`` may be one
    vector shared by every row or a matching batch.
    """
    if steps < 1:
        raise ContractError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    base = np.broadcast_to(np.asarray(baseline, dtype=np.float64), x2.shape)
    if base.shape[-1] != x2.shape[-1]:
        raise ContractError("baseline and x must have the same length")
    diff = x2 - base
    alphas = (np.arange(steps) + 0.5) / steps
    # all path points in one batch: (steps, n, d)
    path = base[None] + alphas[:, None, None] * diff[None]
    grads = input_gradient(model, path.reshape(-1, x2.shape[1]), output_index, space)
    mean_grad = grads.reshape(steps, *x2.shape).mean(axis=0)
    ig = diff * mean_grad
    return ig[0] if single else ig
