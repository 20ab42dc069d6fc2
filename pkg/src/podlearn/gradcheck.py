"""Finite-difference verification of reverse-mode gradients."""

from typing import Callable

import numpy as np

from .errors import ContractError
from .tensor import Tensor, no_grad


def gradient_check(
    scalar_fn: Callable[[Tensor], Tensor],
    point: Tensor,
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients of ``scalar_fn`` at ``point`` with central
    differences.

    Returns the max over coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    The caller is responsible for evaluating away from kinks (ReLU zeros,
    hinge boundaries).
    """
    if not (1e-6 <= eps <= 1e-4):
        raise ContractError(f"gradient_check: eps {eps} outside [1e-6, 1e-4]")
    x = Tensor(point.data.copy(), requires_grad=True)
    out = scalar_fn(x)
    if out.size != 1:
        raise ContractError(f"gradient_check: fn returned shape {out.shape}")
    out.backward()
    analytic = x.grad.reshape(-1)

    flat = point.data.reshape(-1)
    numeric = np.empty_like(flat)
    with no_grad():
        for i in range(flat.size):
            bump = flat.copy()
            bump[i] += eps
            hi = scalar_fn(Tensor(bump.reshape(point.shape))).item()
            bump[i] -= 2 * eps
            lo = scalar_fn(Tensor(bump.reshape(point.shape))).item()
            numeric[i] = (hi - lo) / (2 * eps)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
