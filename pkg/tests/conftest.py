"""Shared fixtures and independent oracle helpers.

The oracles here are deliberately written from scratch (dense loops, no
vectorization tricks) so they cannot share a bug with the library code they
check.
"""

from __future__ import annotations

import numpy as np
import pytest

from advfas.model import BackboneConfig, TwoHeadModel, init_model


def toy_config(seed: int = 0, activation: str = "tanh") -> BackboneConfig:
    return BackboneConfig(input_dim=4, trunk_widths=(3,), head_width=2, activation=activation, seed=seed)


@pytest.fixture
def toy_model() -> TwoHeadModel:
    return init_model(toy_config(seed=0))


def fd_param_grad(loss_fn, model: TwoHeadModel, name: str, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of loss_fn() with respect to one parameter.

    loss_fn must recompute the loss from the model's current parameters and
    return a float. Perturbations run in float64 and are written back through
    the float32 parameter storage, so keep step well above 1e-7.
    """
    tensor = model.params[name]
    base = tensor.data.copy()
    grad = np.zeros(base.shape, dtype=np.float64)
    flat = base.reshape(-1)
    for i in range(flat.size):
        for sign in (+1.0, -1.0):
            bumped = flat.astype(np.float64).copy()
            bumped[i] += sign * step
            tensor.data = bumped.reshape(base.shape).astype(np.float64)
            if sign > 0:
                hi = loss_fn()
            else:
                lo = loss_fn()
        grad.reshape(-1)[i] = (hi - lo) / (2.0 * step)
    tensor.data = base
    return grad


def fd_input_grad(loss_fn, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central finite differences of loss_fn(x) over a 1-D input vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        hi[i] += step
        lo = x.copy()
        lo[i] -= step
        grad[i] = (loss_fn(hi) - loss_fn(lo)) / (2.0 * step)
    return grad


def max_rel_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> float:
    """max|a - n| normalized by the largest finite-difference magnitude.

    One global denominator per comparison keeps near-zero entries from
    inflating the ratio while still scaling with the gradient's size.
    """
    gap = 0.0
    scale = 0.0
    for name in analytic:
        gap = max(gap, float(np.max(np.abs(analytic[name] - numeric[name]))) if analytic[name].size else 0.0)
        scale = max(scale, float(np.max(np.abs(numeric[name]))) if numeric[name].size else 0.0)
    return gap / max(scale, 1e-8)


def brute_force_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """O(n^2) pairwise ranking probability, ties counted one half."""
    pos = [s for y, s in zip(labels, scores) if y == 1]
    neg = [s for y, s in zip(labels, scores) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def brute_force_threshold(labels: np.ndarray, scores: np.ndarray) -> tuple[float, float]:
    """Exhaustive scan over midpoint candidates, smallest winner on ties."""
    s = sorted(scores)
    candidates = sorted({0.0, 1.0} | {(a + b) / 2.0 for a, b in zip(s[:-1], s[1:])})
    best_t, best_v = None, -1.0
    for t in candidates:
        tpr = sum(1 for y, sc in zip(labels, scores) if y == 1 and sc >= t) / sum(1 for y in labels if y == 1)
        tnr = sum(1 for y, sc in zip(labels, scores) if y == 0 and sc < t) / sum(1 for y in labels if y == 0)
        v = (tpr + tnr) / 2.0
        if v > best_v:
            best_t, best_v = t, v
    return best_t, best_v
