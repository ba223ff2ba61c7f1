"""Central finite-difference checks for the autograd engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn() / d x by central differences, perturbing ``x.data`` in place."""
    grad = np.zeros_like(x.data, dtype=np.float64)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    with ag.no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn().item()
            flat[i] = orig - h
            down = fn().item()
            flat[i] = orig
            out[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||n||, ||a||, 1e-8)."""
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
                    seed: int = 0) -> float:
    """Largest relative error over ``inputs`` between backward() and finite differences.

    Non-scalar outputs are reduced with a fixed random projection so every
    output element contributes.
    """
    probe = fn()
    weights = None
    if probe.size != 1:
        weights = np.random.default_rng(seed).standard_normal(probe.shape)

    def scalar():
        out = fn()
        return out if weights is None else (out * ag.Tensor(weights)).sum()

    for t in inputs:
        t.grad = None
    ag.backward(scalar())
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = numerical_grad(scalar, t, h)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def check_directional(fn: Callable[[], Tensor], inputs: Sequence[Tensor], directions: int = 3,
                      h: float = 1e-6, seed: int = 0) -> float:
    """Worst relative error of backward() along random joint directions.

    Compares sum_i <grad_i, v_i> with a central difference of ``fn`` moved
    along (v_1, ..., v_k). Two forward passes per direction, so it scales to
    whole models where per-element differences would not.
    """
    rng = np.random.default_rng(seed)
    probe = fn()
    weights = None if probe.size == 1 else rng.standard_normal(probe.shape)

    def scalar():
        out = fn()
        return out if weights is None else (out * ag.Tensor(weights)).sum()

    for t in inputs:
        t.grad = None
    ag.backward(scalar())
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad for t in inputs]
    worst = 0.0
    for _ in range(directions):
        vs = [rng.standard_normal(t.shape) for t in inputs]
        analytic = float(sum(np.vdot(g, v) for g, v in zip(grads, vs)))
        originals = [t.data.copy() for t in inputs]
        with ag.no_grad():
            for t, o, v in zip(inputs, originals, vs):
                t.data = o + h * v
            up = scalar().item()
            for t, o, v in zip(inputs, originals, vs):
                t.data = o - h * v
            down = scalar().item()
        for t, o in zip(inputs, originals):
            t.data = o
        numeric = (up - down) / (2.0 * h)
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
    return worst
