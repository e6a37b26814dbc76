"""Stochastic sampling utilities shared by the planner and the generative model."""

from __future__ import annotations

import numpy as np

from .rng import Rng


def softmax(x, axis=-1):
    x = np.asarray(x)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(probs, upstream):
    """Gradient of a softmax output w.r.t. its logits, given dLoss/dProbs."""
    dot = (upstream * probs).sum(axis=-1, keepdims=True)
    return probs * (upstream - dot)


def one_hot(index, n, dtype=np.float32):
    out = np.zeros(n, dtype=dtype)
    out[int(index)] = 1.0
    return out


def gumbel_softmax_sample(logits, temperature: float, rng: Rng):
    """Relaxed categorical sample on the simplex.

    Returns softmax((logits + gumbel_noise) / temperature): components in
    [0, 1], summing to 1, and a deterministic function of the logits once
    the noise is drawn (so finite differences through it are well-defined).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(logits).all():
        raise FloatingPointError("non-finite logits in gumbel_softmax_sample")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    noise = rng.gumbel(size=logits.shape)
    return softmax((logits + noise) / temperature, axis=-1)
