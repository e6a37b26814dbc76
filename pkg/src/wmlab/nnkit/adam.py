"""Adam optimizer over flat parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import ModelParams


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(
            m=np.zeros(params.n_params, dtype=params.dtype),
            v=np.zeros(params.n_params, dtype=params.dtype),
            lr=lr,
            **kw,
        )


def adam_step(params: ModelParams, state: AdamState):
    """One bias-corrected Adam update; clears gradients afterwards."""
    g = params.grads
    if g.shape != state.m.shape:
        raise ValueError("optimizer state does not match parameter count")
    if not np.isfinite(g).all():
        raise FloatingPointError("non-finite gradient in adam_step")
    state.step_count += 1
    t = state.step_count
    state.m += (1.0 - state.beta1) * (g - state.m)
    state.v += (1.0 - state.beta2) * (g * g - state.v)
    m_hat = state.m / (1.0 - state.beta1**t)
    v_hat = state.v / (1.0 - state.beta2**t)
    params.weights -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.zero_grads()
