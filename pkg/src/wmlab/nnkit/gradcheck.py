"""Finite-difference oracle for analytic gradients.

This is the independent check every loss in the repository is held against:
central differences at the loss level, compared per coordinate against the
gradients the loss function writes into ``params.grads``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import ModelParams
from .rng import Rng


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    max_rel_error: float
    worst_coord: int
    n_checked: int

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"gradient_check {verdict}: max rel err {self.max_rel_error:.3e} "
            f"at coord {self.worst_coord} ({self.n_checked} coords, tol {self.tol:g})"
        )


def gradient_check(
    loss_fn,
    params: ModelParams,
    tol: float = 1e-3,
    h: float = 1e-3,
    max_coords: int | None = None,
    rng: Rng | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn(params) -> float`` must be deterministic (freeze any sampling
    noise before building the closure) and must accumulate its gradient into
    ``params.grads``. The check temporarily widens the parameter storage to
    float64 so the difference quotient is limited by the O(h^2) truncation
    error rather than by accumulation noise; deployed storage stays 32-bit.
    Gradient side effects on models other than ``params`` are the caller's
    to reset.

    ``max_coords`` subsamples coordinates (seeded by ``rng``) for large nets;
    the acceptance checks run small nets exhaustively.
    """
    saved_weights = params.weights
    saved_grads = params.grads
    saved_dtype = params.dtype
    params.dtype = np.dtype(np.float64)
    params.weights = saved_weights.astype(np.float64)
    params.grads = np.zeros(params.n_params, dtype=np.float64)
    params.invalidate_views()
    try:
        loss_fn(params)
        analytic = params.grads.copy()

        coords = np.arange(params.n_params)
        if max_coords is not None and max_coords < params.n_params:
            gen = (rng or Rng(0)).gen
            coords = np.sort(gen.choice(params.n_params, max_coords, replace=False))

        w = params.weights
        numeric = np.zeros(len(coords))
        for k, j in enumerate(coords):
            orig = w[j]
            w[j] = orig + h
            params.zero_grads()
            loss_plus = float(loss_fn(params))
            w[j] = orig - h
            params.zero_grads()
            loss_minus = float(loss_fn(params))
            w[j] = orig
            numeric[k] = (loss_plus - loss_minus) / (2.0 * h)

        a = analytic[coords]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        rel = np.abs(a - numeric) / denom
        worst = int(np.argmax(rel))
        return GradCheckReport(
            passed=bool(rel[worst] < tol),
            tol=tol,
            max_rel_error=float(rel[worst]),
            worst_coord=int(coords[worst]),
            n_checked=len(coords),
        )
    finally:
        params.dtype = saved_dtype
        params.weights = saved_weights
        params.grads = saved_grads
        params._cache = None
        params.invalidate_views()
