"""Sampling-based trajectory optimization over the learned model.

Iteratively refines a per-timestep action distribution: sample candidate
sequences (a fraction proposed by unrolling the policy), score them by
model-predicted return with a terminal value bootstrap, softmax-weight the
elites by temperature, and blend the distribution parameters with momentum.
Discrete actions use an independent categorical per timestep; continuous
actions a diagonal Gaussian clipped to the action box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnkit import mlp_eval, softmax
from .nnkit.rng import Rng
from .worldmodel import AgentHeads, WorldModel, policy_action, predict_next


@dataclass
class PlannerConfig:
    num_samples: int = 128
    horizon: int = 10
    num_elites: int = 12
    iterations: int = 6
    temperature: float = 0.5
    momentum: float = 0.1
    policy_fraction: float = 0.05
    action_noise_floor: float = 0.05
    init_std: float = 0.5  # continuous only
    # training-rollout exploration: probability mass mixed uniformly into
    # the first-step categorical before sampling (the discrete analog of
    # additive Gaussian action noise; greedy evaluation ignores it)
    explore_eps: float = 0.3

    def __post_init__(self):
        if self.num_elites > self.num_samples:
            raise ValueError("num_elites must not exceed num_samples")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def estimate_returns(model: WorldModel, heads: AgentHeads, state, action_sequences, gamma: float) -> np.ndarray:
    """Model-predicted return of each candidate sequence from ``state``.

    J = sum_{t<H} gamma^t R(s_t, a_t) + gamma^H Q(s_H, pi(s_H)), with states
    rolled forward by the dynamics net. ``action_sequences`` is (N, H, act).
    """
    seqs = np.asarray(action_sequences, dtype=np.float32)
    n, horizon = seqs.shape[0], seqs.shape[1]
    obs_dim, act_dim = model.obs_dim, seqs.shape[2]
    s = np.broadcast_to(np.asarray(state, dtype=np.float32), (n, obs_dim))
    # rollout with a reused input buffer; (state, action) pairs are kept
    # so one batched reward evaluation covers the whole horizon
    xs = np.empty((horizon, n, obs_dim + act_dim), dtype=np.float32)
    for t in range(horizon):
        x = xs[t]
        x[:, :obs_dim] = s
        x[:, obs_dim:] = seqs[:, t]
        s = mlp_eval(model.dynamics, x)
    r = mlp_eval(heads.reward, xs.reshape(horizon * n, -1))[:, 0].reshape(horizon, n)
    discounts = gamma ** np.arange(horizon)  # float64, matching the q term
    total = (r.T * discounts).sum(axis=-1)
    a_last = policy_action(heads, s)
    q = mlp_eval(heads.value, np.concatenate([s, a_last], axis=-1))
    total += (gamma**horizon) * q[:, 0]
    if not np.isfinite(total).all():
        raise FloatingPointError("non-finite return estimate in planner")
    return total


def estimate_return(model, heads, state, action_sequence, gamma: float) -> float:
    """Single-sequence convenience wrapper around estimate_returns."""
    return float(estimate_returns(model, heads, state, np.asarray(action_sequence)[None], gamma)[0])


def _policy_trajectories(model, heads, state, n, horizon, rng: Rng) -> np.ndarray:
    """Unroll the current policy through the model to seed the candidate pool."""
    act_dim = model.action_dim
    s = np.tile(np.asarray(state, dtype=np.float32), (n, 1))
    out = np.zeros((n, horizon, act_dim), dtype=np.float32)
    eye = np.eye(act_dim, dtype=np.float32)
    for t in range(horizon):
        logits = mlp_eval(heads.policy, s)
        if heads.discrete:
            probs = softmax(logits, axis=-1)
            cum = probs.cumsum(axis=-1)
            u = rng.uniform(size=(n, 1))
            idx = (u > cum).sum(axis=-1)
            a = eye[idx]
        else:
            a = logits  # tanh output is already the action
        out[:, t] = a
        s = predict_next(model, s, a)
    return out


def _sample_categorical_sequences(probs, n, rng: Rng) -> np.ndarray:
    horizon, act_dim = probs.shape
    cum = probs.cumsum(axis=-1)  # (H, A)
    u = rng.uniform(size=(n, horizon))
    idx = np.minimum((u[:, :, None] > cum[None, :, :]).sum(axis=-1), act_dim - 1)
    return np.eye(act_dim, dtype=np.float32)[idx]


def _elite_weights(returns, elite_idx, temperature):
    j = returns[elite_idx]
    w = np.exp((j - j.max()) / temperature)
    return w / w.sum()


def plan(
    model: WorldModel,
    heads: AgentHeads,
    state,
    cfg: PlannerConfig,
    rng: Rng,
    gamma: float = 0.99,
    explore: bool = False,
    trace_sink=None,
) -> np.ndarray:
    """Choose the next action by iterative distribution refinement.

    Returns the mode of the final first-step distribution (argmax category
    for discrete, mean for continuous); with ``explore`` the first step is
    sampled from that distribution instead, for training-time rollouts.
    ``trace_sink(record)`` receives one dict per iteration (candidate
    returns and the elite set) for offline debugging dumps.
    """
    n_pi = min(cfg.num_samples, int(round(cfg.policy_fraction * cfg.num_samples)))
    n_free = cfg.num_samples - n_pi
    pi_trajs = (
        _policy_trajectories(model, heads, state, n_pi, cfg.horizon, rng)
        if n_pi > 0
        else None
    )

    if heads.discrete:
        act_dim = model.action_dim
        probs = np.full((cfg.horizon, act_dim), 1.0 / act_dim)
        for it in range(cfg.iterations):
            cands = _sample_categorical_sequences(probs, n_free, rng)
            if pi_trajs is not None:
                cands = np.concatenate([cands, pi_trajs], axis=0)
            returns = estimate_returns(model, heads, state, cands, gamma)
            elite_idx = np.argsort(returns)[-cfg.num_elites:]
            if trace_sink is not None:
                trace_sink({
                    "iteration": it,
                    "returns": [float(v) for v in returns],
                    "elite_indices": [int(i) for i in elite_idx],
                })
            w = _elite_weights(returns, elite_idx, cfg.temperature)
            new_probs = (w[:, None, None] * cands[elite_idx]).sum(axis=0)
            probs = cfg.momentum * probs + (1.0 - cfg.momentum) * new_probs
            probs = np.maximum(probs, cfg.action_noise_floor / act_dim)
            probs /= probs.sum(axis=-1, keepdims=True)
        first = probs[0]
        if explore:
            mixed = (1.0 - cfg.explore_eps) * first / first.sum() + cfg.explore_eps / act_dim
            idx = int(rng.choice(act_dim, size=None, p=mixed / mixed.sum()))
        else:
            idx = int(np.argmax(first))
        return np.eye(act_dim, dtype=np.float32)[idx]

    act_dim = model.action_dim
    mean = np.zeros((cfg.horizon, act_dim))
    std = np.full((cfg.horizon, act_dim), cfg.init_std)
    for it in range(cfg.iterations):
        noise = rng.normal((n_free, cfg.horizon, act_dim))
        cands = np.clip(mean + std * noise, -1.0, 1.0).astype(np.float32)
        if pi_trajs is not None:
            cands = np.concatenate([cands, pi_trajs], axis=0)
        returns = estimate_returns(model, heads, state, cands, gamma)
        elite_idx = np.argsort(returns)[-cfg.num_elites:]
        if trace_sink is not None:
            trace_sink({
                "iteration": it,
                "returns": [float(v) for v in returns],
                "elite_indices": [int(i) for i in elite_idx],
            })
        w = _elite_weights(returns, elite_idx, cfg.temperature)
        elite = cands[elite_idx]
        new_mean = (w[:, None, None] * elite).sum(axis=0)
        var = (w[:, None, None] * (elite - new_mean) ** 2).sum(axis=0)
        mean = cfg.momentum * mean + (1.0 - cfg.momentum) * new_mean
        std = np.maximum(np.sqrt(var), cfg.action_noise_floor)
    first = mean[0]
    if explore:
        first = first + std[0] * rng.normal(act_dim)
    return np.clip(first, -1.0, 1.0).astype(np.float32)
