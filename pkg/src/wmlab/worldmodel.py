"""The learnable model stack: dynamics, reward, value, and policy heads.

The dynamics net is a deterministic point predictor of the next observation.
Reward and value heads regress on the first step of sampled horizon segments
only; the policy maximizes the value head; the dynamics net trains on the
full horizon with per-step temporal discounting, backpropagating through its
own chained predictions. Gradients from the head losses never reach the
dynamics parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnkit import (
    AdamState,
    ModelParams,
    adam_step,
    backward_cached,
    forward_cached,
    init_mlp,
    mlp_eval,
    softmax,
    softmax_backward,
)
from .nnkit.rng import Rng


@dataclass
class TrainConfig:
    gamma: float = 0.99
    c1: float = 2.0  # dynamics/consistency loss coefficient
    c2: float = 0.5  # reward loss coefficient
    c3: float = 0.1  # value loss coefficient
    rho_temporal: float = 0.5  # per-step discount on horizon losses
    tau_soft: float = 0.01
    target_update_freq: int = 40
    batch_size: int = 512
    horizon: int = 10
    lr: float = 1e-3
    hidden_dim: int = 512
    n_hidden: int = 2

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 < self.rho_temporal <= 1.0:
            raise ValueError("rho_temporal must be in (0, 1]")
        for name in ("c1", "c2", "c3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


@dataclass
class WorldModel:
    dynamics: ModelParams
    dynamics_target: ModelParams
    obs_dim: int
    action_dim: int

    @classmethod
    def create(cls, obs_dim, action_dim, hidden_dim, n_hidden, rng: Rng) -> "WorldModel":
        dims = [obs_dim + action_dim] + [hidden_dim] * n_hidden + [obs_dim]
        dynamics = init_mlp(dims, rng.split("dynamics"))
        return cls(dynamics, dynamics.copy(), obs_dim, action_dim)


@dataclass
class AgentHeads:
    reward: ModelParams
    value: ModelParams
    policy: ModelParams
    value_target: ModelParams
    role: str  # "learner" or "reviewer"
    discrete: bool

    @classmethod
    def create(cls, obs_dim, action_dim, hidden_dim, n_hidden, rng: Rng, role, discrete) -> "AgentHeads":
        sa = [obs_dim + action_dim] + [hidden_dim] * n_hidden + [1]
        pol = [obs_dim] + [hidden_dim] * n_hidden + [action_dim]
        reward = init_mlp(sa, rng.split(f"{role}/reward"))
        value = init_mlp(sa, rng.split(f"{role}/value"))
        policy = init_mlp(
            pol, rng.split(f"{role}/policy"),
            output_activation="identity" if discrete else "tanh",
        )
        return cls(reward, value, policy, value.copy(), role, discrete)


@dataclass
class HeadOptimizers:
    reward: AdamState
    value: AdamState
    policy: AdamState

    @classmethod
    def create(cls, heads: AgentHeads, lr: float) -> "HeadOptimizers":
        return cls(
            AdamState.for_params(heads.reward, lr),
            AdamState.for_params(heads.value, lr),
            AdamState.for_params(heads.policy, lr),
        )


@dataclass
class StepBatch:
    states: np.ndarray  # (B, obs)
    actions: np.ndarray  # (B, act)
    rewards: np.ndarray  # (B,)
    next_states: np.ndarray  # (B, obs)
    dones: np.ndarray  # (B,)

    def __len__(self):
        return len(self.states)


@dataclass
class SegmentBatch:
    """Horizon segments. Arrays are (B, H, ...); ``valid`` masks the tail of
    segments that hit an episode end before H steps."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return len(self.states)

    @property
    def horizon(self):
        return self.states.shape[1]

    def first_step(self) -> StepBatch:
        return StepBatch(
            self.states[:, 0],
            self.actions[:, 0],
            self.rewards[:, 0],
            self.next_states[:, 0],
            self.dones[:, 0],
        )


# ------------------------------------------------------------- primitives


def predict_next(model: WorldModel, state, action) -> np.ndarray:
    """Deterministic next-observation prediction; accepts single or batch."""
    state = np.asarray(state, dtype=np.float32)
    action = np.asarray(action, dtype=np.float32)
    return mlp_eval(model.dynamics, np.concatenate([state, action], axis=-1))


def policy_action(heads: AgentHeads, state) -> np.ndarray:
    """Greedy policy output: one-hot argmax for discrete, tanh mean for continuous."""
    out = mlp_eval(heads.policy, state)
    if not heads.discrete:
        return out
    idx = np.argmax(out, axis=-1)
    eye = np.eye(heads.policy.out_dim, dtype=np.float32)
    return eye[idx]


def soft_update(online: ModelParams, target: ModelParams, tau_soft: float):
    """target <- (1 - tau) * target + tau * online, per coordinate."""
    if online.weights.shape != target.weights.shape:
        raise ValueError("soft_update shape mismatch")
    target.weights *= 1.0 - tau_soft
    target.weights += tau_soft * online.weights


# ------------------------------------------------------------------ losses


def dynamics_loss(model: WorldModel, batch: StepBatch, c1: float) -> float:
    """Mean of c1 * ||T(s, a) - s'||^2 over the batch; gradients into the
    dynamics parameters only."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    x = np.concatenate([batch.states, batch.actions], axis=-1)
    pred, cache = forward_cached(model.dynamics, x)
    diff = pred - batch.next_states
    loss = c1 * float((diff * diff).sum(axis=-1).mean())
    if c1 != 0.0:
        backward_cached(model.dynamics, cache, (2.0 * c1 / len(batch)) * diff)
    return loss


def reward_loss(heads: AgentHeads, batch: StepBatch, c2: float) -> float:
    x = np.concatenate([batch.states, batch.actions], axis=-1)
    pred, cache = forward_cached(heads.reward, x)
    diff = pred[:, 0] - batch.rewards
    loss = c2 * float((diff * diff).mean())
    if c2 != 0.0:
        backward_cached(heads.reward, cache, (2.0 * c2 / len(batch)) * diff[:, None])
    return loss


def td_target(heads: AgentHeads, batch: StepBatch, gamma: float) -> np.ndarray:
    """r + gamma * Q_target(s', pi(s')) with terminal masking. Constant
    w.r.t. every parameter block: bootstraps through the target copy only."""
    a_next = policy_action(heads, batch.next_states)
    x = np.concatenate([batch.next_states, a_next], axis=-1)
    q_next = mlp_eval(heads.value_target, x)
    return batch.rewards + gamma * (1.0 - batch.dones.astype(np.float32)) * q_next[:, 0]


def value_loss(heads: AgentHeads, batch: StepBatch, gamma: float, c3: float) -> float:
    target = td_target(heads, batch, gamma)
    x = np.concatenate([batch.states, batch.actions], axis=-1)
    q, cache = forward_cached(heads.value, x)
    diff = q[:, 0] - target
    loss = c3 * float((diff * diff).mean())
    if c3 != 0.0:
        backward_cached(heads.value, cache, (2.0 * c3 / len(batch)) * diff[:, None])
    return loss


def policy_loss(heads: AgentHeads, states, weights=None) -> float:
    """Mean of -Q(s, pi(s)). Only the policy parameters receive gradient;
    the value net is read but never written. ``weights`` (per row, summing
    to whatever normalization the caller wants; default mean) reweight rows
    for temporally discounted horizon updates."""
    states = np.asarray(states)
    n = len(states)
    if weights is None:
        weights = np.full(n, 1.0 / n, dtype=np.float32)
    pi_out, pi_cache = forward_cached(heads.policy, states)
    if heads.discrete:
        act = softmax(pi_out, axis=-1)
    else:
        act = pi_out
    x = np.concatenate([states, act], axis=-1)
    q, q_cache = forward_cached(heads.value, x)
    loss = -float((weights * q[:, 0]).sum())
    upstream_q = (-weights)[:, None].astype(np.float32)
    g_in = backward_cached(heads.value, q_cache, upstream_q, write_grads=False)
    g_act = g_in[:, states.shape[-1]:]
    if heads.discrete:
        g_act = softmax_backward(act, g_act)
    backward_cached(heads.policy, pi_cache, g_act)
    return loss


# ------------------------------------------------- multi-step (horizon) update


def _rollout_dynamics(model: WorldModel, seg: SegmentBatch):
    """Chain H predictions from the segment's first state, caching each step.

    Returns (predicted_states, caches): predicted_states[i] is the input to
    step i (so [0] is the real first observation), and predictions[i+1] the
    model's estimate after applying action i.
    """
    B, H = seg.valid.shape
    s_hat = [seg.states[:, 0].astype(np.float32)]
    caches = []
    for i in range(H):
        x = np.concatenate([s_hat[i], seg.actions[:, i]], axis=-1)
        pred, cache = forward_cached(model.dynamics, x)
        caches.append(cache)
        s_hat.append(pred)
    return s_hat, caches


def _segment_weights(seg: SegmentBatch, rho: float) -> np.ndarray:
    """Per-(row, step) weights: rho^i on valid steps, renormalized to each
    segment's realized length."""
    B, H = seg.valid.shape
    rho_pow = rho ** np.arange(H, dtype=np.float64)
    w = seg.valid.astype(np.float64) * rho_pow
    lengths = np.maximum(seg.valid.sum(axis=1), 1)
    return (w / lengths[:, None]).astype(np.float32)


def _dynamics_segment_update(model, seg: SegmentBatch, s_hat, caches, c1, rho) -> float:
    """Accumulate BPTT gradients of the temporally weighted dynamics loss."""
    B, H = seg.valid.shape
    w = _segment_weights(seg, rho) / B  # (B, H)
    loss = 0.0
    per_step_diff = []
    for i in range(H):
        diff = (s_hat[i + 1] - seg.next_states[:, i]) * seg.valid[:, i, None]
        per_step_diff.append(diff)
        loss += c1 * float((w[:, i] * (diff * diff).sum(axis=-1)).sum())
    chain = np.zeros_like(s_hat[0])
    for i in range(H - 1, -1, -1):
        upstream = (2.0 * c1) * w[:, i, None] * per_step_diff[i] + chain
        g_in = backward_cached(model.dynamics, caches[i], upstream)
        chain = g_in[:, : model.obs_dim] * seg.valid[:, i, None]
    return loss


def _policy_segment_loss(heads, s_hat, seg: SegmentBatch, rho) -> float:
    """Temporally weighted policy loss over the predicted-state rollout.

    The predicted states are treated as constants here: policy gradients
    do not flow back into the dynamics net.
    """
    B, H = seg.valid.shape
    w = _segment_weights(seg, rho) / B
    flat_states = np.concatenate([s_hat[i] for i in range(H)], axis=0)
    flat_w = np.concatenate([w[:, i] for i in range(H)], axis=0)
    return policy_loss(heads, flat_states, weights=flat_w)


def multi_step_update(
    model: WorldModel,
    adam_dynamics: AdamState,
    learner: AgentHeads,
    learner_opt: HeadOptimizers,
    learner_seg: SegmentBatch,
    cfg: TrainConfig,
    reviewer: AgentHeads | None = None,
    reviewer_opt: HeadOptimizers | None = None,
    reviewer_seg: SegmentBatch | None = None,
    learner_relabel: np.ndarray | None = None,
    dynamics_extra=None,
) -> dict:
    """One joint update of both agents and the shared dynamics net.

    Head (reward/value) losses use only each segment's first transition; the
    reviewer's heads additionally train on the learner's first transitions
    relabeled with ``learner_relabel`` (intrinsic rewards computed by the
    caller against the current models). Policy and dynamics losses run over
    the horizon with rho_temporal discounting; dynamics gradients come from
    its own chained predictions on both agents' segments and from nothing
    else. ``dynamics_extra(model) -> (name, loss)`` may accumulate extra
    gradient into the dynamics parameters before its optimizer step (used
    for the EWC penalty and bounded-replay mixing).
    """
    report = {}
    first_l = learner_seg.first_step()
    report["learner/reward_loss"] = reward_loss(learner, first_l, cfg.c2)
    report["learner/value_loss"] = value_loss(learner, first_l, cfg.gamma, cfg.c3)

    if reviewer is not None:
        if reviewer_seg is None or reviewer_opt is None or learner_relabel is None:
            raise ValueError("reviewer updates need a segment batch, optimizers, and relabeled rewards")
        first_r = reviewer_seg.first_step()
        report["reviewer/reward_loss"] = reward_loss(reviewer, first_r, cfg.c2)
        report["reviewer/value_loss"] = value_loss(reviewer, first_r, cfg.gamma, cfg.c3)
        relabeled = StepBatch(
            first_l.states, first_l.actions,
            np.asarray(learner_relabel, dtype=np.float32),
            first_l.next_states, first_l.dones,
        )
        report["reviewer/reward_loss_on_learner"] = reward_loss(reviewer, relabeled, cfg.c2)
        report["reviewer/value_loss_on_learner"] = value_loss(reviewer, relabeled, cfg.gamma, cfg.c3)

    # horizon rollouts: dynamics BPTT plus policy losses on predicted states
    s_hat_l, caches_l = _rollout_dynamics(model, learner_seg)
    report["learner/policy_loss"] = _policy_segment_loss(learner, s_hat_l, learner_seg, cfg.rho_temporal)
    report["learner/dynamics_loss"] = _dynamics_segment_update(
        model, learner_seg, s_hat_l, caches_l, cfg.c1, cfg.rho_temporal
    )
    if reviewer is not None:
        s_hat_r, caches_r = _rollout_dynamics(model, reviewer_seg)
        report["reviewer/policy_loss"] = _policy_segment_loss(reviewer, s_hat_r, reviewer_seg, cfg.rho_temporal)
        report["reviewer/dynamics_loss"] = _dynamics_segment_update(
            model, reviewer_seg, s_hat_r, caches_r, cfg.c1, cfg.rho_temporal
        )

    if dynamics_extra is not None:
        name, extra = dynamics_extra(model)
        report[name] = extra

    adam_step(learner.reward, learner_opt.reward)
    adam_step(learner.value, learner_opt.value)
    adam_step(learner.policy, learner_opt.policy)
    if reviewer is not None:
        adam_step(reviewer.reward, reviewer_opt.reward)
        adam_step(reviewer.value, reviewer_opt.value)
        adam_step(reviewer.policy, reviewer_opt.policy)
    adam_step(model.dynamics, adam_dynamics)
    return report


def update_targets(model: WorldModel, heads_list, cfg: TrainConfig):
    """Soft-update all target copies (model and each agent's value target)."""
    soft_update(model.dynamics, model.dynamics_target, cfg.tau_soft)
    for heads in heads_list:
        if heads is not None:
            soft_update(heads.value, heads.value_target, cfg.tau_soft)
