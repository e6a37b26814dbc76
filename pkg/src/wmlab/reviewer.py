"""The reviewer: an auxiliary agent paid to revisit what the old model knows.

Its reward is high where the frozen previous dynamics net predicts well and
the current one does not, pushing the agent back toward previously mastered
regions and the paths connecting them to the current task.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import TaskSpec, Transition, env_reset, env_step
from .nnkit.rng import Rng
from .planner import PlannerConfig, plan
from .rehearsal import FrozenSnapshot
from .worldmodel import AgentHeads, StepBatch, WorldModel


@dataclass
class ReviewerConfig:
    alpha: float = 0.5  # weight of the current-model familiarity penalty
    error_floor: float = 1e-6  # clamp so exact predictions don't hit log(0)
    error_norm: str = "l2"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.error_floor <= 0:
            raise ValueError("error_floor must be positive")
        if self.error_norm not in ("l2", "l1"):
            raise ValueError("error_norm must be 'l2' or 'l1'")


def _prediction_errors(dynamics, states, actions, next_states, cfg: ReviewerConfig):
    from .nnkit import mlp_eval

    x = np.concatenate([states, actions], axis=-1)
    pred = mlp_eval(dynamics, x)
    diff = pred - next_states
    if cfg.error_norm == "l2":
        err = np.sqrt((diff * diff).sum(axis=-1))
    else:
        err = np.abs(diff).sum(axis=-1)
    return np.maximum(err, cfg.error_floor)


def intrinsic_rewards(
    snapshot: FrozenSnapshot,
    model: WorldModel,
    states,
    actions,
    next_states,
    cfg: ReviewerConfig,
) -> np.ndarray:
    """Vectorized reviewer reward over transition arrays.

    sigmoid(-log e) equals 1/(1+e) for positive e, so the reward is computed
    as 1/(1+e_old) - alpha/(1+e_new) with the prediction errors clamped to
    the floor. Values lie strictly inside (-alpha, 1).
    """
    if snapshot is None:
        raise RuntimeError("no frozen snapshot: the reviewer is inactive during the first task")
    states = np.asarray(states, dtype=np.float32)
    actions = np.asarray(actions, dtype=np.float32)
    next_states = np.asarray(next_states, dtype=np.float32)
    e_old = _prediction_errors(snapshot.dynamics_old, states, actions, next_states, cfg)
    e_new = _prediction_errors(model.dynamics, states, actions, next_states, cfg)
    return (1.0 / (1.0 + e_old) - cfg.alpha / (1.0 + e_new)).astype(np.float32)


def intrinsic_reward(
    snapshot: FrozenSnapshot, model: WorldModel, t: Transition, cfg: ReviewerConfig
) -> float:
    return float(
        intrinsic_rewards(
            snapshot, model, t.state[None], t.action[None], t.next_state[None], cfg
        )[0]
    )


def label_learner_batch(
    snapshot: FrozenSnapshot, model: WorldModel, batch: StepBatch, cfg: ReviewerConfig
) -> np.ndarray:
    """Reviewer rewards for learner transitions, computed against the model
    as it is *now* (not as it was when the data was collected)."""
    if len(batch) == 0:
        return np.zeros(0, dtype=np.float32)
    return intrinsic_rewards(
        snapshot, model, batch.states, batch.actions, batch.next_states, cfg
    )


def visitation_counts(transitions, env) -> np.ndarray:
    """Per-cell visit counts over an episode list (gridworld only); walls
    stay zero. Export with evalkit.export_visitation_pgm."""
    from .envs import decode_obs

    counts = np.zeros((env.size, env.size), dtype=np.int64)
    for t in transitions:
        x, y = decode_obs(t.next_state, env.size)
        counts[y, x] += 1
    return counts


def reviewer_rollout(
    task: TaskSpec,
    snapshot: FrozenSnapshot,
    model: WorldModel,
    reviewer_heads: AgentHeads,
    planner_cfg: PlannerConfig,
    reviewer_cfg: ReviewerConfig,
    rng: Rng,
    gamma: float = 0.99,
    explore: bool = True,
) -> list[Transition]:
    """One reviewer episode: plan against the reviewer's own heads, store the
    intrinsic reward computed at collection time."""
    transitions = []
    state = env_reset(task, rng)
    for _ in range(task.env.max_steps):
        action = plan(model, reviewer_heads, state, planner_cfg, rng, gamma=gamma, explore=explore)
        next_state, _, done = env_step(task.env, state, action)
        r = intrinsic_reward(
            snapshot, model, Transition(state, action, 0.0, next_state, done), reviewer_cfg
        )
        transitions.append(Transition(state, action, r, next_state, done))
        state = next_state
        if done:
            break
    return transitions
