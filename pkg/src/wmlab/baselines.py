"""Comparison methods, each a wiring of the shared stack.

Every method runs the same rollout/update/planning code; the wiring flags
pick which optional pieces participate. The EWC baseline adds a diagonal
Fisher penalty on the dynamics parameters; bounded replay retains a
reservoir of past-task transitions sized to match the generative model's
memory footprint; pseudo-rehearsal keeps generating from the first trained
generator but stops training it continually.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnkit.rng import Rng
from .worldmodel import StepBatch, WorldModel, dynamics_loss

METHODS = (
    "drago",
    "drago_no_rehearsal",
    "drago_no_reviewer",
    "naive_continual",
    "scratch",
    "ewc",
    "bounded_replay",
    "pseudo_rehearsal",
    "single_learner_intrinsic",
)


@dataclass(frozen=True)
class MethodWiring:
    carry_dynamics: bool = True  # load the world model across task boundaries
    use_reviewer: bool = False
    use_vae: bool = False  # train a generative model at all
    vae_continual: bool = False  # mix frozen-generator samples into VAE training
    use_synth: bool = False  # interval synthetic-transition dynamics updates
    use_ewc: bool = False
    use_bounded_replay: bool = False
    learner_intrinsic: bool = False  # fold the reviewer reward into the learner's

    @property
    def needs_snapshot(self) -> bool:
        return self.use_reviewer or self.use_synth or self.vae_continual or self.learner_intrinsic


_WIRINGS = {
    "drago": MethodWiring(use_reviewer=True, use_vae=True, vae_continual=True, use_synth=True),
    "drago_no_rehearsal": MethodWiring(use_reviewer=True),
    "drago_no_reviewer": MethodWiring(use_vae=True, vae_continual=True, use_synth=True),
    "naive_continual": MethodWiring(),
    "scratch": MethodWiring(carry_dynamics=False),
    "ewc": MethodWiring(use_ewc=True),
    "bounded_replay": MethodWiring(use_bounded_replay=True),
    "pseudo_rehearsal": MethodWiring(use_vae=True, use_synth=True),
    "single_learner_intrinsic": MethodWiring(
        use_vae=True, vae_continual=True, use_synth=True, learner_intrinsic=True
    ),
}


def wiring_for_method(method: str) -> MethodWiring:
    if method not in _WIRINGS:
        raise ValueError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    return _WIRINGS[method]


def pseudo_rehearsal_mode() -> MethodWiring:
    """Synthetic transitions from the first trained generator, no continual
    generator training, no reviewer."""
    return _WIRINGS["pseudo_rehearsal"]


# ------------------------------------------------------------------- EWC


@dataclass
class EwcState:
    fisher_diag: np.ndarray
    anchor_params: np.ndarray  # dynamics weights at the last task boundary
    ewc_lambda: float
    fisher_batches: int


def fisher_estimate(model: WorldModel, buffer, n_batches: int, batch_size: int, rng: Rng, c1: float) -> np.ndarray:
    """Diagonal Fisher proxy: mean squared gradient of the dynamics loss
    over batches drawn from end-of-task data."""
    if len(buffer) == 0:
        raise ValueError("cannot estimate Fisher information from an empty buffer")
    fisher = np.zeros(model.dynamics.n_params, dtype=np.float64)
    saved = model.dynamics.grads.copy()
    for _ in range(n_batches):
        batch = buffer.sample_step_batch(batch_size, rng)
        model.dynamics.zero_grads()
        dynamics_loss(model, batch, c1)
        fisher += model.dynamics.grads.astype(np.float64) ** 2
    model.dynamics.grads[:] = saved
    return (fisher / n_batches).astype(np.float32)


def ewc_penalty(model: WorldModel, ewc: EwcState) -> float:
    """(lambda/2) * sum_j F_j (psi_j - psi*_j)^2, gradient accumulated into
    the dynamics parameters."""
    diff = model.dynamics.weights - ewc.anchor_params
    loss = 0.5 * ewc.ewc_lambda * float((ewc.fisher_diag * diff * diff).sum())
    if ewc.ewc_lambda != 0.0:
        model.dynamics.grads += ewc.ewc_lambda * ewc.fisher_diag * diff
    return loss


# -------------------------------------------------------- bounded replay


def transition_nbytes(obs_dim: int, action_dim: int) -> int:
    """Raw 32-bit storage of one transition: s, s', a, reward, done, task id."""
    return 4 * (2 * obs_dim + action_dim + 3)


def vae_param_count(obs_dim: int, action_dim: int, latent_dim: int, hidden_dim: int) -> int:
    d = obs_dim + action_dim
    encoder = d * hidden_dim + hidden_dim + hidden_dim * 2 * latent_dim + 2 * latent_dim
    decoder = latent_dim * hidden_dim + hidden_dim + hidden_dim * d + d
    return encoder + decoder


def bounded_replay_capacity(obs_dim, action_dim, latent_dim, hidden_dim) -> int:
    """Transitions storable in the bytes the generative model would occupy."""
    vae_bytes = 4 * vae_param_count(obs_dim, action_dim, latent_dim, hidden_dim)
    return vae_bytes // transition_nbytes(obs_dim, action_dim)


class ReservoirBuffer:
    """Uniform reservoir sample over an unbounded stream of transitions."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_states = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.n_seen = 0

    def __len__(self):
        return self.size

    def offer(self, state, action, reward, next_state, done, rng: Rng):
        self.n_seen += 1
        if self.size < self.capacity:
            slot = self.size
            self.size += 1
        else:
            j = int(rng.integers(0, self.n_seen))
            if j >= self.capacity:
                return
            slot = j
        self.states[slot] = state
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.next_states[slot] = next_state
        self.dones[slot] = done

    def offer_batch(self, batch: StepBatch, rng: Rng):
        for i in range(len(batch)):
            self.offer(
                batch.states[i], batch.actions[i], batch.rewards[i],
                batch.next_states[i], batch.dones[i], rng,
            )

    def sample(self, n: int, rng: Rng) -> StepBatch:
        n_eff = min(n, self.size)
        idx = rng.choice(self.size, n_eff, replace=False)
        return StepBatch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.dones[idx],
        )


def bounded_replay_mix(current: StepBatch, retained: ReservoirBuffer, batch_size: int, rng: Rng) -> StepBatch:
    """50/50 mix of current-task and retained past-task transitions.

    An empty reservoir (first task) degrades to the current batch alone.
    Short supplies on the retained side are topped up from the current batch.
    """
    if len(retained) == 0:
        return current
    old = retained.sample(batch_size // 2, rng)
    n_cur = batch_size - len(old)
    keep = min(n_cur, len(current))
    return StepBatch(
        np.concatenate([current.states[:keep], old.states]),
        np.concatenate([current.actions[:keep], old.actions]),
        np.concatenate([current.rewards[:keep], old.rewards]),
        np.concatenate([current.next_states[:keep], old.next_states]),
        np.concatenate([current.dones[:keep], old.dones]),
    )
