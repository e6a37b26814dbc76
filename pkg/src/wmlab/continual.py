"""Task-sequence orchestration: per-task initialization, dual-agent data
collection, the update cadence, snapshot management, checkpoints, and the
few-shot transfer protocol.

Per task: heads are freshly initialized and only the world model (and, for
rehearsal methods, the generative model) carries over. From the second task
on, a frozen snapshot of the previous dynamics net and generator is the sole
carrier of old-task knowledge. Each episode pair is followed by as many
update iterations as the learner episode had steps.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    EwcState,
    ReservoirBuffer,
    bounded_replay_capacity,
    bounded_replay_mix,
    ewc_penalty,
    fisher_estimate,
    wiring_for_method,
)
from .envs import GridWorldSpec, TaskSpec, Transition, env_reset, env_step
from .nnkit import AdamState, Rng, load_bundle, read_manifest, save_bundle, write_manifest
from .planner import PlannerConfig, plan
from .rehearsal import (
    FrozenSnapshot,
    RehearsalConfig,
    VAEModel,
    VAEOptimizers,
    combined_dynamics_update,
    continual_vae_update,
)
from .reviewer import ReviewerConfig, intrinsic_reward, label_learner_batch, reviewer_rollout
from .worldmodel import (
    AgentHeads,
    HeadOptimizers,
    SegmentBatch,
    StepBatch,
    TrainConfig,
    WorldModel,
    multi_step_update,
    update_targets,
)


@dataclass
class SequenceSpec:
    tasks: list[TaskSpec]
    episodes_per_task: int
    seed: int
    method: str = "drago"

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("task sequence must be nonempty")
        ids = [t.task_id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("task ids must be unique within a sequence")
        wiring_for_method(self.method)  # validates the name


@dataclass
class LabConfig:
    """Everything the trainer needs beyond the sequence itself."""

    train: TrainConfig = field(default_factory=TrainConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    rehearsal: RehearsalConfig = field(default_factory=RehearsalConfig)
    reviewer: ReviewerConfig = field(default_factory=ReviewerConfig)
    vae_latent_dim: int = 64
    vae_hidden_dim: int = 128
    ewc_lambda: float = 10.0
    fisher_batches: int = 8
    buffer_capacity: int = 100_000
    eval_every: int = 10
    eval_episodes: int = 5


class ReplayBuffer:
    """FIFO transition store with uniform and segment sampling.

    Episodes are stored contiguously with an episode id per slot so segment
    sampling never crosses episode boundaries (or overwritten history).
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, role: str = "learner"):
        self.capacity = capacity
        self.role = role
        self.states = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float32)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.next_states = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=bool)
        self.ep_ids = np.full(capacity, -1, dtype=np.int64)
        self.head = 0  # next physical write slot
        self.size = 0
        self._next_ep = 0

    def __len__(self):
        return self.size

    def clear(self):
        self.head = 0
        self.size = 0
        self.ep_ids[:] = -1

    def add_episode(self, transitions: list[Transition]):
        ep = self._next_ep
        self._next_ep += 1
        for t in transitions:
            i = self.head
            self.states[i] = t.state
            self.actions[i] = t.action
            self.rewards[i] = t.reward
            self.next_states[i] = t.next_state
            self.dones[i] = t.done
            self.ep_ids[i] = ep
            self.head = (self.head + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def _physical(self, logical):
        if self.size < self.capacity:
            return logical
        return (self.head + logical) % self.capacity

    def _gather(self, idx) -> StepBatch:
        return StepBatch(
            self.states[idx], self.actions[idx], self.rewards[idx],
            self.next_states[idx], self.dones[idx],
        )

    def sample_step_batch(self, n: int, rng: Rng) -> StepBatch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        n_eff = min(n, self.size)
        logical = rng.choice(self.size, n_eff, replace=False)
        return self._gather(self._physical(logical))

    def all_step_batch(self) -> StepBatch:
        return self._gather(self._physical(np.arange(self.size)))

    def sample_segments(self, n: int, horizon: int, rng: Rng) -> SegmentBatch:
        """Uniformly chosen segment starts; segments truncate at episode ends."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        n_eff = min(n, self.size)
        starts = rng.choice(self.size, n_eff, replace=False)
        logical = starts[:, None] + np.arange(horizon)[None, :]
        in_range = logical < self.size
        phys = self._physical(np.minimum(logical, self.size - 1))
        start_ep = self.ep_ids[self._physical(starts)]
        valid = in_range & (self.ep_ids[phys] == start_ep[:, None])
        return SegmentBatch(
            states=self.states[phys] * valid[:, :, None],
            actions=self.actions[phys] * valid[:, :, None],
            rewards=self.rewards[phys] * valid,
            next_states=self.next_states[phys] * valid[:, :, None],
            dones=self.dones[phys] & valid,
            valid=valid,
        )


def is_discrete(task: TaskSpec) -> bool:
    return isinstance(task.env, GridWorldSpec)


def rollout_episode(
    task: TaskSpec,
    model: WorldModel,
    heads: AgentHeads,
    planner_cfg: PlannerConfig,
    rng: Rng,
    gamma: float,
    explore: bool,
    reward_shaper=None,
) -> list[Transition]:
    """One environment episode planned against the given heads.

    ``reward_shaper(transition) -> float`` may replace the stored reward
    (used by the single-learner intrinsic-reward ablation).
    """
    transitions = []
    state = env_reset(task, rng)
    for _ in range(task.env.max_steps):
        action = plan(model, heads, state, planner_cfg, rng, gamma=gamma, explore=explore)
        next_state, reward, done = env_step(task.env, state, action)
        t = Transition(state, action, float(reward), next_state, done)
        if reward_shaper is not None:
            t.reward = float(reward_shaper(t))
        transitions.append(t)
        state = next_state
        if done:
            break
    return transitions


def episode_return(transitions) -> float:
    return float(sum(t.reward for t in transitions))


class ContinualTrainer:
    """Runs a task sequence under one method wiring, logging into a RunRecord."""

    def __init__(self, seq: SequenceSpec, cfg: LabConfig, record=None, wiring_override=None):
        from .evalkit import RunRecord

        self.seq = seq
        self.cfg = cfg
        # the override exists for degeneracy audits (e.g. the full method
        # with every optional component disabled must reproduce the naive
        # baseline bit for bit)
        self.wiring = wiring_override if wiring_override is not None else wiring_for_method(seq.method)
        self.root_rng = Rng(seq.seed)
        env = seq.tasks[0].env
        self.obs_dim = env.obs_dim
        self.action_dim = env.action_dim
        self.discrete = is_discrete(seq.tasks[0])

        self.model: WorldModel | None = None
        self.vae: VAEModel | None = None
        self.vae_opts: VAEOptimizers | None = None
        self.adam_dynamics: AdamState | None = None
        self.learner: AgentHeads | None = None
        self.reviewer: AgentHeads | None = None
        self.learner_opt: HeadOptimizers | None = None
        self.reviewer_opt: HeadOptimizers | None = None
        self.snapshot: FrozenSnapshot | None = None
        self.ewc: EwcState | None = None

        self.buffer_l = ReplayBuffer(cfg.buffer_capacity, self.obs_dim, self.action_dim, "learner")
        self.buffer_r = ReplayBuffer(cfg.buffer_capacity, self.obs_dim, self.action_dim, "reviewer")
        self.retained = (
            ReservoirBuffer(
                bounded_replay_capacity(
                    self.obs_dim, self.action_dim, cfg.vae_latent_dim, cfg.vae_hidden_dim
                ),
                self.obs_dim,
                self.action_dim,
            )
            if self.wiring.use_bounded_replay
            else None
        )

        self.record = record if record is not None else RunRecord()
        self.counters = Counter()
        self.task_index = -1
        self.global_step = 0  # update iterations across the whole sequence
        self.env_steps = 0

    # ------------------------------------------------------------ lifecycle

    def _log(self, task_id, name, value):
        self.record.add(
            global_step=self.global_step,
            env_steps=self.env_steps,
            task_id=task_id,
            metric_name=name,
            value=float(value),
            seed=self.seq.seed,
            method=self.seq.method,
        )

    def _init_stack(self, task_tag: str):
        rng = self.root_rng.split(f"init/{task_tag}")
        t = self.cfg.train
        self.model = WorldModel.create(self.obs_dim, self.action_dim, t.hidden_dim, t.n_hidden, rng)
        self.adam_dynamics = AdamState.for_params(self.model.dynamics, t.lr)
        if self.wiring.use_vae:
            self.vae = VAEModel.create(
                self.obs_dim, self.action_dim, self.cfg.vae_latent_dim,
                self.cfg.vae_hidden_dim, rng.split("vae"),
                discrete_actions=self.discrete,
            )
            self.vae_opts = VAEOptimizers.create(self.vae, t.lr)

    def _init_heads(self, task_tag: str):
        rng = self.root_rng.split(f"heads/{task_tag}")
        t = self.cfg.train
        self.learner = AgentHeads.create(
            self.obs_dim, self.action_dim, t.hidden_dim, t.n_hidden, rng, "learner", self.discrete
        )
        self.learner_opt = HeadOptimizers.create(self.learner, t.lr)
        if self.wiring.use_reviewer:
            self.reviewer = AgentHeads.create(
                self.obs_dim, self.action_dim, t.hidden_dim, t.n_hidden, rng, "reviewer", self.discrete
            )
            self.reviewer_opt = HeadOptimizers.create(self.reviewer, t.lr)
        else:
            self.reviewer = None
            self.reviewer_opt = None

    def begin_task(self, task: TaskSpec):
        """Task-boundary bookkeeping: snapshot, carryover/reinit, buffer resets."""
        self.task_index += 1
        first = self.task_index == 0
        tag = f"task{self.task_index}"

        if not first:
            if self.wiring.use_ewc and len(self.buffer_l) > 0:
                fisher = fisher_estimate(
                    self.model, self.buffer_l, self.cfg.fisher_batches,
                    self.cfg.train.batch_size, self.root_rng.split(f"ewc/{tag}"),
                    self.cfg.train.c1,
                )
                self.ewc = EwcState(
                    fisher, self.model.dynamics.weights.copy(),
                    self.cfg.ewc_lambda, self.cfg.fisher_batches,
                )
                self.counters["fisher_estimates"] += 1
            if self.retained is not None:
                self.retained.offer_batch(
                    self.buffer_l.all_step_batch(), self.root_rng.split(f"reservoir/{tag}")
                )
            if self.wiring.needs_snapshot:
                self.snapshot = FrozenSnapshot.take(
                    self.model, self.vae, self.seq.tasks[self.task_index - 1].task_id
                )
                self.counters["snapshots_taken"] += 1

        if first or not self.wiring.carry_dynamics:
            self._init_stack(tag)
        self._init_heads(tag)
        self.buffer_l.clear()
        self.buffer_r.clear()
        self._task_updates = 0

    def _reviewer_active(self) -> bool:
        return self.wiring.use_reviewer and self.snapshot is not None

    def _learner_reward_shaper(self):
        if not (self.wiring.learner_intrinsic and self.snapshot is not None):
            return None
        snapshot, model, rcfg = self.snapshot, self.model, self.cfg.reviewer

        def shaper(t: Transition) -> float:
            return t.reward + intrinsic_reward(snapshot, model, t, rcfg)

        return shaper

    # ------------------------------------------------------------- updates

    def _dynamics_extra(self, rng: Rng):
        """Optional extra gradient source for the dynamics step."""
        if self.wiring.use_ewc and self.ewc is not None:
            model, ewc = self.model, self.ewc
            return lambda m: ("ewc/penalty", ewc_penalty(m, ewc))
        if self.retained is not None and len(self.retained) > 0:
            t = self.cfg.train

            def replay_term(m):
                current = self.buffer_l.sample_step_batch(t.batch_size, rng)
                mixed = bounded_replay_mix(current, self.retained, t.batch_size, rng)
                from .worldmodel import dynamics_loss

                return "replay/dynamics_mixed", dynamics_loss(m, mixed, t.c1)

            return replay_term
        return None

    def _update_once(self, task: TaskSpec, rng_sample_l, rng_sample_r, rng_vae, rng_synth):
        t = self.cfg.train
        self.global_step += 1
        self._task_updates += 1
        seg_l = self.buffer_l.sample_segments(t.batch_size, t.horizon, rng_sample_l)

        reviewer = reviewer_seg = relabel = None
        if self._reviewer_active() and len(self.buffer_r) > 0:
            reviewer = self.reviewer
            reviewer_seg = self.buffer_r.sample_segments(t.batch_size, t.horizon, rng_sample_r)
            relabel = label_learner_batch(
                self.snapshot, self.model, seg_l.first_step(), self.cfg.reviewer
            )

        report = multi_step_update(
            self.model, self.adam_dynamics,
            self.learner, self.learner_opt, seg_l, t,
            reviewer=reviewer, reviewer_opt=self.reviewer_opt,
            reviewer_seg=reviewer_seg, learner_relabel=relabel,
            dynamics_extra=self._dynamics_extra(rng_sample_l),
        )
        self.counters["updates"] += 1

        if self.wiring.use_vae:
            vae_batch = self.buffer_l.sample_step_batch(t.batch_size, rng_vae)
            vae_snapshot = self.snapshot if self.wiring.vae_continual else None
            report.update(
                continual_vae_update(
                    self.vae, self.vae_opts, vae_snapshot,
                    vae_batch.states, vae_batch.actions, rng_vae,
                )
            )
            self.counters["vae_updates"] += 1

        if (
            self.wiring.use_synth
            and self.snapshot is not None
            and self._task_updates % self.cfg.rehearsal.rehearsal_interval == 0
        ):
            real = self.buffer_l.sample_step_batch(t.batch_size, rng_synth)
            report.update(
                combined_dynamics_update(
                    self.model, self.adam_dynamics, real, self.snapshot,
                    self.cfg.rehearsal, rng_synth, t.c1, self.discrete,
                )
            )
            self.counters["synth_updates"] += 1

        if self._task_updates % t.target_update_freq == 0:
            update_targets(self.model, [self.learner, self.reviewer], t)
        return report

    # ------------------------------------------------------------ training

    def evaluate(self, task: TaskSpec, rng: Rng, episodes: int | None = None):
        """Greedy (noise-free) evaluation episodes; returns (mean return,
        success rate)."""
        episodes = episodes if episodes is not None else self.cfg.eval_episodes
        returns, successes = [], []
        for _ in range(episodes):
            ep = rollout_episode(
                task, self.model, self.learner, self.cfg.planner, rng,
                self.cfg.train.gamma, explore=False,
            )
            returns.append(episode_return(ep))
            successes.append(float(ep[-1].done))
        return float(np.mean(returns)), float(np.mean(successes))

    def train_task(self, task: TaskSpec):
        """Run episodes_per_task episode pairs with per-step-count updates."""
        tag = f"task{self.task_index}"
        rng_roll_l = self.root_rng.split(f"rollout/learner/{tag}")
        rng_roll_r = self.root_rng.split(f"rollout/reviewer/{tag}")
        rng_sample_l = self.root_rng.split(f"sample/learner/{tag}")
        rng_sample_r = self.root_rng.split(f"sample/reviewer/{tag}")
        rng_vae = self.root_rng.split(f"vae/{tag}")
        rng_synth = self.root_rng.split(f"synth/{tag}")

        for ep in range(self.seq.episodes_per_task):
            learner_ep = rollout_episode(
                task, self.model, self.learner, self.cfg.planner, rng_roll_l,
                self.cfg.train.gamma, explore=True,
                reward_shaper=self._learner_reward_shaper(),
            )
            self.buffer_l.add_episode(learner_ep)
            self.env_steps += len(learner_ep)
            self.counters["env_steps/learner"] += len(learner_ep)

            if self._reviewer_active():
                reviewer_ep = reviewer_rollout(
                    task, self.snapshot, self.model, self.reviewer,
                    self.cfg.planner, self.cfg.reviewer, rng_roll_r,
                    gamma=self.cfg.train.gamma,
                )
                self.buffer_r.add_episode(reviewer_ep)
                self.env_steps += len(reviewer_ep)
                self.counters["env_steps/reviewer"] += len(reviewer_ep)
                self.counters["reviewer_episodes"] += 1
                self._log(task.task_id, "train/reviewer_return", episode_return(reviewer_ep))

            loss_sums = Counter()
            n_updates = len(learner_ep)
            for _ in range(n_updates):
                report = self._update_once(task, rng_sample_l, rng_sample_r, rng_vae, rng_synth)
                for k, v in report.items():
                    loss_sums[k] += v

            self._log(task.task_id, "train/learner_return", episode_return(learner_ep))
            self._log(task.task_id, "train/episode_len", len(learner_ep))
            for k, total in loss_sums.items():
                self._log(task.task_id, f"loss/{k}", total / max(n_updates, 1))

            if (ep + 1) % self.cfg.eval_every == 0:
                rng_eval = self.root_rng.split(f"eval/{tag}/ep{ep}")
                mean_ret, success = self.evaluate(task, rng_eval)
                self._log(task.task_id, "eval/return_mean", mean_ret)
                self._log(task.task_id, "eval/success_rate", success)

        self._log(task.task_id, "task/env_steps_learner", self.counters["env_steps/learner"])
        self._log(task.task_id, "task/env_steps_reviewer", self.counters["env_steps/reviewer"])

    def run(self, out_dir: str | Path | None = None):
        """Train the whole sequence; optionally write per-task checkpoints
        and heatmaps under ``out_dir``."""
        from .evalkit import prediction_heatmap, export_heatmap_pgm
        from .envs import make_eval_env

        out_dir = Path(out_dir) if out_dir is not None else None
        heatmaps = []
        for task in self.seq.tasks:
            self.begin_task(task)
            self.train_task(task)
            if self.discrete:
                grid = prediction_heatmap(self.model, make_eval_env())
                heatmaps.append(grid)
            if out_dir is not None:
                task_dir = out_dir / f"task_{task.task_id}"
                save_checkpoint(task_dir, self)
                if self.discrete:
                    export_heatmap_pgm(heatmaps[-1], task_dir / "heatmap.pgm")
        return heatmaps


# ------------------------------------------------------------- checkpoints


def save_checkpoint(task_dir: str | Path, trainer: ContinualTrainer):
    """Write {dynamics,vae,heads}.bin plus a manifest for one finished task."""
    task_dir = Path(task_dir)
    task_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"task_index": trainer.task_index, "method": trainer.seq.method, "files": {}}
    manifest["files"]["dynamics.bin"] = save_bundle(
        task_dir / "dynamics.bin",
        {"dynamics": trainer.model.dynamics, "dynamics_target": trainer.model.dynamics_target},
    )
    if trainer.vae is not None:
        manifest["files"]["vae.bin"] = save_bundle(
            task_dir / "vae.bin",
            {"encoder": trainer.vae.encoder, "decoder": trainer.vae.decoder},
        )
    heads = {
        "learner/reward": trainer.learner.reward,
        "learner/value": trainer.learner.value,
        "learner/policy": trainer.learner.policy,
        "learner/value_target": trainer.learner.value_target,
    }
    if trainer.reviewer is not None:
        heads.update({
            "reviewer/reward": trainer.reviewer.reward,
            "reviewer/value": trainer.reviewer.value,
            "reviewer/policy": trainer.reviewer.policy,
            "reviewer/value_target": trainer.reviewer.value_target,
        })
    manifest["files"]["heads.bin"] = save_bundle(task_dir / "heads.bin", heads)
    write_manifest(task_dir / "manifest.json", manifest)


def load_dynamics(task_dir: str | Path) -> dict:
    """Load the dynamics bundle from a task checkpoint directory."""
    task_dir = Path(task_dir)
    manifest = read_manifest(task_dir / "manifest.json")
    return load_bundle(task_dir / "dynamics.bin", manifest["files"]["dynamics.bin"])


# ---------------------------------------------------------- few-shot eval


def few_shot_eval(
    checkpoint_task_dir: str | Path | None,
    test_task: TaskSpec,
    cfg: LabConfig,
    seed: int,
    budget_episodes: int = 20,
    eval_episodes: int = 5,
) -> dict:
    """Adapt to a test task under a strict interaction budget.

    Loads only the dynamics net from the checkpoint (fresh heads, empty
    buffer), trains learner-only for ``budget_episodes`` episodes with the
    standard per-step-count update cadence, then reports the mean return and
    success rate over noise-free evaluation episodes.
    """
    seq = SequenceSpec([test_task], episodes_per_task=budget_episodes, seed=seed, method="scratch")
    trainer = ContinualTrainer(seq, cfg)
    trainer.begin_task(test_task)
    if checkpoint_task_dir is not None:
        loaded = load_dynamics(checkpoint_task_dir)
        trainer.model.dynamics.copy_from(loaded["dynamics"])
        trainer.model.dynamics_target.copy_from(loaded["dynamics_target"])
    if budget_episodes > 0:
        trainer.train_task(test_task)
    rng_eval = trainer.root_rng.split("fewshot/eval")
    mean_ret, success = trainer.evaluate(test_task, rng_eval, episodes=eval_episodes)
    return {
        "mean_return": mean_ret,
        "success_rate": success,
        "budget_episodes": budget_episodes,
        "eval_episodes": eval_episodes,
    }
