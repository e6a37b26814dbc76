"""Generative rehearsal: a VAE over state-action pairs plus a frozen copy of
the previous task's models, used to synthesize old-task transitions while no
real old-task data exists.

Synthetic pairs come from the frozen decoder; their next states come from the
frozen dynamics net. The live dynamics net trains toward those frozen targets
at a fixed interval, and the live VAE trains on real data mixed with an
equal-sized batch generated by the frozen decoder, so the generator itself
keeps covering earlier tasks.
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
    gumbel_softmax_sample,
    init_mlp,
    mlp_eval,
    softmax,
)
from .nnkit.rng import Rng
from .worldmodel import StepBatch, WorldModel


@dataclass
class VAEModel:
    encoder: ModelParams  # (obs+act) -> (mu, logvar), concatenated
    decoder: ModelParams  # latent -> (state, action raw/logits)
    latent_dim: int
    obs_dim: int
    action_dim: int
    discrete_actions: bool
    recon_coef: float = 1.0
    kl_coef: float = 0.02

    @classmethod
    def create(
        cls, obs_dim, action_dim, latent_dim, hidden_dim, rng: Rng,
        discrete_actions=True, recon_coef=1.0, kl_coef=0.02,
    ) -> "VAEModel":
        enc = init_mlp([obs_dim + action_dim, hidden_dim, 2 * latent_dim], rng.split("encoder"))
        dec = init_mlp([latent_dim, hidden_dim, obs_dim + action_dim], rng.split("decoder"))
        return cls(enc, dec, latent_dim, obs_dim, action_dim, discrete_actions, recon_coef, kl_coef)


@dataclass
class VAEOptimizers:
    encoder: AdamState
    decoder: AdamState

    @classmethod
    def create(cls, vae: VAEModel, lr: float) -> "VAEOptimizers":
        return cls(AdamState.for_params(vae.encoder, lr), AdamState.for_params(vae.decoder, lr))


@dataclass(frozen=True)
class FrozenSnapshot:
    """Immutable copy of the previous task's dynamics net and VAE.

    Exactly one snapshot exists at a time; it is the sole carrier of
    past-task knowledge. Fields are deep copies, never written after
    construction. The generator halves are None for wirings that train no
    generative model (reviewer-only ablation).
    """

    dynamics_old: ModelParams
    encoder_old: ModelParams | None
    decoder_old: ModelParams | None
    source_task_id: int

    @classmethod
    def take(cls, model: WorldModel, vae: VAEModel | None, task_id: int) -> "FrozenSnapshot":
        return cls(
            dynamics_old=model.dynamics.copy(),
            encoder_old=vae.encoder.copy() if vae is not None else None,
            decoder_old=vae.decoder.copy() if vae is not None else None,
            source_task_id=task_id,
        )

    def weights_hash(self) -> int:
        parts = [self.dynamics_old.weights.tobytes()]
        if self.encoder_old is not None:
            parts.append(self.encoder_old.weights.tobytes())
        if self.decoder_old is not None:
            parts.append(self.decoder_old.weights.tobytes())
        return hash(tuple(parts))


@dataclass
class RehearsalConfig:
    lambda_synth: float = 1.0
    synth_batch_size: int = 128
    rehearsal_interval: int = 10

    def __post_init__(self):
        if self.lambda_synth < 0:
            raise ValueError("lambda_synth must be non-negative")
        if self.rehearsal_interval < 1:
            raise ValueError("rehearsal_interval must be at least 1")


@dataclass
class SyntheticPairs:
    states: np.ndarray  # (n, obs)
    actions: np.ndarray  # (n, act): hardened one-hots or squashed continuous
    action_logits: np.ndarray | None  # raw decoder output for discrete actions


# ---------------------------------------------------------------- VAE loss


def vae_loss(vae: VAEModel, states, actions, rng: Rng, noise=None) -> dict:
    """One evidence-lower-bound evaluation with reparameterized sampling.

    Reconstruction: squared error on states plus cross-entropy (discrete) or
    squared error through tanh (continuous) on actions. KL against the unit
    Gaussian prior in closed form. Gradients accumulate into encoder and
    decoder. Pass ``noise`` to freeze the reparameterization draw (used by
    the finite-difference oracle).
    """
    states = np.asarray(states)
    actions = np.asarray(actions)
    if len(states) == 0:
        raise ValueError("empty batch")
    B = len(states)
    L = vae.latent_dim

    enc_in = np.concatenate([states, actions], axis=-1)
    enc_out, enc_cache = forward_cached(vae.encoder, enc_in)
    mu, logvar = enc_out[:, :L], enc_out[:, L:]
    sigma = np.exp(0.5 * logvar)
    eps = noise if noise is not None else rng.normal((B, L))
    z = mu + sigma * eps

    dec_out, dec_cache = forward_cached(vae.decoder, z)
    s_hat = dec_out[:, : vae.obs_dim]
    a_raw = dec_out[:, vae.obs_dim:]

    d_state = s_hat - states
    recon_state = float((d_state * d_state).sum(axis=-1).mean())
    if vae.discrete_actions:
        logp = a_raw - _logsumexp(a_raw)
        recon_act = float(-(actions * logp).sum(axis=-1).mean())
        d_a_raw = (softmax(a_raw, axis=-1) - actions) / B
    else:
        a_hat = np.tanh(a_raw)
        d_act = a_hat - actions
        recon_act = float((d_act * d_act).sum(axis=-1).mean())
        d_a_raw = 2.0 * d_act * (1.0 - a_hat * a_hat) / B
    recon = vae.recon_coef * (recon_state + recon_act)

    kl = vae.kl_coef * float(
        0.5 * (mu * mu + np.exp(logvar) - logvar - 1.0).sum(axis=-1).mean()
    )

    d_dec = np.concatenate(
        [vae.recon_coef * 2.0 * d_state / B, vae.recon_coef * d_a_raw], axis=-1
    )
    d_z = backward_cached(vae.decoder, dec_cache, d_dec)
    d_mu = d_z + vae.kl_coef * mu / B
    d_logvar = d_z * eps * 0.5 * sigma + vae.kl_coef * 0.5 * (np.exp(logvar) - 1.0) / B
    backward_cached(vae.encoder, enc_cache, np.concatenate([d_mu, d_logvar], axis=-1))

    return {
        "vae/total": recon + kl,
        "vae/recon": recon,
        "vae/kl": kl,
    }


def _logsumexp(x):
    m = x.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


# -------------------------------------------------------------- generation


def decode_latents(vae_decoder: ModelParams, z, obs_dim):
    out = mlp_eval(vae_decoder, z)
    return out[:, :obs_dim], out[:, obs_dim:]


def sample_synthetic_pairs(
    snapshot: FrozenSnapshot, n: int, rng: Rng,
    obs_dim: int, discrete_actions: bool, gumbel_temperature: float = 1.0,
) -> SyntheticPairs:
    """Draw n state-action pairs from the frozen generator.

    Discrete actions are hardened to one-hots by a gumbel-softmax draw on
    the decoded logits; continuous actions are tanh-squashed into the box.
    """
    if snapshot is None:
        raise RuntimeError("no frozen snapshot: rehearsal is unavailable during the first task")
    if snapshot.decoder_old is None:
        raise RuntimeError("snapshot carries no generator (reviewer-only wiring)")
    latent_dim = snapshot.decoder_old.in_dim
    z = rng.normal((n, latent_dim))
    states, a_raw = decode_latents(snapshot.decoder_old, z, obs_dim)
    states = states.astype(np.float32)
    if discrete_actions:
        soft = gumbel_softmax_sample(a_raw, gumbel_temperature, rng)
        hard = np.eye(a_raw.shape[-1], dtype=np.float32)[np.argmax(soft, axis=-1)]
        return SyntheticPairs(states, hard, a_raw.astype(np.float32))
    return SyntheticPairs(states, np.tanh(a_raw).astype(np.float32), None)


def synth_transition(snapshot: FrozenSnapshot, pairs: SyntheticPairs) -> StepBatch:
    """Complete synthetic pairs into transitions via the frozen dynamics net.

    Reward and done carry NaN/False sentinels: synthetic data trains the
    dynamics net only, and a NaN reward fails loudly if it ever leaks into a
    reward or value objective.
    """
    x = np.concatenate([pairs.states, pairs.actions], axis=-1)
    next_states = mlp_eval(snapshot.dynamics_old, x)
    n = len(pairs.states)
    return StepBatch(
        states=pairs.states,
        actions=pairs.actions,
        rewards=np.full(n, np.nan, dtype=np.float32),
        next_states=next_states.astype(np.float32),
        dones=np.zeros(n, dtype=bool),
    )


# ----------------------------------------------------------------- updates


def combined_dynamics_update(
    model: WorldModel,
    adam_dynamics: AdamState,
    real_batch: StepBatch,
    snapshot: FrozenSnapshot | None,
    cfg: RehearsalConfig,
    rng: Rng,
    c1: float,
    discrete_actions: bool = True,
) -> dict:
    """Dynamics step on real data plus the frozen-model synthetic term.

    total = c1 * E_real ||T(s,a) - s'||^2
          + lambda * E_synth ||T_old(s,a) - T(s,a)||^2

    With no snapshot (first task) or lambda_synth = 0 the synthetic term is
    skipped entirely and this is exactly a plain dynamics update.
    """
    from .worldmodel import dynamics_loss

    report = {"rehearsal/dynamics_real": dynamics_loss(model, real_batch, c1)}
    if snapshot is not None and cfg.lambda_synth > 0:
        pairs = sample_synthetic_pairs(
            snapshot, cfg.synth_batch_size, rng, model.obs_dim, discrete_actions
        )
        synth = synth_transition(snapshot, pairs)
        x = np.concatenate([synth.states, synth.actions], axis=-1)
        pred, cache = forward_cached(model.dynamics, x)
        diff = pred - synth.next_states
        syn_loss = cfg.lambda_synth * float((diff * diff).sum(axis=-1).mean())
        backward_cached(
            model.dynamics, cache, (2.0 * cfg.lambda_synth / len(synth)) * diff
        )
        report["rehearsal/dynamics_synth"] = syn_loss
    adam_step(model.dynamics, adam_dynamics)
    return report


def dump_synthetic_csv(
    snapshot: FrozenSnapshot, n: int, rng: Rng, path, obs_dim: int,
    discrete_actions: bool, task_id: int = -1, step: int = -1,
):
    """Inspection dump: n synthetic transitions as CSV rows
    (task_id, step, s..., a..., s_next...)."""
    import csv
    from pathlib import Path

    pairs = sample_synthetic_pairs(snapshot, n, rng, obs_dim, discrete_actions)
    batch = synth_transition(snapshot, pairs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    act_dim = batch.actions.shape[-1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["task_id", "step"]
            + [f"s{i}" for i in range(obs_dim)]
            + [f"a{i}" for i in range(act_dim)]
            + [f"s_next{i}" for i in range(obs_dim)]
        )
        for i in range(len(batch)):
            w.writerow(
                [task_id, step]
                + [repr(float(v)) for v in batch.states[i]]
                + [repr(float(v)) for v in batch.actions[i]]
                + [repr(float(v)) for v in batch.next_states[i]]
            )
    return path


def continual_vae_update(
    vae: VAEModel,
    opts: VAEOptimizers,
    snapshot: FrozenSnapshot | None,
    states,
    actions,
    rng: Rng,
) -> dict:
    """One VAE step on real data joined with frozen-generator replay.

    During the first task (no snapshot) this is a plain VAE step on the real
    batch. Otherwise an equal-sized synthetic batch is generated fresh from
    the frozen decoder and the loss runs over the union.
    """
    states = np.asarray(states, dtype=np.float32)
    actions = np.asarray(actions, dtype=np.float32)
    if snapshot is not None:
        pairs = sample_synthetic_pairs(
            snapshot, len(states), rng, vae.obs_dim, vae.discrete_actions
        )
        states = np.concatenate([states, pairs.states], axis=0)
        actions = np.concatenate([actions, pairs.actions], axis=0)
    report = vae_loss(vae, states, actions, rng)
    adam_step(vae.encoder, opts.encoder)
    adam_step(vae.decoder, opts.decoder)
    report["vae/batch_size"] = float(len(states))
    return report
