"""Experiment configuration: documented schema, strict validation, profiles.

A config is JSON with the key tree below. Unknown keys anywhere are
rejected; missing keys fall back to the selected profile's defaults; the
fully resolved config is echoed into the run directory so any artifact can
be regenerated from that file plus the seed. Environment overrides are
limited to WMLAB_RUN_DIR and WMLAB_SEED.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from .baselines import METHODS
from .continual import LabConfig, SequenceSpec
from .envs import make_training_task
from .planner import PlannerConfig
from .rehearsal import RehearsalConfig
from .reviewer import ReviewerConfig
from .worldmodel import TrainConfig

# The faithful profile: hyperparameter-table values for the gridworld
# domain, with TDMPC defaults where the table defers to them.
PAPER_PROFILE = {
    "train": {
        "gamma": 0.99,
        "c1": 2.0,
        "c2": 0.5,
        "c3": 0.1,
        "rho_temporal": 0.5,
        "tau_soft": 0.01,
        "target_update_freq": 40,
        "batch_size": 512,
        "horizon": 10,
        "lr": 1e-3,
        "hidden_dim": 512,
        "n_hidden": 2,
    },
    "planner": {
        "num_samples": 512,
        "horizon": 10,
        "num_elites": 64,
        "iterations": 6,
        "temperature": 0.5,
        "momentum": 0.1,
        "policy_fraction": 0.05,
        "action_noise_floor": 0.05,
        "init_std": 0.5,
        "explore_eps": 0.3,
    },
    "rehearsal": {"lambda_synth": 1.0, "synth_batch_size": 512, "rehearsal_interval": 10},
    "reviewer": {"alpha": 0.5, "error_floor": 1e-6, "error_norm": "l2"},
    "vae": {"latent_dim": 64, "hidden_dim": 128},
    "ewc": {"ewc_lambda": 10.0, "fisher_batches": 8},
    "eval": {"eval_every": 10, "eval_episodes": 5},
    "buffer_capacity": 100_000,
}

# Desk-scale overrides: smaller nets/batches so the acceptance experiments
# run in minutes on a laptop-class machine.
DESK_OVERRIDES = {
    "train": {"batch_size": 128, "hidden_dim": 32},
    "planner": {"num_samples": 128, "num_elites": 12},
    "rehearsal": {"synth_batch_size": 128},
    "vae": {"latent_dim": 8, "hidden_dim": 64},
}

TOP_LEVEL_DEFAULTS = {
    "run_dir": "runs/default",
    "seeds": [0],
    "method": "drago",
    "profile": "desk",
    "sequence": {"rooms": [1, 2], "episodes_per_task": 300},
}

PROFILES = ("paper", "desk")


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_unknown_keys(given: dict, allowed: dict, path=""):
    for k, v in given.items():
        here = f"{path}.{k}" if path else k
        if k not in allowed:
            raise ConfigError(f"unknown config key: {here!r}")
        if isinstance(allowed[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {here!r} must be a mapping")
            _check_unknown_keys(v, allowed[k], here)


def profile_defaults(profile: str) -> dict:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; valid: {', '.join(PROFILES)}")
    base = copy.deepcopy(PAPER_PROFILE)
    if profile == "desk":
        base = _deep_merge(base, DESK_OVERRIDES)
    return base


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and fill in profile defaults."""
    schema = dict(TOP_LEVEL_DEFAULTS)
    schema.update(PAPER_PROFILE)  # section shapes for key checking
    _check_unknown_keys(raw, schema)
    top = _deep_merge(TOP_LEVEL_DEFAULTS, {k: v for k, v in raw.items() if k in TOP_LEVEL_DEFAULTS})
    sections = profile_defaults(top["profile"])
    sections = _deep_merge(sections, {k: v for k, v in raw.items() if k not in TOP_LEVEL_DEFAULTS})
    resolved = {**top, **sections}

    if resolved["method"] not in METHODS:
        raise ConfigError(f"unknown method {resolved['method']!r}; valid: {', '.join(METHODS)}")
    if not isinstance(resolved["seeds"], list) or not resolved["seeds"]:
        raise ConfigError("seeds must be a nonempty list of integers")
    rooms = resolved["sequence"]["rooms"]
    if not rooms or any(r not in (1, 2, 3, 4) for r in rooms):
        raise ConfigError("sequence.rooms must be a nonempty list drawn from 1..4")
    return resolved


def load_config(path: str | Path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON ({e.msg})")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    resolved = resolve_config(raw)
    # environment overrides, deliberately limited
    if os.environ.get("WMLAB_RUN_DIR"):
        resolved["run_dir"] = os.environ["WMLAB_RUN_DIR"]
    if os.environ.get("WMLAB_SEED"):
        resolved["seeds"] = [int(os.environ["WMLAB_SEED"])]
    return resolved


def echo_config(resolved: dict, run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    out = run_dir / "config.resolved.json"
    out.write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
    return out


def build_lab_config(resolved: dict) -> LabConfig:
    return LabConfig(
        train=TrainConfig(**resolved["train"]),
        planner=PlannerConfig(**resolved["planner"]),
        rehearsal=RehearsalConfig(**resolved["rehearsal"]),
        reviewer=ReviewerConfig(**resolved["reviewer"]),
        vae_latent_dim=resolved["vae"]["latent_dim"],
        vae_hidden_dim=resolved["vae"]["hidden_dim"],
        ewc_lambda=resolved["ewc"]["ewc_lambda"],
        fisher_batches=resolved["ewc"]["fisher_batches"],
        buffer_capacity=resolved["buffer_capacity"],
        eval_every=resolved["eval"]["eval_every"],
        eval_episodes=resolved["eval"]["eval_episodes"],
    )


def build_sequence(resolved: dict, seed: int) -> SequenceSpec:
    tasks = [make_training_task(r) for r in resolved["sequence"]["rooms"]]
    return SequenceSpec(
        tasks=tasks,
        episodes_per_task=resolved["sequence"]["episodes_per_task"],
        seed=seed,
        method=resolved["method"],
    )
