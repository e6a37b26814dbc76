import os

# keep BLAS single-threaded: the workloads are many small matmuls, where
# thread handoff costs more than it saves (set before numpy loads)
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import pytest

from wmlab.continual import LabConfig
from wmlab.planner import PlannerConfig
from wmlab.rehearsal import RehearsalConfig
from wmlab.worldmodel import TrainConfig


@pytest.fixture
def mini_cfg():
    """Small-but-complete config for fast orchestration tests."""
    return LabConfig(
        train=TrainConfig(batch_size=16, horizon=3, hidden_dim=16, target_update_freq=10),
        planner=PlannerConfig(num_samples=12, horizon=3, num_elites=3, iterations=2),
        rehearsal=RehearsalConfig(synth_batch_size=16, rehearsal_interval=5),
        vae_latent_dim=4,
        vae_hidden_dim=16,
        eval_every=1000,  # no mid-task eval episodes unless a test asks
        eval_episodes=2,
        fisher_batches=2,
    )
