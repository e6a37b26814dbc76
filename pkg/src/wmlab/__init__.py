"""wmlab: a continual model-based RL laboratory.

World-model learning across task sequences with generative rehearsal and an
intrinsic-reward reviewer, plus baselines, desk-scale environments, and a
deterministic evaluation/export pipeline.
"""

__version__ = "0.1.0"
