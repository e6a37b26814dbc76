"""Minimal dense-network toolkit: MLPs with analytic gradients, Adam, seeded
sampling, and a finite-difference oracle."""

from .adam import AdamState, adam_step
from .gradcheck import GradCheckReport, gradient_check
from .mlp import (
    ACTIVATIONS,
    DimensionError,
    ModelParams,
    backward,
    backward_cached,
    forward_cached,
    init_mlp,
    mlp_eval,
    mlp_forward,
)
from .rng import Rng
from .sampling import gumbel_softmax_sample, one_hot, softmax, softmax_backward
from .serial import (
    load_bundle,
    params_manifest,
    read_manifest,
    save_bundle,
    write_manifest,
)

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "DimensionError",
    "GradCheckReport",
    "ModelParams",
    "Rng",
    "adam_step",
    "backward",
    "backward_cached",
    "forward_cached",
    "gradient_check",
    "gumbel_softmax_sample",
    "init_mlp",
    "load_bundle",
    "mlp_eval",
    "mlp_forward",
    "one_hot",
    "params_manifest",
    "read_manifest",
    "save_bundle",
    "softmax",
    "softmax_backward",
    "write_manifest",
]
