"""Checkpoint serialization: a JSON manifest plus flat little-endian float32 blobs.

A bundle maps names to ModelParams. The .bin file is the concatenation of
each model's weights as little-endian float32 in manifest order, so a
checkpoint round-trips bit-exactly on any platform.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mlp import ModelParams

_WIRE_DTYPE = np.dtype("<f4")


def params_manifest(params: ModelParams) -> dict:
    return {
        "layer_shapes": [[i, o] for i, o in params.layer_shapes],
        "activations": list(params.activations),
        "n_params": params.n_params,
    }


def save_bundle(path_bin, named_params: dict[str, ModelParams]) -> dict:
    """Write weights of all models to ``path_bin``; return the manifest dict."""
    path_bin = Path(path_bin)
    manifest = {"format": "wmlab-flat-f4-le", "models": {}}
    offset = 0
    blobs = []
    for name, params in named_params.items():
        entry = params_manifest(params)
        entry["offset"] = offset
        manifest["models"][name] = entry
        blob = params.weights.astype(_WIRE_DTYPE).tobytes()
        blobs.append(blob)
        offset += params.n_params
    path_bin.write_bytes(b"".join(blobs))
    return manifest


def load_bundle(path_bin, manifest: dict) -> dict[str, ModelParams]:
    """Inverse of save_bundle; weights come back bit-identical."""
    if manifest.get("format") != "wmlab-flat-f4-le":
        raise ValueError(f"unrecognized checkpoint format {manifest.get('format')!r}")
    raw = np.frombuffer(Path(path_bin).read_bytes(), dtype=_WIRE_DTYPE)
    out = {}
    for name, entry in manifest["models"].items():
        start = entry["offset"]
        stop = start + entry["n_params"]
        if stop > raw.size:
            raise ValueError(f"checkpoint truncated: {name} runs past end of file")
        out[name] = ModelParams(
            [tuple(s) for s in entry["layer_shapes"]],
            entry["activations"],
            raw[start:stop],
        )
    return out


def write_manifest(path, manifest: dict):
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
