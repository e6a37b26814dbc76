"""Dense networks with analytic forward/backward passes on flat parameter storage.

Each layer computes ``act(x @ W + b)``. All of a network's weights live in one
flat array (row-major W then b, layers concatenated) so optimizers, target
copies, serialization, and penalty terms can treat a model as a single vector.
"""

from __future__ import annotations

import numpy as np

from .rng import Rng

ACTIVATIONS = ("elu", "tanh", "identity")


class DimensionError(ValueError):
    """Input width does not match a layer's expected width."""


class ModelParams:
    """Flat parameter store for one MLP, with paired gradient storage.

    ``weights`` and ``grads`` are flat arrays of equal length,
    sum(in*out + out) over layers. ``grads`` accumulates across backward
    calls until an optimizer step clears it.
    """

    def __init__(self, layer_shapes, activations, weights, dtype=np.float32):
        self.layer_shapes = [(int(i), int(o)) for i, o in layer_shapes]
        self.activations = list(activations)
        if len(self.activations) != len(self.layer_shapes):
            raise ValueError("one activation per layer required")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        for (i0, o0), (i1, _) in zip(self.layer_shapes, self.layer_shapes[1:]):
            if o0 != i1:
                raise ValueError(f"layer widths do not chain: {o0} -> {i1}")
        self.dtype = np.dtype(dtype)

        self._offsets = []
        off = 0
        for fan_in, fan_out in self.layer_shapes:
            w_off, b_off = off, off + fan_in * fan_out
            off = b_off + fan_out
            self._offsets.append((w_off, b_off, off))
        self.n_params = off

        weights = np.asarray(weights, dtype=self.dtype).ravel()
        if weights.size != self.n_params:
            raise ValueError(f"expected {self.n_params} weights, got {weights.size}")
        self.weights = weights.copy()
        self.grads = np.zeros(self.n_params, dtype=self.dtype)
        self._cache = None
        self._views = None

    @property
    def in_dim(self) -> int:
        return self.layer_shapes[0][0]

    @property
    def out_dim(self) -> int:
        return self.layer_shapes[-1][1]

    def views(self):
        """Per-layer (W, b, gW, gb) views into the flat arrays, cached.

        Valid as long as the underlying arrays are mutated in place (the
        optimizer and soft updates do); anything that swaps the arrays out
        must call invalidate_views().
        """
        if self._views is None:
            self._views = []
            for (fan_in, fan_out), (w_off, b_off, end) in zip(self.layer_shapes, self._offsets):
                self._views.append((
                    self.weights[w_off:b_off].reshape(fan_in, fan_out),
                    self.weights[b_off:end],
                    self.grads[w_off:b_off].reshape(fan_in, fan_out),
                    self.grads[b_off:end],
                ))
        return self._views

    def invalidate_views(self):
        self._views = None

    def layer(self, l):
        """(W, b) views into the flat weight array for layer ``l``."""
        return self.views()[l][:2]

    def layer_grads(self, l):
        return self.views()[l][2:]

    def zero_grads(self):
        self.grads[:] = 0

    def copy(self) -> "ModelParams":
        """Deep copy of the weights with fresh (zero) gradients."""
        return ModelParams(self.layer_shapes, self.activations, self.weights, self.dtype)

    def copy_from(self, other: "ModelParams"):
        if other.weights.shape != self.weights.shape:
            raise ValueError("parameter count mismatch")
        self.weights[:] = other.weights

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.layer_shapes, self.activations, self.weights, dtype)

    def assert_finite(self, where=""):
        if not np.isfinite(self.weights).all():
            raise FloatingPointError(f"non-finite weights {where}")

    def __repr__(self):
        dims = [self.layer_shapes[0][0]] + [o for _, o in self.layer_shapes]
        return f"ModelParams({'x'.join(map(str, dims))}, {self.activations})"


def init_mlp(
    dims,
    rng: Rng,
    hidden_activation="elu",
    output_activation="identity",
    dtype=np.float32,
) -> ModelParams:
    """Build an MLP from a width list [in, h1, ..., out].

    Weights and biases are uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    """
    if len(dims) < 2:
        raise ValueError("need at least input and output dims")
    shapes = list(zip(dims[:-1], dims[1:]))
    acts = [hidden_activation] * (len(shapes) - 1) + [output_activation]
    chunks = []
    for fan_in, fan_out in shapes:
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_out))
    return ModelParams(shapes, acts, np.concatenate(chunks), dtype)


def _elu(z):
    # elu(z) = max(z, 0) + expm1(min(z, 0)), branch-free
    pos = np.maximum(z, 0)
    neg = np.minimum(z, 0)
    np.expm1(neg, out=neg)
    pos += neg
    return pos


def _apply_activation(name, z):
    if name == "elu":
        return _elu(z)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_deriv(name, z, a):
    # From cached outputs: elu' = min(a+1, 1) since a+1 = exp(z) for z<=0
    # and a+1 > 1 for z > 0; tanh' = 1 - a^2.
    if name == "elu":
        return np.minimum(a + 1.0, 1.0)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def forward_cached(params: ModelParams, x):
    """Forward pass returning (output, cache) for a later backward_cached.

    Accepts a single vector or a (batch, in_dim) matrix.
    """
    x = np.asarray(x, dtype=params.dtype)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[-1] != params.in_dim:
        raise DimensionError(
            f"layer 0 expects input width {params.in_dim}, got {h.shape[-1]}"
        )
    per_layer = []
    for act, (W, b, _, _) in zip(params.activations, params.views()):
        z = h @ W + b
        a = _apply_activation(act, z)
        per_layer.append((h, z, a))
        h = a
    return (h[0] if single else h), (per_layer, single)


def mlp_eval(params: ModelParams, x):
    """Inference-only forward pass: no cache is built, nothing retained.

    Same output as forward_cached; used on hot read-only paths (planning
    rollouts, heatmaps, frozen-model targets).
    """
    if not (isinstance(x, np.ndarray) and x.dtype == params.dtype):
        x = np.asarray(x, dtype=params.dtype)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.shape[-1] != params.in_dim:
        raise DimensionError(
            f"layer 0 expects input width {params.in_dim}, got {h.shape[-1]}"
        )
    views = params.views()
    acts = params.activations
    for l in range(len(acts)):
        W, b = views[l][0], views[l][1]
        z = h @ W
        z += b
        act = acts[l]
        h = _elu(z) if act == "elu" else (np.tanh(z) if act == "tanh" else z)
    return h[0] if single else h


def mlp_forward(params: ModelParams, x):
    """Evaluate the network; caches activations on ``params`` for backward."""
    out, cache = forward_cached(params, x)
    params._cache = cache
    return out


def backward_cached(params: ModelParams, cache, upstream, write_grads=True):
    """Backprop ``upstream`` (dLoss/dOutput) through a cached forward pass.

    Accumulates into ``params.grads`` unless ``write_grads`` is False (used
    when a network participates in a loss but should not itself be updated
    by it, e.g. the value net inside the policy objective). Returns the
    gradient with respect to the forward input, for chaining.
    """
    per_layer, single = cache
    g = np.asarray(upstream, dtype=params.dtype)
    g = g.reshape(1, -1) if single else g
    if g.shape != per_layer[-1][2].shape:
        raise DimensionError(
            f"upstream grad shape {g.shape} != output shape {per_layer[-1][2].shape}"
        )
    views = params.views()
    for l in range(len(per_layer) - 1, -1, -1):
        inp, z, a = per_layer[l]
        dz = g * _activation_deriv(params.activations[l], z, a)
        W, _, gW, gb = views[l]
        if write_grads:
            gW += inp.T @ dz
            gb += dz.sum(axis=0)
        g = dz @ W.T
    return g[0] if single else g


def backward(params: ModelParams, x, upstream):
    """Backprop through the most recent ``mlp_forward`` on this params object."""
    if params._cache is None:
        raise RuntimeError("backward called without a preceding forward pass")
    per_layer, single = params._cache
    x = np.asarray(x)
    cached_in = per_layer[0][0]
    if (x.reshape(1, -1) if x.ndim == 1 else x).shape != cached_in.shape:
        raise DimensionError(
            f"input shape {x.shape} does not match cached forward input "
            f"{cached_in.shape}"
        )
    g = backward_cached(params, params._cache, upstream)
    params._cache = None
    return g
