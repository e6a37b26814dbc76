import numpy as np
import pytest

from wmlab.nnkit import (
    AdamState,
    DimensionError,
    ModelParams,
    Rng,
    adam_step,
    backward,
    gradient_check,
    gumbel_softmax_sample,
    init_mlp,
    load_bundle,
    mlp_forward,
    one_hot,
    save_bundle,
)


def identity_layer(n):
    w = np.eye(n, dtype=np.float32).ravel()
    b = np.zeros(n, dtype=np.float32)
    return ModelParams([(n, n)], ["identity"], np.concatenate([w, b]))


# ---------------------------------------------------------------- forward


def test_forward_identity_layer():
    p = identity_layer(2)
    out = mlp_forward(p, np.array([1.0, 2.0]))
    assert np.allclose(out, [1.0, 2.0])


def test_forward_zero_weights_gives_zero():
    p = ModelParams([(3, 4), (4, 2)], ["elu", "identity"], np.zeros(3 * 4 + 4 + 4 * 2 + 2))
    out = mlp_forward(p, np.array([5.0, -1.0, 0.3]))
    assert np.allclose(out, 0.0)


def test_forward_matches_hand_rolled_oracle():
    # Independent oracle: explicit matrix algebra, written without the mlp code.
    w1 = np.array([[0.3, -0.2]], dtype=np.float32)  # 1 -> 2
    b1 = np.array([0.1, 0.05], dtype=np.float32)
    w2 = np.array([[0.7], [-0.4]], dtype=np.float32)  # 2 -> 1
    b2 = np.array([-0.02], dtype=np.float32)
    p = ModelParams(
        [(1, 2), (2, 1)],
        ["elu", "identity"],
        np.concatenate([w1.ravel(), b1, w2.ravel(), b2]),
    )
    x = np.array([0.5], dtype=np.float32)

    z1 = x @ w1 + b1
    h1 = np.where(z1 > 0, z1, np.exp(z1) - 1.0)
    expected = h1 @ w2 + b2

    out = mlp_forward(p, x)
    assert np.allclose(out, expected, atol=1e-6)


def test_forward_is_pure():
    p = init_mlp([3, 16, 2], Rng(3))
    x = np.array([0.1, -0.5, 2.0], dtype=np.float32)
    a = mlp_forward(p, x)
    b = mlp_forward(p, x)
    assert a.tobytes() == b.tobytes()


def test_forward_batch_matches_single():
    p = init_mlp([2, 8, 3], Rng(11))
    xs = Rng(5).normal((6, 2)).astype(np.float32)
    batched = mlp_forward(p, xs)
    for i in range(6):
        assert np.allclose(batched[i], mlp_forward(p, xs[i]), atol=1e-6)


def test_forward_dim_mismatch_names_layer():
    p = init_mlp([4, 8, 2], Rng(0))
    with pytest.raises(DimensionError, match="layer 0"):
        mlp_forward(p, np.zeros(3))


# ---------------------------------------------------------------- backward


def test_backward_zero_upstream_is_noop():
    p = init_mlp([2, 6, 2], Rng(1))
    x = np.array([0.4, -0.9], dtype=np.float32)
    mlp_forward(p, x)
    g = backward(p, x, np.zeros(2))
    assert not p.grads.any()
    assert np.allclose(g, 0.0)


def test_backward_linear_model_gradient():
    # Scalar linear layer, upstream 1.0: dL/dW_j = x_j, dL/db = 1.
    x = np.array([0.7, -1.3, 0.25], dtype=np.float32)
    p = ModelParams([(3, 1)], ["identity"], np.zeros(4))
    mlp_forward(p, x)
    backward(p, x, np.array([1.0]))
    gw, gb = p.layer_grads(0)
    assert np.allclose(gw.ravel(), x, atol=1e-7)
    assert np.allclose(gb, 1.0)


def test_backward_without_forward_errors():
    p = init_mlp([2, 4, 1], Rng(2))
    with pytest.raises(RuntimeError, match="without a preceding forward"):
        backward(p, np.zeros(2), np.zeros(1))


def test_backward_accumulates_not_overwrites():
    p = init_mlp([2, 4, 1], Rng(4))
    x = np.array([0.3, 0.8], dtype=np.float32)
    mlp_forward(p, x)
    backward(p, x, np.ones(1))
    once = p.grads.copy()
    mlp_forward(p, x)
    backward(p, x, np.ones(1))
    assert np.allclose(p.grads, 2 * once, atol=1e-6)


def test_backward_matches_finite_differences():
    # Loss-level central differences are the oracle for the full chain.
    for seed in (0, 1, 2):
        p = init_mlp([3, 8, 2], Rng(seed))
        x = Rng(seed + 100).normal(3)
        target = Rng(seed + 200).normal(2)

        def loss(params):
            out = mlp_forward(params, x)
            diff = out - target
            loss_val = float(diff @ diff)
            backward(params, x, 2.0 * diff)
            return loss_val

        report = gradient_check(loss, p, tol=1e-3)
        assert report.passed, str(report)


# ---------------------------------------------------------------- adam


def test_adam_zero_grads_is_noop():
    p = init_mlp([2, 4, 1], Rng(9))
    st = AdamState.for_params(p)
    before = p.weights.copy()
    adam_step(p, st)
    assert np.array_equal(p.weights, before)


def test_adam_first_step_closed_form():
    # Bias correction makes the first step move by ~lr against the gradient.
    p = ModelParams([(1, 1)], ["identity"], np.zeros(2))
    st = AdamState.for_params(p, lr=0.1)
    p.grads[:] = [1.0, 0.0]
    adam_step(p, st)
    w = p.layer(0)[0][0, 0]
    assert abs(w - (-0.1)) < 1e-6
    assert not p.grads.any()


def test_adam_step_count_advances():
    p = init_mlp([2, 2], Rng(0))
    st = AdamState.for_params(p)
    p.grads[:] = 0.01
    adam_step(p, st)
    p.grads[:] = 0.01
    adam_step(p, st)
    assert st.step_count == 2


def test_adam_rejects_nan_grads():
    p = init_mlp([2, 2], Rng(0))
    st = AdamState.for_params(p)
    p.grads[0] = np.nan
    with pytest.raises(FloatingPointError):
        adam_step(p, st)


# ---------------------------------------------------------------- gradient_check


def test_gradient_check_quadratic_exact():
    p = init_mlp([2, 3], Rng(21))

    def loss(params):
        params.grads += 2.0 * params.weights
        return float(params.weights @ params.weights)

    report = gradient_check(loss, p, tol=1e-6)
    assert report.passed, str(report)


def test_gradient_check_flags_wrong_gradient():
    p = init_mlp([2, 3], Rng(22))

    def loss(params):
        params.grads += 3.0 * params.weights  # wrong: true grad is 2w
        return float(params.weights @ params.weights)

    report = gradient_check(loss, p, tol=1e-3)
    assert not report.passed


def test_gradient_check_restores_params():
    p = init_mlp([2, 3], Rng(23))
    before = p.weights.copy()

    def loss(params):
        params.grads += 2.0 * params.weights
        return float(params.weights @ params.weights)

    gradient_check(loss, p)
    assert p.dtype == np.float32
    assert np.array_equal(p.weights, before)


# ---------------------------------------------------------------- gumbel softmax


def test_gumbel_saturated_logits_give_one_hot():
    logits = np.array([-50.0, 50.0, -50.0, -50.0])
    for t in (0.1, 1.0, 10.0):
        y = gumbel_softmax_sample(logits, t, Rng(1))
        assert y[1] > 0.999
        assert abs(y.sum() - 1.0) < 1e-5


def test_gumbel_components_in_unit_interval():
    rng = Rng(8)
    for _ in range(50):
        y = gumbel_softmax_sample(rng.normal(4), 1.0, rng)
        assert ((y >= 0) & (y <= 1)).all()
        assert abs(y.sum() - 1.0) < 1e-5


def test_gumbel_low_temperature_argmax_uniform():
    # chi-square on the argmax distribution under uniform logits.
    rng = Rng(42)
    k, n = 4, 4000
    counts = np.zeros(k)
    for _ in range(n):
        y = gumbel_softmax_sample(np.zeros(k), 1e-3, rng)
        counts[int(np.argmax(y))] += 1
    expected = n / k
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    assert chi2 < 16.27  # chi-square(3) critical value at p=0.001


def test_gumbel_rejects_bad_input():
    with pytest.raises(FloatingPointError):
        gumbel_softmax_sample(np.array([np.inf, 0.0]), 1.0, Rng(0))
    with pytest.raises(ValueError):
        gumbel_softmax_sample(np.zeros(2), 0.0, Rng(0))


# ---------------------------------------------------------------- rng


def test_rng_streams_reproducible_and_independent():
    a = Rng(123).split("planner").normal(5)
    b = Rng(123).split("planner").normal(5)
    c = Rng(123).split("vae").normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_split_does_not_advance_parent():
    r1 = Rng(5)
    base = r1.normal(3)
    r2 = Rng(5)
    r2.split("anything")
    assert np.array_equal(base, r2.normal(3))


# ---------------------------------------------------------------- serialization


def test_bundle_round_trip_bit_exact(tmp_path):
    rng = Rng(77)
    models = {
        "dynamics": init_mlp([6, 32, 32, 2], rng),
        "policy": init_mlp([2, 32, 4], rng, output_activation="tanh"),
    }
    manifest = save_bundle(tmp_path / "ck.bin", models)
    loaded = load_bundle(tmp_path / "ck.bin", manifest)
    for name, params in models.items():
        assert loaded[name].weights.tobytes() == params.weights.tobytes()
        assert loaded[name].layer_shapes == params.layer_shapes
        assert loaded[name].activations == params.activations


def test_one_hot():
    assert np.array_equal(one_hot(2, 4), [0, 0, 1, 0])
