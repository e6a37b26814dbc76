import numpy as np
import pytest

from wmlab.nnkit import (
    AdamState,
    ModelParams,
    Rng,
    adam_step,
    gradient_check,
    one_hot,
)
from wmlab.worldmodel import (
    AgentHeads,
    HeadOptimizers,
    SegmentBatch,
    StepBatch,
    TrainConfig,
    WorldModel,
    dynamics_loss,
    multi_step_update,
    policy_loss,
    predict_next,
    reward_loss,
    soft_update,
    td_target,
    value_loss,
)

OBS, ACT = 2, 4


def tiny_model(seed=0, hidden=8):
    return WorldModel.create(OBS, ACT, hidden, 2, Rng(seed))


def tiny_heads(seed=0, hidden=8, role="learner", discrete=True):
    return AgentHeads.create(OBS, ACT, hidden, 2, Rng(seed), role, discrete)


def random_step_batch(seed, n=6):
    rng = Rng(seed)
    return StepBatch(
        states=rng.normal((n, OBS)).astype(np.float32) * 0.3,
        actions=np.eye(ACT, dtype=np.float32)[rng.gen.integers(0, ACT, n)],
        rewards=rng.normal(n).astype(np.float32) * 0.5,
        next_states=rng.normal((n, OBS)).astype(np.float32) * 0.3,
        dones=np.zeros(n, dtype=bool),
    )


def random_segment_batch(seed, n=4, horizon=3, lengths=None):
    rng = Rng(seed)
    seg = SegmentBatch(
        states=rng.normal((n, horizon, OBS)).astype(np.float32) * 0.3,
        actions=np.eye(ACT, dtype=np.float32)[rng.gen.integers(0, ACT, (n, horizon))],
        rewards=rng.normal((n, horizon)).astype(np.float32) * 0.5,
        next_states=rng.normal((n, horizon, OBS)).astype(np.float32) * 0.3,
        dones=np.zeros((n, horizon), dtype=bool),
        valid=np.ones((n, horizon), dtype=bool),
    )
    if lengths is not None:
        for b, ln in enumerate(lengths):
            seg.valid[b, ln:] = False
    return seg


# ------------------------------------------------------------ predict_next


def test_predict_zero_net_gives_zero():
    model = tiny_model()
    model.dynamics.weights[:] = 0.0
    out = predict_next(model, np.zeros(OBS), one_hot(0, ACT))
    assert np.allclose(out, 0.0)


def test_predict_overfits_single_transition():
    model = tiny_model(seed=3, hidden=16)
    opt = AdamState.for_params(model.dynamics, lr=1e-2)
    s = np.array([0.2, 0.6], dtype=np.float32)
    a = one_hot(1, ACT)
    s2 = np.array([0.15, 0.6], dtype=np.float32)
    batch = StepBatch(s[None], a[None], np.zeros(1, np.float32), s2[None], np.zeros(1, bool))
    for _ in range(800):
        dynamics_loss(model, batch, c1=1.0)
        adam_step(model.dynamics, opt)
    err = np.linalg.norm(predict_next(model, s, a) - s2)
    assert err < 1e-3


def test_chained_rollout_shape():
    model = tiny_model()
    H = 5
    s = np.zeros(OBS, dtype=np.float32)
    preds = []
    for t in range(H):
        s = predict_next(model, s, one_hot(t % ACT, ACT))
        preds.append(s)
    assert np.stack(preds).shape == (H, OBS)


# ----------------------------------------------------------- dynamics_loss


def test_dynamics_loss_perfect_predictor_zero():
    model = tiny_model()
    batch = random_step_batch(1)
    x = np.concatenate([batch.states, batch.actions], axis=-1)
    from wmlab.nnkit import forward_cached

    batch.next_states = forward_cached(model.dynamics, x)[0]
    assert dynamics_loss(model, batch, c1=2.0) == pytest.approx(0.0, abs=1e-12)


def test_dynamics_loss_c1_zero():
    model = tiny_model()
    loss = dynamics_loss(model, random_step_batch(2), c1=0.0)
    assert loss == 0.0
    assert not model.dynamics.grads.any()


def test_dynamics_loss_hand_arithmetic():
    # 1x1 identity "net": prediction = w*s + b with hand-set w=1, b=0.1.
    dyn = ModelParams([(2, 1)], ["identity"], np.array([1.0, 0.0, 0.1]))
    model = WorldModel(dyn, dyn.copy(), obs_dim=1, action_dim=1)
    batch = StepBatch(
        states=np.array([[0.5], [1.0]], dtype=np.float32),
        actions=np.array([[0.0], [0.0]], dtype=np.float32),
        rewards=np.zeros(2, np.float32),
        next_states=np.array([[0.7], [1.0]], dtype=np.float32),
        dones=np.zeros(2, bool),
    )
    # predictions: 0.6 and 1.1; sq errors: 0.01 and 0.01; mean 0.01; x c1=2 -> 0.02
    loss = dynamics_loss(model, batch, c1=2.0)
    assert loss == pytest.approx(0.02, abs=1e-6)


def test_dynamics_loss_empty_batch_errors():
    model = tiny_model()
    empty = StepBatch(
        np.zeros((0, OBS), np.float32), np.zeros((0, ACT), np.float32),
        np.zeros(0, np.float32), np.zeros((0, OBS), np.float32), np.zeros(0, bool),
    )
    with pytest.raises(ValueError):
        dynamics_loss(model, empty, c1=1.0)


# ------------------------------------------------------------- head losses


def test_td_target_terminal_is_reward():
    heads = tiny_heads()
    batch = random_step_batch(3)
    batch.dones[:] = True
    target = td_target(heads, batch, gamma=0.99)
    assert np.allclose(target, batch.rewards, atol=1e-7)


def test_value_loss_gamma_zero_regresses_reward():
    heads = tiny_heads(seed=5)
    batch = random_step_batch(4)
    from wmlab.nnkit import forward_cached

    x = np.concatenate([batch.states, batch.actions], axis=-1)
    q = forward_cached(heads.value, x)[0][:, 0]
    expected = 0.1 * float(((q - batch.rewards) ** 2).mean())
    assert value_loss(heads, batch, gamma=0.0, c3=0.1) == pytest.approx(expected, rel=1e-6)


def test_td_target_hand_arithmetic():
    # Hand-set linear nets, continuous actions, one transition.
    heads = AgentHeads(
        reward=ModelParams([(2, 1)], ["identity"], np.zeros(3)),
        value=ModelParams([(2, 1)], ["identity"], np.array([0.5, -0.25, 0.05])),
        policy=ModelParams([(1, 1)], ["tanh"], np.array([0.3, 0.1])),
        value_target=ModelParams([(2, 1)], ["identity"], np.array([0.2, 0.4, -0.1])),
        role="learner",
        discrete=False,
    )
    s2 = 0.8
    r, gamma = 0.25, 0.9
    batch = StepBatch(
        states=np.array([[0.1]], np.float32),
        actions=np.array([[0.5]], np.float32),
        rewards=np.array([r], np.float32),
        next_states=np.array([[s2]], np.float32),
        dones=np.zeros(1, bool),
    )
    a2 = np.tanh(0.3 * s2 + 0.1)
    expected = r + gamma * (0.2 * s2 + 0.4 * a2 - 0.1)
    assert td_target(heads, batch, gamma)[0] == pytest.approx(expected, abs=1e-6)


def test_reward_loss_arithmetic():
    heads = tiny_heads(seed=6)
    heads.reward = ModelParams([(6, 1)], ["identity"], np.zeros(7))
    batch = random_step_batch(7, n=3)
    batch.rewards = np.array([1.0, -2.0, 0.5], dtype=np.float32)
    # predictions all 0 -> mse = mean(1, 4, 0.25) = 1.75; c2=0.5 -> 0.875
    assert reward_loss(heads, batch, c2=0.5) == pytest.approx(0.875, rel=1e-6)


def test_policy_loss_only_touches_policy_grads():
    heads = tiny_heads(seed=7)
    states = Rng(8).normal((5, OBS)).astype(np.float32)
    policy_loss(heads, states)
    assert heads.policy.grads.any()
    assert not heads.value.grads.any()
    assert not heads.reward.grads.any()


def test_value_bootstrap_reads_target_not_online():
    heads = tiny_heads(seed=9)
    batch = random_step_batch(10)
    base = td_target(heads, batch, 0.99)
    online_backup = heads.value.weights.copy()
    heads.value.weights[:] = 0.0
    assert np.array_equal(td_target(heads, batch, 0.99), base)
    heads.value.weights[:] = online_backup
    heads.value_target.weights[:] = 0.0
    changed = td_target(heads, batch, 0.99)
    assert not np.allclose(changed, base)


# -------------------------------------------------------------- soft update


def test_soft_update_extremes_and_midpoint():
    rng = Rng(11)
    online = ModelParams([(2, 2)], ["identity"], np.ones(6))
    target = ModelParams([(2, 2)], ["identity"], np.zeros(6))
    soft_update(online, target, 0.0)
    assert np.allclose(target.weights, 0.0)
    soft_update(online, target, 0.5)
    assert np.allclose(target.weights, 0.5)
    soft_update(online, target, 1.0)
    assert np.allclose(target.weights, 1.0)


def test_soft_update_lag_non_increasing():
    online = tiny_heads(seed=12).value
    target = tiny_heads(seed=13).value
    gap = np.linalg.norm(online.weights - target.weights)
    for _ in range(20):
        soft_update(online, target, 0.1)
        new_gap = np.linalg.norm(online.weights - target.weights)
        assert new_gap <= gap + 1e-7
        gap = new_gap


def test_soft_update_shape_mismatch():
    a = ModelParams([(2, 2)], ["identity"], np.zeros(6))
    b = ModelParams([(3, 2)], ["identity"], np.zeros(8))
    with pytest.raises(ValueError):
        soft_update(a, b, 0.5)


# ------------------------------------------------------- multi-step update


def _fresh_setup(seed=0, discrete=True):
    model = tiny_model(seed)
    learner = tiny_heads(seed + 1, role="learner", discrete=discrete)
    reviewer = tiny_heads(seed + 2, role="reviewer", discrete=discrete)
    cfg = TrainConfig(batch_size=4, horizon=3, hidden_dim=8, target_update_freq=1)
    return model, learner, reviewer, cfg


def test_multi_step_h1_equals_single_step_losses():
    model, learner, _, cfg = _fresh_setup()
    seg = random_segment_batch(20, n=4, horizon=1)
    model2 = WorldModel(model.dynamics.copy(), model.dynamics_target.copy(), OBS, ACT)
    learner2 = AgentHeads(
        learner.reward.copy(), learner.value.copy(), learner.policy.copy(),
        learner.value_target.copy(), "learner", True,
    )
    report = multi_step_update(
        model, AdamState.for_params(model.dynamics),
        learner, HeadOptimizers.create(learner, 1e-3), seg, cfg,
    )
    first = seg.first_step()
    assert report["learner/dynamics_loss"] == pytest.approx(
        dynamics_loss(model2, first, cfg.c1), rel=1e-5
    )
    assert report["learner/reward_loss"] == pytest.approx(
        reward_loss(learner2, first, cfg.c2), rel=1e-5
    )
    assert report["learner/value_loss"] == pytest.approx(
        value_loss(learner2, first, cfg.gamma, cfg.c3), rel=1e-5
    )
    assert report["learner/policy_loss"] == pytest.approx(
        policy_loss(learner2, first.states), rel=1e-5
    )


def test_multi_step_learner_only_matches_individual_losses():
    # Compositionality: no reviewer batch -> identical to running the
    # learner losses by hand on copies.
    model, learner, _, cfg = _fresh_setup(seed=4)
    seg = random_segment_batch(21, n=4, horizon=3, lengths=[3, 2, 3, 1])

    model_ref = WorldModel(model.dynamics.copy(), model.dynamics_target.copy(), OBS, ACT)
    multi_step_update(
        model, AdamState.for_params(model.dynamics),
        learner, HeadOptimizers.create(learner, 1e-3), seg, cfg,
    )
    # reference: replicate through the public pieces
    from wmlab.worldmodel import _dynamics_segment_update, _rollout_dynamics

    s_hat, caches = _rollout_dynamics(model_ref, seg)
    _dynamics_segment_update(model_ref, seg, s_hat, caches, cfg.c1, cfg.rho_temporal)
    ref_opt = AdamState.for_params(model_ref.dynamics)
    adam_step(model_ref.dynamics, ref_opt)
    assert np.array_equal(model.dynamics.weights, model_ref.dynamics.weights)


def test_multi_step_with_reviewer_produces_all_losses():
    model, learner, reviewer, cfg = _fresh_setup(seed=5)
    seg_l = random_segment_batch(22, n=4, horizon=3)
    seg_r = random_segment_batch(23, n=4, horizon=3)
    relabel = Rng(24).normal(4).astype(np.float32)
    report = multi_step_update(
        model, AdamState.for_params(model.dynamics),
        learner, HeadOptimizers.create(learner, 1e-3), seg_l, cfg,
        reviewer=reviewer, reviewer_opt=HeadOptimizers.create(reviewer, 1e-3),
        reviewer_seg=seg_r, learner_relabel=relabel,
    )
    for key in (
        "learner/reward_loss", "learner/value_loss", "learner/policy_loss",
        "learner/dynamics_loss", "reviewer/reward_loss", "reviewer/value_loss",
        "reviewer/reward_loss_on_learner", "reviewer/value_loss_on_learner",
        "reviewer/policy_loss", "reviewer/dynamics_loss",
    ):
        assert key in report
        assert np.isfinite(report[key])


def test_gradient_isolation_c2_c3_never_reach_dynamics():
    # Perturbing the reward/value coefficients must leave the dynamics
    # parameter trajectory bit-identical on a fixed batch.
    results = []
    for c2, c3 in ((0.5, 0.1), (5.0, 0.1), (0.5, 7.0)):
        model, learner, reviewer, _ = _fresh_setup(seed=6)
        cfg = TrainConfig(batch_size=4, horizon=3, hidden_dim=8, c2=c2, c3=c3)
        seg_l = random_segment_batch(25, n=4, horizon=3)
        seg_r = random_segment_batch(26, n=4, horizon=3)
        multi_step_update(
            model, AdamState.for_params(model.dynamics),
            learner, HeadOptimizers.create(learner, 1e-3), seg_l, cfg,
            reviewer=reviewer, reviewer_opt=HeadOptimizers.create(reviewer, 1e-3),
            reviewer_seg=seg_r, learner_relabel=np.zeros(4, np.float32),
        )
        results.append(model.dynamics.weights.tobytes())
    assert results[0] == results[1] == results[2]


def test_losses_nonnegative_except_policy():
    model, learner, _, cfg = _fresh_setup(seed=7)
    for seed in range(5):
        batch = random_step_batch(seed)
        assert dynamics_loss(model, batch, cfg.c1) >= 0
        assert reward_loss(learner, batch, cfg.c2) >= 0
        assert value_loss(learner, batch, cfg.gamma, cfg.c3) >= 0
        model.dynamics.zero_grads()
        learner.reward.zero_grads()
        learner.value.zero_grads()


def test_composite_dynamics_objective_gradient_check():
    # Finite differences through the full chained-horizon objective.
    from wmlab.worldmodel import _dynamics_segment_update, _rollout_dynamics

    model, _, _, cfg = _fresh_setup(seed=8)
    seg = random_segment_batch(27, n=3, horizon=3, lengths=[3, 2, 1])

    def loss(params):
        wrapped = WorldModel(params, params, OBS, ACT)
        s_hat, caches = _rollout_dynamics(wrapped, seg)
        return _dynamics_segment_update(wrapped, seg, s_hat, caches, cfg.c1, cfg.rho_temporal)

    report = gradient_check(loss, model.dynamics, tol=1e-3)
    assert report.passed, str(report)


def test_head_losses_gradient_check():
    heads = tiny_heads(seed=9)
    batch = random_step_batch(30)

    def reward_obj(params):
        heads.reward = params
        return reward_loss(heads, batch, c2=0.5)

    report = gradient_check(reward_obj, heads.reward, tol=1e-3)
    assert report.passed, str(report)

    heads2 = tiny_heads(seed=10)

    def value_obj(params):
        heads2.value = params
        return value_loss(heads2, batch, gamma=0.9, c3=0.1)

    report = gradient_check(value_obj, heads2.value, tol=1e-3)
    assert report.passed, str(report)

    heads3 = tiny_heads(seed=11)
    # the perturbation flows through the value net, so the oracle needs it
    # evaluated in float64 as well
    heads3.value = heads3.value.astype(np.float64)

    def policy_obj(params):
        heads3.policy = params
        return policy_loss(heads3, batch.states)

    report = gradient_check(policy_obj, heads3.policy, tol=1e-3)
    assert report.passed, str(report)


def test_policy_loss_gradient_check_continuous():
    heads = tiny_heads(seed=12, discrete=False)
    heads.value = heads.value.astype(np.float64)
    states = Rng(31).normal((4, OBS)).astype(np.float32)

    def policy_obj(params):
        heads.policy = params
        return policy_loss(heads, states)

    report = gradient_check(policy_obj, heads.policy, tol=1e-3)
    assert report.passed, str(report)
