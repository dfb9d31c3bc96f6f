import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vqcppo import envs, ppo, qpolicy
from vqcppo.errors import ConfigurationError
from vqcppo.qpolicy import MlpActorCritic, QuantumActorCritic
from vqcppo.vqc import VqcConfig


def test_gae_single_step():
    adv, ret = ppo.compute_gae([1.0], [0.5], [True], 0.0, 0.99, 0.95)
    assert adv[0] == 0.5 and ret[0] == 1.0


def test_gae_two_steps_by_hand():
    r, v, last, g, lam = np.array([1.0, 2.0]), np.array([0.5, 0.25]), 0.75, 0.9, 0.5
    d1 = r[1] + g * last - v[1]
    d0 = r[0] + g * v[1] - v[0]
    adv, ret = ppo.compute_gae(r, v, [False, False], last, g, lam)
    assert adv[1] == pytest.approx(d1)
    assert adv[0] == pytest.approx(d0 + g * lam * d1)
    np.testing.assert_allclose(ret, adv + v)


def test_gae_lambda_zero_and_one():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=10), rng.normal(size=10)
    adv, _ = ppo.compute_gae(r, v, np.zeros(10, bool), 0.3, 0.9, 0.0)
    np.testing.assert_allclose(adv, r + 0.9 * np.append(v[1:], 0.3) - v, atol=1e-14)
    adv, _ = ppo.compute_gae(r, v, np.zeros(10, bool), 0.3, 0.9, 1.0)
    disc = np.array([sum(0.9**k * r[t + k] for k in range(10 - t)) + 0.9 ** (10 - t) * 0.3 for t in range(10)])
    np.testing.assert_allclose(adv, disc - v, atol=1e-12)


def test_gae_stops_at_episode_end():
    adv, _ = ppo.compute_gae([0.0, 0.0, 5.0], [0.0, 0.0, 0.0], [False, True, False], 0.0, 1.0, 1.0)
    assert adv[0] == 0.0 and adv[1] == 0.0 and adv[2] == 5.0


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 32), st.integers(0, 2**31 - 1))
def test_gae_matches_direct_summation(n, seed):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=n), rng.normal(size=n)
    dones = rng.random(n) < 0.2
    last = float(rng.normal())
    g, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
    adv, _ = ppo.compute_gae(r, v, dones, last, g, lam)
    np.testing.assert_allclose(adv, oracles.gae_direct(r, v, dones, last, g, lam), atol=1e-12)


def test_truncation_bootstrap_folded_into_reward():
    batch = ppo.RolloutBatch(
        states=np.zeros((2, 1)),
        actions=np.zeros((2, 1)),
        rewards=np.array([1.0, 1.0]),
        dones=np.array([True, False]),
        terminated=np.array([False, False]),
        log_probs=np.zeros(2),
        values=np.zeros(2),
        bootstrap=np.array([10.0, 0.0]),
        last_value=0.0,
        episode_returns=[],
    )
    cfg = ppo.TrainConfig(gamma=0.9, gae_lambda=1.0)
    ppo.finalize_batch(batch, cfg)
    assert batch.advantages[0] == pytest.approx(1.0 + 0.9 * 10.0)


def test_schedule():
    cfg = ppo.TrainConfig(schedule_start=300_000, schedule_decay=0.97)
    assert ppo.lr_schedule(0, cfg) == 1.0
    assert ppo.lr_schedule(300_000, cfg) == 1.0
    assert ppo.lr_schedule(312_000, cfg) == pytest.approx(0.912673, abs=1e-6)
    assert ppo.lr_schedule(10**6, ppo.TrainConfig()) == 1.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ppo.TrainConfig(minibatch_size=0)
    with pytest.raises(ConfigurationError):
        ppo.TrainConfig(gamma=1.5)
    with pytest.raises(ConfigurationError):
        ppo.TrainConfig(learning_rates={"theta": -1.0})
    assert ppo.TrainConfig().iterations == 37


def small_agent(seed=0):
    cfg = VqcConfig(n_features=3, n_layers=2)
    return QuantumActorCritic(cfg, cfg, np.random.default_rng(seed))


def frozen_batch(agent, n=64, seed=1):
    runner = ppo.Runner(envs.make_env("Pendulum-v1", normalize=True), np.random.default_rng(seed), seed=seed)
    return ppo.finalize_batch(ppo.collect_rollout(agent, runner, n), ppo.TrainConfig())


def test_rollout_shapes_and_consistency():
    agent = small_agent()
    runner = ppo.Runner(envs.make_env("Pendulum-v1", normalize=True), np.random.default_rng(0), seed=0)
    batch = ppo.collect_rollout(agent, runner, 450)
    assert len(batch) == 450 and batch.states.shape == (450, 3) and batch.actions.shape == (450, 1)
    assert batch.dones.sum() == 2 and batch.dones[199] and batch.dones[399]
    assert len(batch.episode_returns) == 2
    assert batch.episode_returns[0] == pytest.approx(batch.rewards[:200].sum())
    np.testing.assert_allclose(batch.log_probs, qpolicy.log_prob(agent.forward(batch.states).policy, batch.actions))
    assert np.all(batch.bootstrap[[199, 399]] != 0) and np.count_nonzero(batch.bootstrap) == 2
    with pytest.raises(ConfigurationError):
        ppo.collect_rollout(agent, runner, 0)


def test_ratio_one_loss_is_negative_mean_advantage():
    agent = small_agent()
    batch = frozen_batch(agent)
    out = agent.forward(batch.states)
    stats, *_ = ppo.ppo_loss_partials(out, batch.actions, batch.log_probs, batch.advantages, batch.returns, 0.2)
    assert stats["actor_loss"] == pytest.approx(-batch.advantages.mean(), abs=1e-12)
    assert stats["clip_frac"] == 0.0


def test_clipped_samples_have_zero_gradient():
    agent = small_agent()
    batch = frozen_batch(agent, n=8)
    out = agent.forward(batch.states)
    adv = np.array([1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    # ratio 1.5 with positive advantage and 0.5 with negative advantage sit past the clip
    shift = np.log(np.array([1.5, 1.1, 0.5, 0.9, 0.5, 1.5, 1.0, 1.0]))
    _, d_mu, d_sigma, _ = ppo.ppo_loss_partials(out, batch.actions, batch.log_probs - shift, adv, batch.returns, 0.2)
    assert np.all(d_mu[[0, 2]] == 0) and np.all(d_sigma[[0, 2]] == 0)
    assert np.all(d_mu[[1, 3, 4, 5]] != 0)


def test_zero_advantage_leaves_actor_unchanged():
    agent = small_agent()
    batch = frozen_batch(agent)
    batch.advantages[:] = 0.0
    before = {k: v.copy() for k, v in agent.param_groups().items()}
    cfg = ppo.TrainConfig(batch_size=64, minibatch_size=16, epochs=2, normalize_advantages=False)
    ppo.ppo_update(agent, batch, cfg, ppo.Optimizer(), np.random.default_rng(0))
    for k, v in agent.param_groups().items():
        if k.startswith("actor"):
            np.testing.assert_array_equal(v, before[k])
        else:
            assert not np.array_equal(v, before[k])


def test_critic_loss_decreases_on_frozen_batch():
    agent = small_agent()
    batch = frozen_batch(agent, n=64)
    batch.returns[:] = -3.0
    cfg = ppo.TrainConfig(batch_size=64, minibatch_size=64, epochs=1, learning_rates={"theta": 0.01, "lambda": 0.01, "w": 0.05})
    opt = ppo.Optimizer()
    rng = np.random.default_rng(0)
    losses = [ppo.ppo_update(agent, batch, cfg, opt, rng)["critic_loss"] for _ in range(10)]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_zero_learning_rate_is_bit_identical():
    agent = small_agent()
    batch = frozen_batch(agent)
    before = {k: v.copy() for k, v in agent.param_groups().items()}
    cfg = ppo.TrainConfig(batch_size=64, minibatch_size=16, epochs=2, learning_rates={"theta": 0, "lambda": 0, "w": 0})
    ppo.ppo_update(agent, batch, cfg, ppo.Optimizer(), np.random.default_rng(0))
    for k, v in agent.param_groups().items():
        np.testing.assert_array_equal(v, before[k])


def test_adam_first_step_moves_by_learning_rate():
    p = {"x": np.array([1.0, -2.0])}
    ppo.Optimizer().step(p, {"x": np.array([0.3, -5.0])}, {"x": 0.1})
    np.testing.assert_allclose(p["x"], [0.9, -1.9], atol=1e-7)
    p = {"x": np.array([1.0])}
    ppo.Optimizer("sgd").step(p, {"x": np.array([2.0])}, {"x": 0.5})
    assert p["x"][0] == 0.0


def tiny_train(agent_factory, seed, **kw):
    env = envs.make_env("Pendulum-v1", normalize=True)
    cfg = ppo.TrainConfig(batch_size=200, minibatch_size=50, epochs=2, total_steps=600, seed=seed, **kw)
    return ppo.train(agent_factory(), env, cfg)


def test_training_is_reproducible():
    a = tiny_train(lambda: small_agent(3), seed=3)
    b = tiny_train(lambda: small_agent(3), seed=3)
    assert [r.mean_episode_reward for r in a] == [r.mean_episode_reward for r in b]
    assert [r.env_steps for r in a] == [200, 400, 600]
    c = tiny_train(lambda: small_agent(3), seed=4)
    assert [r.mean_episode_reward for r in a] != [r.mean_episode_reward for r in c]


def test_mlp_trains_through_same_loop():
    model = lambda: MlpActorCritic(3, 1, np.random.default_rng(0))  # noqa: E731
    with pytest.raises(ConfigurationError):
        tiny_train(model, seed=0)
    recs = tiny_train(model, seed=0, learning_rates={"mlp": 1e-3})
    assert len(recs) == 3 and all(np.isfinite(r.mean_episode_reward) for r in recs)


def test_role_qualified_learning_rate_overrides_shared():
    agent = small_agent()
    rates = {"theta": 1e-3, "lambda": 1e-3, "w": 1e-2, "critic.w": 0.5}
    assert ppo.group_learning_rate(agent, "critic.w", rates) == 0.5
    assert ppo.group_learning_rate(agent, "actor.w", rates) == 1e-2
    assert ppo.group_learning_rate(agent, "critic.theta", rates) == 1e-3
    with pytest.raises(ConfigurationError, match="critic.theta"):
        ppo.group_learning_rate(agent, "critic.theta", {"w": 1.0})


def test_role_override_moves_only_that_group():
    agent = small_agent()
    batch = frozen_batch(agent)
    before = {k: v.copy() for k, v in agent.param_groups().items()}
    rates = {"theta": 0.0, "lambda": 0.0, "w": 0.0, "critic.w": 0.1}
    cfg = ppo.TrainConfig(batch_size=64, minibatch_size=32, epochs=1, learning_rates=rates)
    ppo.ppo_update(agent, batch, cfg, ppo.Optimizer(), np.random.default_rng(0))
    moved = {k for k, v in agent.param_groups().items() if not np.array_equal(v, before[k])}
    assert moved == {"critic.w"}
