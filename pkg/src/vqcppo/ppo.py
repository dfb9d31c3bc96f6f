"""Clipped-surrogate PPO with GAE and per-group adaptive optimizers.

Agents only need ``forward(states) -> AgentOutput``, ``gradients(out, d_mu,
d_sigma, d_value)``, ``param_groups()``, ``lr_key(group)`` and
``n_actions``; both the quantum and the MLP actor-critic qualify.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import qpolicy
from .errors import ConfigurationError, NumericError
from .qpolicy import GaussianPolicy

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 4000
    minibatch_size: int = 64
    epochs: int = 10
    gamma: float = 0.99
    gae_lambda: float = 0.1
    clip_eps: float = 0.2
    learning_rates: dict = field(default_factory=lambda: {"theta": 0.001, "lambda": 0.001, "w": 0.01})
    schedule_start: int | None = None
    schedule_decay: float = 0.97
    total_steps: int = 150_000
    seed: int = 0
    normalize_advantages: bool = True
    entropy_coef: float = 0.0
    optimizer: str = "adam"
    theta_init_std: float = 0.1
    reward_scale: float = 1.0

    def __post_init__(self):
        if not 1 <= self.minibatch_size <= self.batch_size:
            raise ConfigurationError("need 1 <= minibatch_size <= batch_size")
        if not (0 < self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ConfigurationError("need 0 < gamma <= 1 and 0 <= gae_lambda <= 1")
        if self.clip_eps <= 0 or self.epochs < 1:
            raise ConfigurationError("clip_eps must be > 0 and epochs >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if not self.reward_scale > 0:
            raise ConfigurationError("reward_scale must be positive")
        if any(v < 0 for v in self.learning_rates.values()):
            raise ConfigurationError("learning rates must be non-negative")

    @property
    def iterations(self) -> int:
        return self.total_steps // self.batch_size


@dataclass
class RolloutBatch:
    states: np.ndarray
    actions: np.ndarray  # raw samples, before clipping to the action bounds
    rewards: np.ndarray
    dones: np.ndarray  # episode ended after this step (terminated or truncated)
    terminated: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    bootstrap: np.ndarray  # V(final obs) on truncated steps, else 0
    last_value: float
    episode_returns: list[float]
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)


class Runner:
    """Steps one environment, carrying the current observation across batches."""

    def __init__(self, env, rng: np.random.Generator, seed: int | None = None):
        self.env = env
        self.rng = rng
        self.obs = env.reset(seed)
        self.episode_return = 0.0
        self.total_steps = 0


def _clip_action(env, action: np.ndarray) -> np.ndarray:
    b = np.asarray(env.spec.action_bounds, dtype=float)
    return np.clip(action, b[:, 0], b[:, 1])


def collect_rollout(agent, runner: Runner, n_steps: int) -> RolloutBatch:
    if n_steps < 1:
        raise ConfigurationError("n_steps must be >= 1")
    env, rng = runner.env, runner.rng
    obs_dim = np.asarray(runner.obs).shape[-1]
    states = np.zeros((n_steps, obs_dim))
    actions = np.zeros((n_steps, agent.n_actions))
    rewards = np.zeros(n_steps)
    dones = np.zeros(n_steps, dtype=bool)
    terminated = np.zeros(n_steps, dtype=bool)
    log_probs = np.zeros(n_steps)
    truncated_obs: dict[int, np.ndarray] = {}
    returns: list[float] = []
    for t in range(n_steps):
        states[t] = runner.obs
        pol = agent.policy(runner.obs)
        a = qpolicy.sample(pol, rng)
        actions[t] = a
        log_probs[t] = qpolicy.log_prob(pol, a)
        try:
            obs, r, term, trunc = env.step(_clip_action(env, a))
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise
            raise RuntimeError(f"environment failed at rollout step {t}: {exc}") from exc
        rewards[t] = r
        terminated[t] = term
        dones[t] = term or trunc
        runner.episode_return += r
        runner.total_steps += 1
        if dones[t]:
            if trunc and not term:
                truncated_obs[t] = obs
            returns.append(runner.episode_return)
            runner.episode_return = 0.0
            obs = env.reset()
        runner.obs = obs

    values = np.asarray(agent.forward(states).value, dtype=float)
    bootstrap = np.zeros(n_steps)
    if truncated_obs:
        idx = sorted(truncated_obs)
        bootstrap[idx] = agent.forward(np.stack([truncated_obs[i] for i in idx])).value
    last_value = float(agent.forward(runner.obs).value[0])
    return RolloutBatch(
        states, actions, rewards, dones, terminated, log_probs, values, bootstrap, last_value, returns
    )


def compute_gae(rewards, values, dones, last_value: float, gamma: float, lam: float):
    """Generalized advantage estimates and returns ``A + V``.

    ``values[t]`` is ``V(s_t)``; ``last_value`` bootstraps the state following
    the final step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = len(rewards)
    adv = np.zeros(n)
    next_value, next_adv = float(last_value), 0.0
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def finalize_batch(batch: RolloutBatch, cfg: TrainConfig) -> RolloutBatch:
    # critic targets live in scaled units; time-limit truncation folds the
    # bootstrap value into the reward
    rewards = cfg.reward_scale * batch.rewards + cfg.gamma * batch.bootstrap
    batch.advantages, batch.returns = compute_gae(
        rewards, batch.values, batch.dones, batch.last_value, cfg.gamma, cfg.gae_lambda
    )
    return batch


def lr_schedule(env_steps: int, cfg: TrainConfig) -> float:
    """Learning-rate multiplier: 1 until ``schedule_start``, then decay once per iteration."""
    if cfg.schedule_start is None or env_steps <= cfg.schedule_start:
        return 1.0
    return cfg.schedule_decay ** ((env_steps - cfg.schedule_start) // cfg.batch_size)


class Optimizer:
    """Adam (or plain SGD) with independent state per parameter group."""

    def __init__(self, kind: str = "adam", beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.kind = kind
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state: dict[str, list] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lrs: dict[str, float]) -> None:
        for name, p in params.items():
            g, lr = grads[name], lrs[name]
            if self.kind == "sgd":
                p -= lr * g
                continue
            m, v, t = self.state.setdefault(name, [np.zeros_like(p), np.zeros_like(p), 0])
            t += 1
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            self.state[name][2] = t
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def ppo_loss_partials(out, actions, old_log_probs, advantages, returns, clip_eps: float, entropy_coef: float = 0.0):
    """Minibatch losses and their partials w.r.t. mu, sigma and V (per sample)."""
    pol: GaussianPolicy = out.policy
    n = len(advantages)
    mu, sigma = pol.mu, pol.sigma
    new_lp = qpolicy.log_prob(pol, actions)
    ratio = np.exp(new_lp - old_log_probs)
    surr = ratio * advantages
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * advantages
    ent = qpolicy.entropy(pol)
    actor_loss = -np.mean(np.minimum(surr, clipped)) - entropy_coef * np.mean(ent)
    # the clipped branch carries no gradient once it is the strictly smaller one
    d_lp = np.where(surr <= clipped, -advantages * ratio / n, 0.0)[:, None]
    diff = actions - mu
    d_mu = d_lp * diff / sigma**2
    d_sigma = d_lp * (diff**2 / sigma**3 - 1.0 / sigma) - entropy_coef / n / sigma
    err = out.value - returns
    critic_loss = np.mean(err**2)
    d_value = 2.0 * err / n
    stats = {
        "actor_loss": float(actor_loss),
        "critic_loss": float(critic_loss),
        "clip_frac": float(np.mean(np.abs(ratio - 1) > clip_eps)),
        "entropy": float(np.mean(ent)),
    }
    return stats, d_mu, d_sigma, d_value


def group_learning_rate(agent, group: str, rates: dict) -> float:
    """Rate for ``group`` ("actor.theta", "critic.W1", ...).

    A role-qualified key such as ``critic.w`` wins over the shared ``w``.
    """
    key = agent.lr_key(group)
    role = group.split(".", 1)[0]
    for k in (f"{role}.{key}", key):
        if k in rates:
            return rates[k]
    raise ConfigurationError(f"no learning rate for parameter group {group!r} (looked for {role}.{key}, {key})")


def ppo_update(agent, batch: RolloutBatch, cfg: TrainConfig, optimizer: Optimizer, rng: np.random.Generator, lr_mult: float = 1.0):
    if batch.advantages is None:
        raise ConfigurationError("compute advantages before the update")
    adv = batch.advantages
    if cfg.normalize_advantages and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    groups = agent.param_groups()
    lrs = {name: group_learning_rate(agent, name, cfg.learning_rates) * lr_mult for name in groups}
    n = len(batch)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start : start + cfg.minibatch_size]
            out = agent.forward(batch.states[idx])
            stats, d_mu, d_sigma, d_value = ppo_loss_partials(
                out, batch.actions[idx], batch.log_probs[idx], adv[idx], batch.returns[idx],
                cfg.clip_eps, cfg.entropy_coef,
            )
            if not (math.isfinite(stats["actor_loss"]) and math.isfinite(stats["critic_loss"])):
                raise NumericError(f"non-finite loss at minibatch starting {start}: {stats}")
            grads = agent.gradients(out, d_mu, d_sigma, d_value)
            optimizer.step(groups, grads, lrs)
            history.append(stats)
    return {k: float(np.mean([h[k] for h in history])) for k in history[0]}


@dataclass
class TrainingRecord:
    iteration: int
    env_steps: int
    mean_episode_reward: float
    std_episode_reward: float
    episodes: int
    learning_rates: dict
    wall_seconds: float
    losses: dict = field(default_factory=dict)


def train(agent, env, cfg: TrainConfig, callback=None) -> list[TrainingRecord]:
    """Run ``cfg.iterations`` collect/update cycles; deterministic given ``cfg.seed``."""
    env_seq, act_seq, shuffle_seq = np.random.SeedSequence([cfg.seed, 1]).spawn(3)
    env_seed = int(env_seq.generate_state(1)[0])
    runner = Runner(env, np.random.default_rng(act_seq), seed=env_seed)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    optimizer = Optimizer(cfg.optimizer)
    records = []
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        mult = lr_schedule(runner.total_steps, cfg)
        batch = finalize_batch(collect_rollout(agent, runner, cfg.batch_size), cfg)
        losses = ppo_update(agent, batch, cfg, optimizer, shuffle_rng, mult)
        rets = np.asarray(batch.episode_returns)
        rec = TrainingRecord(
            iteration=it,
            env_steps=runner.total_steps,
            mean_episode_reward=float(rets.mean()) if rets.size else float("nan"),
            std_episode_reward=float(rets.std()) if rets.size else float("nan"),
            episodes=int(rets.size),
            learning_rates={k: v * mult for k, v in cfg.learning_rates.items()},
            wall_seconds=time.perf_counter() - t0,
            losses=losses,
        )
        log.info("iter %d steps %d reward %.1f", it, rec.env_steps, rec.mean_episode_reward)
        records.append(rec)
        if callback is not None:
            callback(rec)
    return records
