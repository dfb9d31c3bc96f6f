"""Gaussian actor and value critic on top of circuit expectations.

Actor: ``mu_i = <O_mu_i> * w_mu_i`` and ``sigma_i = exp(<O_sigma_i> * w_sigma_i)``.
Critic: ``V = sum_k <O_v_k> * w_v_k``.

The actor weight vector is laid out as ``[w_mu_0..w_mu_{A-1}, w_sigma_0..]``.
A classical 64-64 ReLU actor-critic with the same Gaussian head is provided
as a benchmark.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import diff, qsim, vqc
from .errors import ConfigurationError
from .qsim import ZProductObservable
from .vqc import CircuitPlan, ParameterStore, VqcConfig

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ReadoutConfig:
    id: str
    n_qubits: int
    n_actions: int
    mu: tuple[ZProductObservable, ...]
    sigma: tuple[ZProductObservable, ...]
    value: tuple[ZProductObservable, ...]

    @property
    def actor_observables(self) -> tuple[ZProductObservable, ...]:
        return self.mu + self.sigma

    @property
    def n_actor_weights(self) -> int:
        return 2 * self.n_actions

    @property
    def n_critic_weights(self) -> int:
        return len(self.value)


def _product(first: int, length: int, n: int) -> ZProductObservable:
    qs = [(first + k) % n for k in range(length)]
    if len(set(qs)) != len(qs):
        raise ConfigurationError(f"Z-product over {length} qubits does not fit {n} qubits")
    return ZProductObservable(qs)


def build_readout(readout_id: str, n_qubits: int, n_actions: int) -> ReadoutConfig:
    """Observable assignment for readout ``M1``..``M9``; qubit indices wrap modulo ``n_qubits``."""
    if readout_id not in vqc.READOUT_IDS:
        raise ConfigurationError(f"unknown readout {readout_id!r}")
    row = int(readout_id[1:]) - 1
    # actor rows: (mu length, sigma offset, sigma length)
    mu_len, sig_off, sig_len = [(1, 1, 1), (2, 2, 1), (3, 3, 3)][row // 3]
    mu = tuple(_product(i, mu_len, n_qubits) for i in range(n_actions))
    sigma = tuple(_product(i + sig_off, sig_len, n_qubits) for i in range(n_actions))
    column = row % 3
    if column == 0:
        value = tuple(ZProductObservable([j]) for j in range(n_qubits))
    elif column == 1:
        value = (ZProductObservable([0]),)
    else:
        value = (ZProductObservable(range(n_qubits)),)
    return ReadoutConfig(readout_id, n_qubits, n_actions, mu, sigma, value)


# -- Gaussian policy -------------------------------------------------------------


@dataclass
class GaussianPolicy:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if np.any(~(self.sigma > 0)):
            raise AssertionError("policy standard deviation must be positive")


def log_prob(policy: GaussianPolicy, action) -> np.ndarray | float:
    a = np.asarray(action, dtype=float)
    if a.shape[-1] != policy.mu.shape[-1]:
        raise ConfigurationError(f"action dim {a.shape[-1]} != policy dim {policy.mu.shape[-1]}")
    z = (a - policy.mu) / policy.sigma
    out = np.sum(-0.5 * z * z - np.log(policy.sigma) - LOG_SQRT_2PI, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def sample(policy: GaussianPolicy, rng: np.random.Generator) -> np.ndarray:
    return policy.mu + policy.sigma * rng.standard_normal(policy.mu.shape)


def entropy(policy: GaussianPolicy) -> np.ndarray | float:
    out = np.sum(0.5 + LOG_SQRT_2PI + np.log(policy.sigma), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# -- quantum actor / critic ------------------------------------------------------


def _expectations(final: np.ndarray, n: int, observables) -> np.ndarray:
    return np.stack([qsim.diag_expectation(final, o.signs(n)) for o in observables], axis=-1)


def actor_forward(plan: CircuitPlan, params: ParameterStore, readout: ReadoutConfig, s) -> GaussianPolicy:
    final = vqc.forward(plan, params, s).amplitudes
    e = _expectations(final, plan.n_qubits, readout.actor_observables)
    a = readout.n_actions
    return GaussianPolicy(e[..., :a] * params.w[:a], np.exp(e[..., a:] * params.w[a:]))


def critic_forward(plan: CircuitPlan, params: ParameterStore, readout: ReadoutConfig, s):
    final = vqc.forward(plan, params, s).amplitudes
    e = _expectations(final, plan.n_qubits, readout.value)
    v = e @ params.w
    return float(v) if np.ndim(v) == 0 else v


@dataclass
class AgentOutput:
    """Batched forward pass plus whatever the backward pass needs."""

    policy: GaussianPolicy
    value: np.ndarray
    states: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


class QuantumActorCritic:
    """Actor and critic circuits with their own parameters and a shared readout id."""

    kind = "quantum"

    def __init__(
        self,
        actor_config: VqcConfig,
        critic_config: VqcConfig,
        rng: np.random.Generator,
        theta_std: float = 0.1,
    ):
        self.actor_config = actor_config
        self.critic_config = critic_config
        self.actor_plan = vqc.build_plan(actor_config)
        self.critic_plan = vqc.build_plan(critic_config)
        self.readout = build_readout(actor_config.readout, actor_config.n_qubits, actor_config.n_actions)
        self.critic_readout = build_readout(critic_config.readout, critic_config.n_qubits, 1)
        self.actor = vqc.init_parameters(self.actor_plan, self.readout.n_actor_weights, rng, theta_std)
        self.critic = vqc.init_parameters(
            self.critic_plan, self.critic_readout.n_critic_weights, rng, theta_std
        )

    @property
    def n_actions(self) -> int:
        return self.readout.n_actions

    def param_groups(self) -> dict[str, np.ndarray]:
        out = {f"actor.{k}": v for k, v in self.actor.groups().items()}
        out.update({f"critic.{k}": v for k, v in self.critic.groups().items()})
        return out

    @staticmethod
    def lr_key(group: str) -> str:
        return group.split(".", 1)[1]

    def policy(self, s) -> GaussianPolicy:
        return actor_forward(self.actor_plan, self.actor, self.readout, s)

    def value(self, s):
        return critic_forward(self.critic_plan, self.critic, self.critic_readout, s)

    def forward(self, states) -> AgentOutput:
        s = np.atleast_2d(np.asarray(states, dtype=float))
        a_final = vqc.forward(self.actor_plan, self.actor, s).amplitudes
        c_final = vqc.forward(self.critic_plan, self.critic, s).amplitudes
        e_a = _expectations(a_final, self.actor_plan.n_qubits, self.readout.actor_observables)
        e_c = _expectations(c_final, self.critic_plan.n_qubits, self.critic_readout.value)
        n_a = self.n_actions
        w = self.actor.w
        pol = GaussianPolicy(e_a[:, :n_a] * w[:n_a], np.exp(e_a[:, n_a:] * w[n_a:]))
        return AgentOutput(
            pol, e_c @ self.critic.w, s, {"a_final": a_final, "c_final": c_final, "e_a": e_a, "e_c": e_c}
        )

    def gradients(self, out: AgentOutput, d_mu, d_sigma, d_value) -> dict[str, np.ndarray]:
        return actor_critic_gradients(self, out, d_mu, d_sigma, d_value)


def actor_critic_gradients(
    agent: QuantumActorCritic, out: AgentOutput, d_mu, d_sigma, d_value
) -> dict[str, np.ndarray]:
    """Chain per-sample loss partials w.r.t. (mu, sigma, V) into every parameter group."""
    d_mu = np.asarray(d_mu, dtype=float)
    d_sigma = np.asarray(d_sigma, dtype=float)
    d_value = np.asarray(d_value, dtype=float)
    batch = out.states.shape[0]
    n_a = agent.n_actions
    if d_mu.shape != (batch, n_a) or d_sigma.shape != (batch, n_a) or d_value.shape != (batch,):
        raise ConfigurationError(
            f"loss partial shapes {d_mu.shape}, {d_sigma.shape}, {d_value.shape} do not match batch {batch}"
        )
    e_a, e_c = out.cache["e_a"], out.cache["e_c"]
    w = agent.actor.w
    sigma = out.policy.sigma

    # upstream partials w.r.t. every actor expectation (mu block, then sigma block)
    d_e_actor = np.concatenate([d_mu * w[:n_a], d_sigma * sigma * w[n_a:]], axis=1)
    d_w_actor = np.concatenate([(d_mu * e_a[:, :n_a]).sum(0), (d_sigma * sigma * e_a[:, n_a:]).sum(0)])
    signs = np.stack([o.signs(agent.actor_plan.n_qubits) for o in agent.readout.actor_observables])
    a_theta, a_lam = diff.vjp(agent.actor_plan, agent.actor, out.states, out.cache["a_final"], d_e_actor @ signs)

    d_e_critic = d_value[:, None] * agent.critic.w
    d_w_critic = d_value @ e_c
    signs = np.stack([o.signs(agent.critic_plan.n_qubits) for o in agent.critic_readout.value])
    c_theta, c_lam = diff.vjp(
        agent.critic_plan, agent.critic, out.states, out.cache["c_final"], d_e_critic @ signs
    )
    return {
        "actor.lambda": a_lam,
        "actor.theta": a_theta,
        "actor.w": d_w_actor,
        "critic.lambda": c_lam,
        "critic.theta": c_theta,
        "critic.w": d_w_critic,
    }


# -- classical baseline ----------------------------------------------------------


def _dense_init(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = 1.0) -> np.ndarray:
    limit = gain * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


class MlpActorCritic:
    """Two-hidden-layer ReLU networks for actor (means) and critic, plus a free log-sigma vector."""

    kind = "classical"

    def __init__(self, n_inputs: int, n_actions: int, rng: np.random.Generator, hidden: Sequence[int] = (64, 64)):
        self.n_inputs = n_inputs
        self._n_actions = n_actions
        self.hidden = tuple(hidden)
        self.params: dict[str, np.ndarray] = {}
        for net, n_out, out_gain in (("actor", n_actions, 0.01), ("critic", 1, 1.0)):
            sizes = (n_inputs,) + self.hidden + (n_out,)
            for k in range(len(sizes) - 1):
                last = k == len(sizes) - 2
                self.params[f"{net}.W{k}"] = _dense_init(rng, sizes[k], sizes[k + 1], out_gain if last else 1.0)
                self.params[f"{net}.b{k}"] = np.zeros(sizes[k + 1])
        self.params["actor.log_std"] = np.zeros(n_actions)

    @property
    def n_actions(self) -> int:
        return self._n_actions

    def param_groups(self) -> dict[str, np.ndarray]:
        return self.params

    @staticmethod
    def lr_key(group: str) -> str:
        return "mlp"

    def layer_sizes(self) -> dict[str, int]:
        return {k: v.size for k, v in self.params.items()}

    def _net(self, net: str, x: np.ndarray):
        acts = [x]
        pre = []
        n_layers = len(self.hidden) + 1
        for k in range(n_layers):
            z = acts[-1] @ self.params[f"{net}.W{k}"] + self.params[f"{net}.b{k}"]
            pre.append(z)
            acts.append(np.maximum(z, 0.0) if k < n_layers - 1 else z)
        return acts, pre

    def forward(self, states) -> AgentOutput:
        s = np.atleast_2d(np.asarray(states, dtype=float))
        a_acts, a_pre = self._net("actor", s)
        c_acts, c_pre = self._net("critic", s)
        sigma = np.broadcast_to(np.exp(self.params["actor.log_std"]), a_acts[-1].shape).copy()
        pol = GaussianPolicy(a_acts[-1], sigma)
        return AgentOutput(pol, c_acts[-1][:, 0], s, {"actor": (a_acts, a_pre), "critic": (c_acts, c_pre)})

    def policy(self, s) -> GaussianPolicy:
        out = self.forward(s)
        if np.ndim(s) == 1:
            return GaussianPolicy(out.policy.mu[0], out.policy.sigma[0])
        return out.policy

    def value(self, s):
        v = self.forward(s).value
        return float(v[0]) if np.ndim(s) == 1 else v

    def _backprop(self, net: str, acts, pre, d_out, grads):
        g = d_out
        for k in range(len(pre) - 1, -1, -1):
            grads[f"{net}.W{k}"] = acts[k].T @ g
            grads[f"{net}.b{k}"] = g.sum(0)
            if k:
                g = (g @ self.params[f"{net}.W{k}"].T) * (pre[k - 1] > 0)

    def gradients(self, out: AgentOutput, d_mu, d_sigma, d_value) -> dict[str, np.ndarray]:
        return mlp_gradients(self, out, d_mu, d_sigma, d_value)


def mlp_forward(model: MlpActorCritic, states) -> AgentOutput:
    return model.forward(states)


def mlp_gradients(model: MlpActorCritic, out: AgentOutput, d_mu, d_sigma, d_value) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    model._backprop("actor", *out.cache["actor"], np.asarray(d_mu, dtype=float), grads)
    model._backprop("critic", *out.cache["critic"], np.asarray(d_value, dtype=float)[:, None], grads)
    grads["actor.log_std"] = (np.asarray(d_sigma) * out.policy.sigma).sum(0)
    return grads
