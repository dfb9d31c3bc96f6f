"""Train Pendulum with one half of the agent quantum and the other an MLP.

``--actor quantum`` pairs the circuit policy with the 64-64 MLP critic;
``--actor mlp`` pairs the MLP policy with the circuit critic.  Comparing the
two against the all-quantum and all-MLP runs shows which half limits
learning.  Circuit rates follow the Pendulum defaults; the MLP uses 1e-3.

    python scripts/hybrid_agents.py --actor quantum --iterations 37 --seed 0
"""
import argparse

import numpy as np

from vqcppo import envs, ppo, qpolicy, vqc
from vqcppo.qpolicy import AgentOutput


class HybridAgent:
    """Policy from one model, value from the other; gradients routed to both."""

    def __init__(self, quantum, mlp, quantum_actor: bool):
        self.quantum, self.mlp, self.quantum_actor = quantum, mlp, quantum_actor
        self.n_actions = quantum.n_actions

    def param_groups(self):
        actor, critic = (self.quantum, self.mlp) if self.quantum_actor else (self.mlp, self.quantum)
        groups = {k: v for k, v in actor.param_groups().items() if k.startswith("actor")}
        groups.update({k: v for k, v in critic.param_groups().items() if k.startswith("critic")})
        return groups

    def lr_key(self, group):
        owner = self.quantum if (group.startswith("actor")) == self.quantum_actor else self.mlp
        return owner.lr_key(group)

    def policy(self, s):
        return (self.quantum if self.quantum_actor else self.mlp).policy(s)

    def forward(self, states):
        q, m = self.quantum.forward(states), self.mlp.forward(states)
        policy, value = (q.policy, m.value) if self.quantum_actor else (m.policy, q.value)
        return AgentOutput(policy, value, q.states, {"quantum": q, "mlp": m})

    def gradients(self, out, d_mu, d_sigma, d_value):
        grads = self.quantum.gradients(out.cache["quantum"], d_mu, d_sigma, d_value)
        grads.update(self.mlp.gradients(out.cache["mlp"], d_mu, d_sigma, d_value))
        return {k: grads[k] for k in self.param_groups()}


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--actor", choices=["quantum", "mlp"], required=True)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--iterations", type=int, default=37)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = vqc.VqcConfig(n_features=3, n_layers=args.layers)
    agent = HybridAgent(qpolicy.QuantumActorCritic(cfg, cfg, rng), qpolicy.MlpActorCritic(3, 1, rng), args.actor == "quantum")
    env = envs.make_env("Pendulum-v1", normalize=True)
    tc = ppo.TrainConfig(
        total_steps=4000 * args.iterations,
        seed=args.seed,
        learning_rates={"theta": 1e-3, "lambda": 1e-3, "w": 1e-2, "mlp": 1e-3},
    )
    ppo.train(agent, env, tc, lambda r: print(f"{r.iteration:3d} {r.env_steps:7d} {r.mean_episode_reward:8.1f}", flush=True))


if __name__ == "__main__":
    main()
