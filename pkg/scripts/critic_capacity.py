"""Fit a critic alone to Monte-Carlo returns of a random Pendulum policy.

Separates "can the value circuit represent the returns at all" from
"does PPO train it".  Prints the explained variance R^2 on a held-out
subsample as the regression proceeds.

    python scripts/critic_capacity.py --lr-circuit 1e-3 --lr-w 1e-2 --steps 6000
    python scripts/critic_capacity.py --mlp --steps 6000
"""
import argparse

import numpy as np

from vqcppo import envs, ppo, qpolicy, vqc


def random_policy_returns(episodes: int, gamma: float, rng: np.random.Generator):
    env = envs.make_env("Pendulum-v1", normalize=True)
    states, returns = [], []
    for ep in range(episodes):
        obs = env.reset(ep)
        ep_states, rewards = [], []
        for _ in range(env.spec.max_episode_steps):
            ep_states.append(obs)
            obs, r, _, _ = env.step(rng.uniform(-2, 2, 1))
            rewards.append(r)
        g, ep_returns = 0.0, []
        for r in reversed(rewards):
            g = r + gamma * g
            ep_returns.append(g)
        states += ep_states
        returns += ep_returns[::-1]
    return np.array(states), np.array(returns)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--readout", default="M1")
    p.add_argument("--mlp", action="store_true", help="fit the 64-64 MLP critic instead")
    p.add_argument("--lr-circuit", type=float, default=1e-3, help="theta and lambda")
    p.add_argument("--lr-w", type=float, default=1e-2)
    p.add_argument("--lr-mlp", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--episodes", type=int, default=60)
    p.add_argument("--minibatch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    states, returns = random_policy_returns(args.episodes, 0.99, rng)
    if args.mlp:
        agent = qpolicy.MlpActorCritic(3, 1, rng)
    else:
        cfg = vqc.VqcConfig(n_features=3, n_layers=args.layers, readout=args.readout)
        agent = qpolicy.QuantumActorCritic(cfg, cfg, rng)
    groups = {k: v for k, v in agent.param_groups().items() if k.startswith("critic")}
    lrs = {"theta": args.lr_circuit, "lambda": args.lr_circuit, "w": args.lr_w, "mlp": args.lr_mlp}
    lr = {k: lrs[agent.lr_key(k)] for k in groups}
    opt = ppo.Optimizer()
    held_s, held_r = states[::7], returns[::7]
    zeros = np.zeros((args.minibatch, 1))
    for step in range(args.steps):
        idx = rng.integers(0, len(states), args.minibatch)
        out = agent.forward(states[idx])
        grads = agent.gradients(out, zeros, zeros, 2 * (out.value - returns[idx]) / args.minibatch)
        opt.step(groups, {k: grads[k] for k in groups}, lr)
        if step % 1000 == 0 or step == args.steps - 1:
            v = agent.forward(held_s).value
            r2 = 1 - np.var(v - held_r) / np.var(held_r)
            print(f"step {step:6d}  R2 {r2:6.3f}  mean value {v.mean():8.1f}  mean return {held_r.mean():8.1f}", flush=True)


if __name__ == "__main__":
    main()
