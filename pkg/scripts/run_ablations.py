"""Run the embedding and readout sweeps and print final-10-iteration means.

    python scripts/run_ablations.py embedding --root runs
    python scripts/run_ablations.py readout --seeds 0 1 --summary-only

Each config in ``configs/<group>/`` is trained for its listed seeds (or
``--seeds``); seeds already on disk with a matching fingerprint are reused.
"""
import argparse
from pathlib import Path

import numpy as np

from vqcppo import harness

REPO = Path(__file__).resolve().parent.parent


def final_mean(path, last=10):
    return float(harness.read_seed_csv(path)["mean_episode_reward"][-last:].mean())


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("group", choices=["embedding", "readout"])
    p.add_argument("--root", default=None, help="output root (defaults to the working directory)")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--summary-only", action="store_true", help="only tabulate results already on disk")
    args = p.parse_args()

    rows = []
    for path in sorted((REPO / "configs" / args.group).glob("*.yaml")):
        data = harness.config_to_dict(harness.load_config(path))
        if args.seeds is not None:
            data["seeds"] = args.seeds
        data["workers"] = args.workers
        cfg = harness.config_from_dict(data)
        out = harness.output_dir(cfg, args.root)
        if not args.summary_only:
            harness.run_experiment(cfg, root=args.root, reuse=True)
        files = [harness.seed_csv(out, s) for s in cfg.seeds if harness.seed_csv(out, s).exists()]
        if files:
            finals = [final_mean(f) for f in files]
            rows.append((path.stem, len(finals), np.mean(finals), np.std(finals)))
    print(f"{'config':16s} {'seeds':>5s} {'final-10 mean':>14s} {'std':>8s}")
    for name, n, mean, std in sorted(rows, key=lambda r: -r[2]):
        print(f"{name:16s} {n:5d} {mean:14.1f} {std:8.1f}")


if __name__ == "__main__":
    main()
