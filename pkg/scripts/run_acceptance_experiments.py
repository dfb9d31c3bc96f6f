"""Train every configuration the acceptance suite reads, into its cache directory.

Seeds already present with a matching fingerprint are skipped, so the script
can be interrupted and restarted.  Roughly a few CPU-hours on one core.
"""
import argparse
import logging
import os
import time
from pathlib import Path

from vqcppo import harness

REPO = Path(__file__).resolve().parent.parent
CONFIGS = [
    "pendulum_mlp.yaml",
    "pendulum_quantum.yaml",
    "embedding/norm_identity.yaml",
    "embedding/raw_arctan.yaml",
    "readout/m1.yaml",
    "readout/m2.yaml",
    "readout/m3.yaml",
]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--root", default=os.environ.get("VQCPPO_ACCEPTANCE_ROOT", REPO / "runs" / "acceptance"))
    p.add_argument("--workers", type=int, default=1, help="seeds trained in parallel per config")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    for name in CONFIGS:
        data = harness.config_to_dict(harness.load_config(REPO / "configs" / name))
        data["workers"] = args.workers
        cfg = harness.config_from_dict(data)
        start = time.perf_counter()
        res = harness.run_experiment(cfg, root=args.root, reuse=True)
        logging.info("%s: %d seeds (%d reused) in %.0fs -> %s", name, len(res["seeds"]), len(res["reused"]),
                     time.perf_counter() - start, res["aggregate"])


if __name__ == "__main__":
    main()
