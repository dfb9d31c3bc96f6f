"""Experiment configs, multi-seed runs, CSV logs and reports."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import diff, envs, qpolicy, vqc
from .errors import ConfigurationError
from .ppo import TrainConfig, TrainingRecord, train
from .qsim import ZProductObservable

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "VQCPPO_OUTPUT_ROOT"
CSV_COLUMNS = ("iteration", "env_steps", "mean_episode_reward", "std_episode_reward")
AGGREGATE_COLUMNS = ("iteration", "env_steps", "mean", "std", "n_seeds")


@dataclass
class EnvConfig:
    name: str = "Pendulum-v1"
    normalize: bool | None = None  # None: follow the embedding mode
    feature_indices: list[int] | None = None


@dataclass
class CircuitConfig:
    n_layers: int = 5
    stack_factor: int = 1
    embedding: str = "NORM_IDENTITY"
    entangler: str = "CNOT"
    readout: str = "M1"


@dataclass
class MlpConfig:
    hidden: list[int] = field(default_factory=lambda: [64, 64])


@dataclass
class AnalysisConfig:
    trials: int = 20
    tol: float = 1e-10
    samples: int = 1000
    variance_qubits: list[int] = field(default_factory=lambda: [3, 6, 8])
    seed: int = 0


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    agent: str = "quantum"
    env: EnvConfig = field(default_factory=EnvConfig)
    vqc: CircuitConfig = field(default_factory=CircuitConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "runs/experiment"
    solved_threshold: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.agent not in ("quantum", "classical"):
            raise ConfigurationError(f"agent must be 'quantum' or 'classical', got {self.agent!r}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be a non-empty list of distinct integers")
        if self.train.iterations < 1:
            raise ConfigurationError("total_steps must cover at least one batch")
        vqc.EmbeddingMode(self.vqc.embedding)
        need = {"theta", "lambda", "w"} if self.agent == "quantum" else {"mlp"}
        allowed = need | {f"{role}.{k}" for role in ("actor", "critic") for k in need}
        have = set(self.train.learning_rates)
        if not need <= have <= allowed:
            raise ConfigurationError(
                f"{self.agent} agent needs learning_rates for {sorted(need)}, optionally overridden per role "
                f"as actor.<key> or critic.<key>; unknown {sorted(have - allowed)}, missing {sorted(need - have)}"
            )

    @property
    def normalize(self) -> bool:
        if self.env.normalize is not None:
            return self.env.normalize
        return self.agent == "quantum" and vqc.EmbeddingMode(self.vqc.embedding).normalized


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get((cls, key))
        kwargs[key] = _build(sub, value, f"{where}.{key}") if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(f"{where}: {exc}") from exc


_NESTED = {
    (ExperimentConfig, "env"): EnvConfig,
    (ExperimentConfig, "vqc"): CircuitConfig,
    (ExperimentConfig, "mlp"): MlpConfig,
    (ExperimentConfig, "train"): TrainConfig,
    (ExperimentConfig, "analysis"): AnalysisConfig,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "config")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path) -> ExperimentConfig:
    return config_from_dict(yaml.safe_load(Path(path).read_text()) or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


# -- construction ----------------------------------------------------------------


def make_env(cfg: ExperimentConfig):
    return envs.make_env(cfg.env.name, normalize=cfg.normalize, feature_indices=cfg.env.feature_indices)


def circuit_configs(cfg: ExperimentConfig, spec: envs.EnvSpec) -> tuple[vqc.VqcConfig, vqc.VqcConfig]:
    c = cfg.vqc
    common = dict(
        n_features=spec.obs_dim,
        n_layers=c.n_layers,
        stack_factor=c.stack_factor,
        embedding=c.embedding,
        entangler=c.entangler,
        readout=c.readout,
    )
    return vqc.VqcConfig(n_actions=spec.action_dim, **common), vqc.VqcConfig(n_actions=1, **common)


def make_agent(cfg: ExperimentConfig, spec: envs.EnvSpec, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    if cfg.agent == "quantum":
        actor, critic = circuit_configs(cfg, spec)
        return qpolicy.QuantumActorCritic(actor, critic, rng, theta_std=cfg.train.theta_init_std)
    return qpolicy.MlpActorCritic(spec.obs_dim, spec.action_dim, rng, hidden=cfg.mlp.hidden)


# -- runs --------------------------------------------------------------------------


def output_dir(cfg: ExperimentConfig, root=None) -> Path:
    root = root if root is not None else os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(cfg.output_dir)
    return out if root is None or out.is_absolute() else Path(root) / out


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_records(path: Path, records: list[TrainingRecord], lr_keys) -> None:
    # write then rename, so an interrupted run never leaves a truncated seed file
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(CSV_COLUMNS) + [f"lr_{k}" for k in lr_keys])
        for r in records:
            w.writerow(
                [r.iteration, r.env_steps, _fmt(r.mean_episode_reward), _fmt(r.std_episode_reward)]
                + [_fmt(r.learning_rates[k]) for k in lr_keys]
            )
    os.replace(tmp, path)


def seed_csv(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}.csv"


def run_seed(cfg: ExperimentConfig, seed: int, out: Path) -> Path:
    env = make_env(cfg)
    agent = make_agent(cfg, env.spec, seed)
    tcfg = dataclasses.replace(cfg.train, seed=seed)
    records = train(agent, env, tcfg)
    path = seed_csv(out, seed)
    write_records(path, records, sorted(tcfg.learning_rates))
    save_agent(agent, out / f"checkpoint_seed_{seed}.json")
    return path


def save_agent(agent, path: Path) -> None:
    if agent.kind == "quantum":
        vqc.save_checkpoint(
            path,
            {"actor": (agent.actor_plan, agent.actor), "critic": (agent.critic_plan, agent.critic)},
            extra={"readout": agent.readout.id},
        )
    else:
        path.write_text(json.dumps({k: v.tolist() for k, v in agent.param_groups().items()}, indent=1))


# modules whose source determines the numbers in a seed CSV
TRAINING_MODULES = ("qsim", "vqc", "diff", "qpolicy", "envs", "ppo")


def fingerprint(cfg: ExperimentConfig) -> str:
    """Hash of the training-relevant config plus the source of the training modules.

    Seeds, name and output location are left out so that adding seeds to an
    experiment keeps earlier results reusable.  Reporting and CLI code are not
    hashed; change the CSV writer and stale results must be cleared by hand.
    """
    d = config_to_dict(cfg)
    for key in ("name", "seeds", "output_dir", "workers", "solved_threshold", "analysis"):
        d.pop(key)
    h = hashlib.sha256(json.dumps(d, sort_keys=True).encode())
    for name in TRAINING_MODULES:
        src = Path(__file__).parent / f"{name}.py"
        h.update(src.name.encode())
        h.update(src.read_bytes())
    return h.hexdigest()[:16]


def _run_seed_job(args):
    cfg_dict, seed, out = args
    return str(run_seed(config_from_dict(cfg_dict), seed, Path(out)))


def run_experiment(cfg: ExperimentConfig, root=None, reuse: bool = False) -> dict:
    """Train every seed independently, then aggregate.  Returns output paths.

    With ``reuse``, seed CSVs already present in the output directory are kept
    when they were produced by the same config and package source; otherwise
    the directory's seed files are regenerated.
    """
    out = output_dir(cfg, root)
    out.mkdir(parents=True, exist_ok=True)
    stamp = out / "fingerprint.txt"
    fp = fingerprint(cfg)
    fresh = not (reuse and stamp.exists() and stamp.read_text().strip() == fp)
    if fresh:
        for old in out.glob("seed_*.csv"):
            old.unlink()
    stamp.write_text(fp + "\n")
    (out / "config.yaml").write_text(dump_config(cfg))
    todo = [s for s in cfg.seeds if not seed_csv(out, s).exists()]
    jobs = [(config_to_dict(cfg), s, str(out)) for s in todo]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            list(pool.map(_run_seed_job, jobs))
    else:
        for j in jobs:
            _run_seed_job(j)
    paths = [seed_csv(out, s) for s in cfg.seeds]
    agg = aggregate(out, plot=False, seeds=cfg.seeds)
    return {"seeds": paths, "aggregate": agg, "reused": sorted(set(cfg.seeds) - set(todo))}


def read_seed_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]} if rows else {}


def aggregate(directory, plot: bool = True, solved_threshold: float | None = None, seeds=None) -> Path:
    """Per-iteration mean and (population) std of mean episode reward across seed CSVs.

    All ``seed_*.csv`` files in ``directory`` are used unless ``seeds`` is given.
    """
    directory = Path(directory)
    if seeds is None:
        files = sorted(directory.glob("seed_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    else:
        files = [seed_csv(directory, s) for s in seeds if seed_csv(directory, s).exists()]
    if not files:
        raise ConfigurationError(f"no seed_*.csv files in {directory}")
    runs = [read_seed_csv(f) for f in files]
    n = min(len(r["iteration"]) for r in runs)
    rewards = np.stack([r["mean_episode_reward"][:n] for r in runs])
    steps = runs[0]["env_steps"][:n]
    mean, std = rewards.mean(axis=0), rewards.std(axis=0)
    path = directory / "aggregate.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for i in range(n):
            w.writerow([i, int(steps[i]), _fmt(mean[i]), _fmt(std[i]), len(runs)])
    if plot:
        plot_aggregate(path, directory / "aggregate.svg", solved_threshold)
    return path


def plot_aggregate(csv_path: Path, svg_path: Path, solved_threshold: float | None = None) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = read_seed_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(data["env_steps"], data["mean"], lw=1.5)
    ax.fill_between(data["env_steps"], data["mean"] - data["std"], data["mean"] + data["std"], alpha=0.3)
    if solved_threshold is not None:
        ax.axhline(solved_threshold, color="k", ls=":", lw=1)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episode reward")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)
    return svg_path


# -- reports -----------------------------------------------------------------------


def _env_spec(cfg: ExperimentConfig) -> envs.EnvSpec:
    return make_env(cfg).spec


def report_parameters(cfg: ExperimentConfig) -> dict:
    """Trainable parameter counts per group plus totals."""
    spec = _env_spec(cfg)
    if cfg.agent == "quantum":
        actor_cfg, critic_cfg = circuit_configs(cfg, spec)
        agent = make_agent(cfg, spec, 0)
        report = {
            "actor": {k: int(v.size) for k, v in agent.actor.groups().items()},
            "critic": {k: int(v.size) for k, v in agent.critic.groups().items()},
        }
        for side in ("actor", "critic"):
            report[side]["total"] = sum(report[side].values())
        report["total"] = vqc.count_parameters(actor_cfg, critic_cfg)
        assert report["total"] == report["actor"]["total"] + report["critic"]["total"]
        return report
    agent = make_agent(cfg, spec, 0)
    sizes = agent.layer_sizes()
    report = {
        "actor": {k.split(".", 1)[1]: v for k, v in sizes.items() if k.startswith("actor.")},
        "critic": {k.split(".", 1)[1]: v for k, v in sizes.items() if k.startswith("critic.")},
    }
    for side in ("actor", "critic"):
        report[side]["total"] = sum(report[side].values())
    report["total"] = report["actor"]["total"] + report["critic"]["total"]
    return report


def format_parameter_report(report: dict) -> str:
    lines = []
    for side in ("actor", "critic"):
        parts = ", ".join(f"{k}={v}" for k, v in report[side].items() if k != "total")
        lines.append(f"{side:6s} {report[side]['total']:6d}  ({parts})")
    lines.append(f"total  {report['total']:6d}")
    return "\n".join(lines)


def _slot_label(slot: tuple[str, int]) -> str:
    return f"{slot[0]}[{slot[1]}]"


def analyze_circuit(cfg: ExperimentConfig) -> dict:
    """Dead-parameter scans for actor and critic readouts and a variance table."""
    spec = _env_spec(cfg)
    actor_cfg, critic_cfg = circuit_configs(cfg, spec)
    a = cfg.analysis
    out: dict = {"dead": {}, "variance": []}
    for side, vcfg in (("actor", actor_cfg), ("critic", critic_cfg)):
        plan = vqc.build_plan(vcfg)
        ro = qpolicy.build_readout(vcfg.readout, vcfg.n_qubits, vcfg.n_actions)
        observables = ro.actor_observables if side == "actor" else ro.value
        per_obs = {
            o.label(): sorted(_slot_label(s) for s in diff.dead_parameter_scan(plan, o, a.trials, a.tol, a.seed))
            for o in dict.fromkeys(observables)
        }
        combined = sorted(_slot_label(s) for s in diff.dead_parameter_scan(plan, observables, a.trials, a.tol, a.seed))
        out["dead"][side] = {"per_observable": per_obs, "any_readout": combined}
    for n in sorted(set(a.variance_qubits)):
        vcfg = dataclasses.replace(actor_cfg, n_features=n, stack_factor=1)
        for label, obs in (("Z0", ZProductObservable([0])), ("Zall", ZProductObservable(range(n)))):
            mean, var = diff.variance_scan(vcfg, obs, a.samples, a.seed)
            out["variance"].append({"n_qubits": n, "observable": label, "mean": mean, "variance": var})
    return out


def format_analysis(report: dict) -> str:
    lines = ["dead parameters (|grad| < tol at every random point):"]
    for side, d in report["dead"].items():
        lines.append(f"  {side}: {len(d['any_readout'])} dead for all readout observables")
        if d["any_readout"]:
            lines.append("    " + ", ".join(d["any_readout"]))
        for label, slots in d["per_observable"].items():
            lines.append(f"    {label}: {len(slots)} dead")
    lines.append("expectation variance over random parameters:")
    lines.append(f"  {'qubits':>6s} {'obs':>5s} {'mean':>10s} {'variance':>10s}")
    for r in report["variance"]:
        lines.append(f"  {r['n_qubits']:6d} {r['observable']:>5s} {r['mean']:10.4f} {r['variance']:10.3e}")
    return "\n".join(lines)
