"""Layered variational circuits with data re-uploading.

One layer is three blocks, in order:

* encoding: ``RY(a) RZ(a)`` on every qubit, ``a = embed(s_f, lambda)`` where
  qubit ``q`` reads feature ``q mod n_features`` (stacked encoding when the
  register is wider than the observation);
* variational: one ``RY(theta)`` per qubit;
* entangling: a linear chain of CNOT (or CZ) gates ``(q, q+1)``.

Both encoding rotations of a qubit share a single input-scaling slot.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qsim
from .errors import ConfigurationError, NumericError
from .qsim import Gate, StateVector


class EmbeddingMode(str, enum.Enum):
    RAW_ARCTAN = "RAW_ARCTAN"
    RAW_SIGMOID = "RAW_SIGMOID"
    NORM_IDENTITY = "NORM_IDENTITY"
    NORM_ARCTAN = "NORM_ARCTAN"
    NORM_SIGMOID = "NORM_SIGMOID"

    @property
    def normalized(self) -> bool:
        return self.name.startswith("NORM_")

    @property
    def transform(self) -> str:
        return self.name.split("_", 1)[1]


READOUT_IDS = tuple(f"M{i}" for i in range(1, 10))


@dataclass(frozen=True)
class VqcConfig:
    n_features: int
    n_layers: int
    stack_factor: int = 1
    embedding: EmbeddingMode = EmbeddingMode.NORM_IDENTITY
    entangler: str = "CNOT"
    readout: str = "M1"
    n_actions: int = 1

    def __post_init__(self):
        object.__setattr__(self, "embedding", EmbeddingMode(self.embedding))
        if self.n_features < 1 or self.n_layers < 1 or self.stack_factor < 1:
            raise ConfigurationError(f"sizes must be positive: {self}")
        if self.n_actions < 1:
            raise ConfigurationError("n_actions must be >= 1")
        if self.entangler not in qsim.ENTANGLERS:
            raise ConfigurationError(f"entangler must be one of {qsim.ENTANGLERS}")
        if self.readout not in READOUT_IDS:
            raise ConfigurationError(f"unknown readout {self.readout!r}")
        if not 1 <= self.n_qubits <= qsim.MAX_QUBITS:
            raise ConfigurationError(f"{self.n_qubits} qubits outside [1, {qsim.MAX_QUBITS}]")

    @property
    def n_qubits(self) -> int:
        return self.n_features * self.stack_factor


@dataclass(frozen=True)
class Binding:
    """Where a rotation gate takes its angle from."""

    kind: str  # "encoding" | "variational"
    slot: int
    layer: int
    feature: int | None = None


@dataclass(frozen=True)
class CircuitPlan:
    n_qubits: int
    n_features: int
    embedding: EmbeddingMode
    gates: tuple[Gate, ...]
    bindings: tuple[Binding, ...]
    n_lambda: int
    n_theta: int
    # derived lookup tables, filled in __post_init__
    enc_gates: np.ndarray = field(init=False, repr=False, compare=False)
    enc_slots: np.ndarray = field(init=False, repr=False, compare=False)
    enc_features: np.ndarray = field(init=False, repr=False, compare=False)
    var_gates: np.ndarray = field(init=False, repr=False, compare=False)
    var_slots: np.ndarray = field(init=False, repr=False, compare=False)
    theta_incidence: np.ndarray = field(init=False, repr=False, compare=False)
    lambda_incidence: np.ndarray = field(init=False, repr=False, compare=False)
    encoded: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "embedding", EmbeddingMode(self.embedding))
        enc, enc_slot, enc_feat, var, var_slot = [], [], [], [], []
        for i, g in enumerate(self.gates):
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ConfigurationError(f"gate {i} touches qubit {q} of {self.n_qubits}")
            if g.kind not in qsim.ROTATIONS:
                continue
            if g.angle_source is None:
                raise ConfigurationError(f"rotation gate {i} has no angle binding")
            b = self.bindings[g.angle_source]
            if b.kind == "encoding":
                if not 0 <= b.feature < self.n_features or not 0 <= b.slot < self.n_lambda:
                    raise ConfigurationError(f"bad encoding binding on gate {i}: {b}")
                enc.append(i), enc_slot.append(b.slot), enc_feat.append(b.feature)
            elif b.kind == "variational":
                if not 0 <= b.slot < self.n_theta:
                    raise ConfigurationError(f"bad variational binding on gate {i}: {b}")
                var.append(i), var_slot.append(b.slot)
            else:
                raise ConfigurationError(f"unknown binding kind {b.kind!r}")
        for name, vals in [
            ("enc_gates", enc),
            ("enc_slots", enc_slot),
            ("enc_features", enc_feat),
            ("var_gates", var),
            ("var_slots", var_slot),
        ]:
            object.__setattr__(self, name, np.asarray(vals, dtype=np.int64))
        # gate -> slot summation matrices
        inc = np.zeros((len(var), self.n_theta))
        inc[np.arange(len(var)), var_slot] = 1.0
        object.__setattr__(self, "theta_incidence", inc)
        inc = np.zeros((len(enc), self.n_lambda))
        inc[np.arange(len(enc)), enc_slot] = 1.0
        object.__setattr__(self, "lambda_incidence", inc)
        object.__setattr__(self, "encoded", qsim.encode_gates(self.gates))

    def binding_of(self, gate_index: int) -> Binding | None:
        src = self.gates[gate_index].angle_source
        return None if src is None else self.bindings[src]

    @property
    def rotation_gates(self) -> list[int]:
        return [i for i, g in enumerate(self.gates) if g.kind in qsim.ROTATIONS]

    def describe(self) -> list[str]:
        """One line per gate; handy for structural checks and reports."""
        out = []
        for g in self.gates:
            b = None if g.angle_source is None else self.bindings[g.angle_source]
            if b is None:
                out.append(f"{g.kind}({g.control},{g.target})")
            elif b.kind == "encoding":
                out.append(f"L{b.layer} enc {g.kind}(q{g.target}) <- s[{b.feature}]*lambda[{b.slot}]")
            else:
                out.append(f"L{b.layer} var {g.kind}(q{g.target}) <- theta[{b.slot}]")
        return out


@dataclass
class ParameterStore:
    """Trainable arrays of one circuit: input scaling, rotation angles, output weights."""

    lam: np.ndarray
    theta: np.ndarray
    w: np.ndarray

    GROUPS = ("lambda", "theta", "w")

    def groups(self) -> dict[str, np.ndarray]:
        return {"lambda": self.lam, "theta": self.theta, "w": self.w}

    @property
    def size(self) -> int:
        return self.lam.size + self.theta.size + self.w.size

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.lam.copy(), self.theta.copy(), self.w.copy())

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.groups().items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterStore":
        return cls(*(np.asarray(d[k], dtype=float) for k in cls.GROUPS))


# -- features and embeddings ---------------------------------------------------


def normalize_features(s, bounds) -> np.ndarray:
    """Clip ``s`` to per-feature ``(low, high)`` bounds and map linearly onto [-pi/2, pi/2]."""
    s = np.asarray(s, dtype=float)
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] != s.shape[-1]:
        raise ConfigurationError(f"bounds shape {b.shape} does not match features {s.shape}")
    low, high = b[:, 0], b[:, 1]
    if not np.all(np.isfinite(b)) or np.any(low >= high):
        raise ConfigurationError("bounds must be finite with low < high")
    if not np.all(np.isfinite(s)):
        raise NumericError("non-finite observation")
    s = np.clip(s, low, high)
    return (s - 0.5 * (low + high)) / (high - low) * math.pi


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def embed_angle(x, lam, mode: EmbeddingMode | str):
    """Rotation angle for feature value ``x`` with input scaling ``lam``."""
    t = EmbeddingMode(mode).transform
    z = np.multiply(x, lam)
    if t == "IDENTITY":
        return z
    if t == "ARCTAN":
        return np.arctan(z)
    return _sigmoid(z)


def embed_angle_dlam(x, lam, mode: EmbeddingMode | str):
    """d(embed_angle)/d(lam)."""
    t = EmbeddingMode(mode).transform
    x = np.asarray(x, dtype=float)
    if t == "IDENTITY":
        return x * np.ones_like(np.multiply(x, lam))
    z = np.multiply(x, lam)
    if t == "ARCTAN":
        return x / (1.0 + z * z)
    sg = _sigmoid(z)
    return x * sg * (1.0 - sg)


# -- plan construction and evaluation -------------------------------------------


def build_plan(config: VqcConfig, feature_map: Sequence[int] | None = None) -> CircuitPlan:
    n = config.n_qubits
    fmap = [q % config.n_features for q in range(n)] if feature_map is None else list(feature_map)
    if len(fmap) != n:
        raise ConfigurationError(f"feature_map needs {n} entries, got {len(fmap)}")
    gates: list[Gate] = []
    bindings: list[Binding] = []

    def bind(b: Binding) -> int:
        bindings.append(b)
        return len(bindings) - 1

    for layer in range(config.n_layers):
        for q in range(n):
            src = bind(Binding("encoding", layer * n + q, layer, fmap[q]))
            gates.append(Gate("RY", q, angle_source=src))
            gates.append(Gate("RZ", q, angle_source=src))
        for q in range(n):
            gates.append(Gate("RY", q, angle_source=bind(Binding("variational", layer * n + q, layer))))
        for q in range(n - 1):
            gates.append(Gate(config.entangler, q + 1, control=q))

    return CircuitPlan(
        n_qubits=n,
        n_features=config.n_features,
        embedding=config.embedding,
        gates=tuple(gates),
        bindings=tuple(bindings),
        n_lambda=n * config.n_layers,
        n_theta=n * config.n_layers,
    )


def build_encoding_probe(n_qubits: int, entangler: str = "CZ", embedding=EmbeddingMode.NORM_IDENTITY) -> CircuitPlan:
    """Single layer: one ``RY(embed(s_q, lambda_q))`` per qubit, then the entangling chain.

    No variational block; used to show which inputs can reach a measured wire.
    """
    if entangler not in qsim.ENTANGLERS:
        raise ConfigurationError(f"entangler must be one of {qsim.ENTANGLERS}")
    bindings = tuple(Binding("encoding", q, 0, q) for q in range(n_qubits))
    gates = [Gate("RY", q, angle_source=q) for q in range(n_qubits)]
    gates += [Gate(entangler, q + 1, control=q) for q in range(n_qubits - 1)]
    return CircuitPlan(n_qubits, n_qubits, embedding, tuple(gates), bindings, n_qubits, 0)


def init_parameters(
    plan: CircuitPlan, n_w: int, rng: np.random.Generator, theta_std: float = 0.1
) -> ParameterStore:
    """lambda = 1, w = 1, theta ~ N(0, theta_std)."""
    return ParameterStore(
        lam=np.ones(plan.n_lambda),
        theta=rng.normal(0.0, theta_std, size=plan.n_theta),
        w=np.ones(n_w),
    )


def _check_params(plan: CircuitPlan, params: ParameterStore) -> None:
    if params.lam.shape != (plan.n_lambda,) or params.theta.shape != (plan.n_theta,):
        raise ConfigurationError(
            f"parameter shapes {params.lam.shape}/{params.theta.shape} do not match plan "
            f"({plan.n_lambda}, {plan.n_theta})"
        )


def gate_angles(plan: CircuitPlan, params: ParameterStore, s: np.ndarray) -> np.ndarray:
    """Angle of every gate, shape ``batch + (n_gates,)``; entanglers get 0."""
    _check_params(plan, params)
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != plan.n_features:
        raise ConfigurationError(f"observation has {s.shape[-1]} features, plan expects {plan.n_features}")
    angles = np.zeros(s.shape[:-1] + (len(plan.gates),))
    if plan.enc_gates.size:
        enc = embed_angle(s[..., plan.enc_features], params.lam[plan.enc_slots], plan.embedding)
        if not np.all(np.isfinite(enc)):
            raise NumericError("non-finite encoding angle")
        angles[..., plan.enc_gates] = enc
    angles[..., plan.var_gates] = params.theta[plan.var_slots]
    return angles


def run_gates(plan: CircuitPlan, angles: np.ndarray) -> StateVector:
    """Simulate the plan for an angle matrix from :func:`gate_angles`."""
    lead = angles.shape[:-1]
    amps = qsim.run_circuit(plan.encoded, plan.n_qubits, angles.reshape(-1, len(plan.gates)))
    return StateVector(plan.n_qubits, amps.reshape(lead + (2**plan.n_qubits,)))


def forward(plan: CircuitPlan, params: ParameterStore, s) -> StateVector:
    """Final state ``U(s)|0...0>``; ``s`` may carry leading batch axes."""
    return run_gates(plan, gate_angles(plan, params, s))


# -- parameter accounting ---------------------------------------------------------


def critic_weight_count(readout: str, n_qubits: int) -> int:
    return n_qubits if readout in ("M1", "M4", "M7") else 1


def count_parameters(actor: VqcConfig, critic: VqcConfig) -> int:
    a = 2 * actor.n_qubits * actor.n_layers + 2 * actor.n_actions
    c = 2 * critic.n_qubits * critic.n_layers + critic_weight_count(critic.readout, critic.n_qubits)
    return a + c


# -- serialization ----------------------------------------------------------------


def config_to_dict(cfg: VqcConfig) -> dict:
    return {
        "n_features": cfg.n_features,
        "n_layers": cfg.n_layers,
        "stack_factor": cfg.stack_factor,
        "embedding": cfg.embedding.value,
        "entangler": cfg.entangler,
        "readout": cfg.readout,
        "n_actions": cfg.n_actions,
    }


def plan_to_dict(plan: CircuitPlan) -> dict:
    return {
        "n_qubits": plan.n_qubits,
        "n_features": plan.n_features,
        "embedding": plan.embedding.value,
        "n_lambda": plan.n_lambda,
        "n_theta": plan.n_theta,
        "gates": [
            {"kind": g.kind, "target": g.target, "control": g.control, "angle_source": g.angle_source}
            for g in plan.gates
        ],
        "bindings": [
            {"kind": b.kind, "slot": b.slot, "layer": b.layer, "feature": b.feature} for b in plan.bindings
        ],
    }


def plan_from_dict(d: dict) -> CircuitPlan:
    return CircuitPlan(
        n_qubits=d["n_qubits"],
        n_features=d["n_features"],
        embedding=EmbeddingMode(d["embedding"]),
        gates=tuple(Gate(**g) for g in d["gates"]),
        bindings=tuple(Binding(**b) for b in d["bindings"]),
        n_lambda=d["n_lambda"],
        n_theta=d["n_theta"],
    )


def save_checkpoint(path, circuits: dict[str, tuple[CircuitPlan, ParameterStore]], extra: dict | None = None) -> None:
    """Write plans and parameters as JSON; floats round-trip exactly."""
    doc = {
        name: {"plan": plan_to_dict(plan), "params": params.to_dict()}
        for name, (plan, params) in circuits.items()
    }
    if extra:
        doc["_extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1))


def load_checkpoint(path) -> dict[str, tuple[CircuitPlan, ParameterStore]]:
    doc = json.loads(Path(path).read_text())
    doc.pop("_extra", None)
    return {
        name: (plan_from_dict(v["plan"]), ParameterStore.from_dict(v["params"]))
        for name, v in doc.items()
    }
