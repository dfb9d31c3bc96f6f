"""Analytic gradients of Z-product expectations and circuit scans.

Gradients use a single reverse sweep: the final state is un-computed gate by
gate alongside the back-propagated observable, and every rotation contributes
``Im <bra| P |ket>``.  Since all observables here are diagonal, any linear
combination of them is again diagonal, so a full vector-Jacobian product
costs one sweep regardless of how many observables feed the loss.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import qsim, vqc
from .errors import ConfigurationError, NumericError
from .qsim import ZProductObservable
from .vqc import CircuitPlan, ParameterStore, VqcConfig


@dataclass
class GradientRecord:
    observable: ZProductObservable
    value: np.ndarray | float
    d_theta: np.ndarray
    d_lambda: np.ndarray
    d_gate: np.ndarray  # per gate in plan order; zero for entanglers


def adjoint_sweep(plan: CircuitPlan, angles: np.ndarray, final: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Per-gate partials ``d<D>/d angle_g`` for a diagonal observable ``D``.

    ``angles`` and ``final`` share batch axes; ``diag`` broadcasts against
    ``final`` so each batch element may carry its own observable.  Returns an
    array of shape ``batch + (n_gates,)``; entangler columns are zero.
    """
    lead = final.shape[:-1]
    dim = final.shape[-1]
    out = qsim.adjoint_circuit(
        plan.encoded,
        plan.n_qubits,
        angles.reshape(-1, len(plan.gates)),
        final.reshape(-1, dim),
        np.broadcast_to(diag, final.shape).reshape(-1, dim),
    )
    return out.reshape(lead + (len(plan.gates),))


def slot_gradients(plan: CircuitPlan, params: ParameterStore, s: np.ndarray, d_gate: np.ndarray):
    """Fold per-gate partials into (d_theta, d_lambda), keeping batch axes."""
    lead = d_gate.shape[:-1]
    d_theta = d_gate[..., plan.var_gates] @ plan.theta_incidence
    d_lambda = np.zeros(lead + (plan.n_lambda,))
    if plan.enc_gates.size:
        chain = vqc.embed_angle_dlam(s[..., plan.enc_features], params.lam[plan.enc_slots], plan.embedding)
        d_lambda = (d_gate[..., plan.enc_gates] * chain) @ plan.lambda_incidence
    for name, arr in (("theta", d_theta), ("lambda", d_lambda)):
        bad = ~np.isfinite(arr)
        if np.any(bad):
            slots = sorted(set(np.nonzero(bad)[-1].tolist()))
            raise NumericError(f"non-finite gradient for {name} slots {slots}")
    return d_theta, d_lambda


def gradients(
    plan: CircuitPlan, params: ParameterStore, s, obs_list: Sequence[ZProductObservable]
) -> list[GradientRecord]:
    """Value and exact partials of every observable in ``obs_list``.

    ``s`` may be a single observation or a batch; arrays then carry the
    batch axes in front.
    """
    s = np.asarray(s, dtype=float)
    angles = vqc.gate_angles(plan, params, s)
    final = vqc.run_gates(plan, angles).amplitudes
    records = []
    for obs in obs_list:
        diag = obs.signs(plan.n_qubits)
        value = qsim.diag_expectation(final, diag)
        d_gate = adjoint_sweep(plan, angles, final, diag)
        d_theta, d_lambda = slot_gradients(plan, params, s, d_gate)
        records.append(GradientRecord(obs, value if np.ndim(value) else float(value), d_theta, d_lambda, d_gate))
    return records


def vjp(plan: CircuitPlan, params: ParameterStore, s: np.ndarray, final: np.ndarray, diag: np.ndarray):
    """Sum over the batch of d(sum_b <D_b>)/d(theta, lambda).

    ``final`` are the cached forward states for ``s``; ``diag`` has
    shape ``(batch, 2**n)`` and already folds in the upstream loss partials.
    """
    angles = vqc.gate_angles(plan, params, s)
    d_gate = adjoint_sweep(plan, angles, final, diag)
    d_theta, d_lambda = slot_gradients(plan, params, s, d_gate)
    return d_theta.reshape(-1, plan.n_theta).sum(0), d_lambda.reshape(-1, plan.n_lambda).sum(0)


def parameter_shift(
    plan: CircuitPlan, params: ParameterStore, s, obs: ZProductObservable, slot: int
) -> float | np.ndarray:
    """Two-point shift rule for the rotation angle of gate ``slot``."""
    if not 0 <= slot < len(plan.gates) or plan.gates[slot].kind not in qsim.ROTATIONS:
        raise ConfigurationError(f"gate {slot} is not a rotation")
    s = np.asarray(s, dtype=float)
    angles = vqc.gate_angles(plan, params, s)
    diag = obs.signs(plan.n_qubits)
    vals = []
    for shift in (np.pi / 2, -np.pi / 2):
        shifted = angles.copy()
        shifted[..., slot] += shift
        final = vqc.run_gates(plan, shifted).amplitudes
        vals.append(qsim.diag_expectation(final, diag))
    out = 0.5 * (vals[0] - vals[1])
    return float(out) if np.ndim(out) == 0 else out


def _random_point(plan: CircuitPlan, rng: np.random.Generator):
    params = ParameterStore(
        lam=rng.uniform(-np.pi, np.pi, plan.n_lambda),
        theta=rng.uniform(-np.pi, np.pi, plan.n_theta),
        w=np.ones(0),
    )
    s = rng.uniform(-np.pi / 2, np.pi / 2, plan.n_features)
    return params, s


def dead_parameter_scan(
    plan: CircuitPlan,
    obs: ZProductObservable | Iterable[ZProductObservable],
    trials: int = 20,
    tol: float = 1e-10,
    seed: int = 0,
) -> set[tuple[str, int]]:
    """Slots whose partial stays below ``tol`` for every observable at every random point.

    Slots are reported as ``("lambda", i)`` or ``("theta", i)``.
    """
    if trials < 10:
        raise ConfigurationError("dead_parameter_scan needs at least 10 trials")
    obs_list = [obs] if isinstance(obs, ZProductObservable) else list(obs)
    rng = np.random.default_rng(seed)
    max_theta = np.zeros(plan.n_theta)
    max_lambda = np.zeros(plan.n_lambda)
    for _ in range(trials):
        params, s = _random_point(plan, rng)
        for rec in gradients(plan, params, s, obs_list):
            max_theta = np.maximum(max_theta, np.abs(rec.d_theta))
            max_lambda = np.maximum(max_lambda, np.abs(rec.d_lambda))
    dead = {("theta", int(i)) for i in np.nonzero(max_theta < tol)[0]}
    dead |= {("lambda", int(i)) for i in np.nonzero(max_lambda < tol)[0]}
    return dead


def variance_scan(config: VqcConfig, obs: ZProductObservable, samples: int = 1000, seed: int = 0):
    """Mean and variance of ``<obs>`` over random circuits of shape ``config``.

    theta ~ U[-pi, pi], features ~ U[-pi/2, pi/2], lambda = 1.  All samples
    are simulated as one batch.
    """
    if samples < 100:
        raise ConfigurationError("variance_scan needs at least 100 samples")
    plan = vqc.build_plan(config)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-np.pi, np.pi, (samples, plan.n_theta))
    s = rng.uniform(-np.pi / 2, np.pi / 2, (samples, plan.n_features))
    params = ParameterStore(np.ones(plan.n_lambda), np.zeros(plan.n_theta), np.ones(0))
    angles = vqc.gate_angles(plan, params, s)
    angles[:, plan.var_gates] = theta[:, plan.var_slots]
    final = vqc.run_gates(plan, angles).amplitudes
    values = qsim.diag_expectation(final, obs.signs(plan.n_qubits))
    return float(np.mean(values)), float(np.var(values, ddof=1))
