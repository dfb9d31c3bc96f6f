"""Dense statevector simulation for small registers.

Amplitude ordering: basis index ``k`` stores qubit 0 in the most significant
bit, i.e. ``k = sum_q bit_q * 2**(n-1-q)``.

All kernels operate in place on arrays of shape ``(..., 2**n)``.  Leading
axes are a batch of independent registers; rotation angles may be scalars or
arrays broadcastable to the batch shape, so a whole minibatch of encoded
observations runs through one kernel call.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from functools import lru_cache
from typing import Sequence

import numpy as np
from numba import njit

from .errors import ConfigurationError, NumericError

MAX_QUBITS = 14

ROTATIONS = ("RY", "RZ")
ENTANGLERS = ("CNOT", "CZ")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape[-1] != 2**self.n_qubits:
            raise ConfigurationError(
                f"expected {2**self.n_qubits} amplitudes, got {self.amplitudes.shape[-1]}"
            )

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.amplitudes.shape[:-1]

    def norm_sq(self) -> np.ndarray | float:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=-1)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class ZProductObservable:
    """Tensor product of Pauli-Z on ``qubits``; identity elsewhere."""

    qubits: tuple[int, ...]

    def __init__(self, qubits: Sequence[int]):
        qs = tuple(int(q) for q in qubits)
        if not qs:
            raise ConfigurationError("observable needs at least one qubit")
        if len(set(qs)) != len(qs):
            raise ConfigurationError(f"repeated qubit in Z-product {qs}")
        if min(qs) < 0:
            raise ConfigurationError(f"negative qubit index in {qs}")
        object.__setattr__(self, "qubits", qs)

    def signs(self, n_qubits: int) -> np.ndarray:
        if max(self.qubits) >= n_qubits:
            raise ConfigurationError(
                f"observable {self.qubits} does not fit {n_qubits} qubits"
            )
        return _parity_signs(n_qubits, self.qubits)

    def label(self) -> str:
        return "".join(f"Z{q}" for q in self.qubits)


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: int | None = None
    # index into the owning plan's binding table; rotations only
    angle_source: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind in ENTANGLERS:
            if self.control is None or self.control == self.target:
                raise ConfigurationError(f"{self.kind} needs distinct control and target")
        elif self.kind not in ROTATIONS:
            raise ConfigurationError(f"unsupported gate kind {self.kind!r}")

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)


@lru_cache(maxsize=None)
def _parity_signs(n: int, qubits: tuple[int, ...]) -> np.ndarray:
    k = np.arange(2**n)
    parity = np.zeros(2**n, dtype=np.int64)
    for q in qubits:
        parity ^= (k >> (n - 1 - q)) & 1
    signs = 1.0 - 2.0 * parity
    signs.setflags(write=False)
    return signs


def _check_qubit(n: int, q: int) -> None:
    if not 0 <= q < n:
        raise ConfigurationError(f"qubit {q} out of range for {n} qubits")


def _split(amps: np.ndarray, n: int, q: int) -> np.ndarray:
    # view with axis -2 being qubit q
    return amps.reshape(amps.shape[:-1] + (2**q, 2, 2 ** (n - q - 1)))


def _bcast(x, ndim_lead: int):
    if np.ndim(x) == 0:
        return x
    x = np.asarray(x)
    return x.reshape(x.shape + (1,) * (ndim_lead + 2 - x.ndim))


# -- raw array kernels ---------------------------------------------------------


def ry_(amps: np.ndarray, n: int, q: int, angle) -> None:
    v = _split(amps, n, q)
    c = _bcast(np.cos(np.multiply(angle, 0.5)), amps.ndim - 1)
    s = _bcast(np.sin(np.multiply(angle, 0.5)), amps.ndim - 1)
    a0 = v[..., 0, :].copy()
    a1 = v[..., 1, :]
    v[..., 0, :] = c * a0 - s * a1
    v[..., 1, :] = s * a0 + c * a1


def rz_(amps: np.ndarray, n: int, q: int, angle) -> None:
    v = _split(amps, n, q)
    ph = _bcast(np.exp(np.multiply(angle, -0.5j)), amps.ndim - 1)
    v[..., 0, :] *= ph
    v[..., 1, :] *= np.conj(ph)


def _pair_view(amps: np.ndarray, n: int, control: int, target: int):
    lo, hi = sorted((control, target))
    shape = amps.shape[:-1] + (2**lo, 2, 2 ** (hi - lo - 1), 2, 2 ** (n - hi - 1))
    v = amps.reshape(shape)

    def at(cbit: int, tbit: int):
        idx = [Ellipsis, slice(None), 0, slice(None), 0, slice(None)]
        idx[2 if control == lo else 4] = cbit
        idx[2 if target == lo else 4] = tbit
        return tuple(idx)

    return v, at


def cnot_(amps: np.ndarray, n: int, control: int, target: int) -> None:
    v, at = _pair_view(amps, n, control, target)
    tmp = v[at(1, 0)].copy()
    v[at(1, 0)] = v[at(1, 1)]
    v[at(1, 1)] = tmp


def cz_(amps: np.ndarray, n: int, control: int, target: int) -> None:
    v, at = _pair_view(amps, n, control, target)
    v[at(1, 1)] *= -1.0


def apply_gate_(amps: np.ndarray, n: int, gate: Gate, angle=None, inverse: bool = False) -> None:
    """Apply ``gate`` (or its inverse) to raw amplitudes in place."""
    if gate.kind == "RY":
        ry_(amps, n, gate.target, -angle if inverse else angle)
    elif gate.kind == "RZ":
        rz_(amps, n, gate.target, -angle if inverse else angle)
    elif gate.kind == "CNOT":
        cnot_(amps, n, gate.control, gate.target)
    else:
        cz_(amps, n, gate.control, gate.target)


def generator_overlap(bra: np.ndarray, ket: np.ndarray, n: int, gate: Gate) -> np.ndarray:
    """Return ``Im <bra| P |ket>`` for the Pauli generator P of a rotation gate.

    With ``ket`` the state right after ``R(t) = exp(-i t P / 2)`` and ``bra``
    the back-propagated observable, this is exactly ``d<O>/dt``.
    """
    b = _split(bra, n, gate.target)
    k = _split(ket, n, gate.target)
    b0, b1 = b[..., 0, :], b[..., 1, :]
    k0, k1 = k[..., 0, :], k[..., 1, :]
    if gate.kind == "RY":
        z = np.conj(b1) * k0 - np.conj(b0) * k1
        return np.sum(z.real, axis=(-2, -1))
    z = np.conj(b0) * k0 - np.conj(b1) * k1
    return np.sum(z.imag, axis=(-2, -1))


def diag_expectation(amps: np.ndarray, diag: np.ndarray) -> np.ndarray:
    return np.sum(diag * (amps.real**2 + amps.imag**2), axis=-1)


# -- StateVector level API -----------------------------------------------------


def init_state(n_qubits: int, batch: int | tuple[int, ...] | None = None) -> StateVector:
    """Return ``|0...0>`` (optionally replicated over a batch shape)."""
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    lead = () if batch is None else ((batch,) if np.ndim(batch) == 0 else tuple(batch))
    amps = np.zeros(lead + (2**n_qubits,), dtype=np.complex128)
    amps[..., 0] = 1.0
    return StateVector(int(n_qubits), amps)


def apply_rotation(state: StateVector, kind: str, qubit: int, angle) -> StateVector:
    if kind not in ROTATIONS:
        raise ConfigurationError(f"{kind!r} is not a rotation")
    _check_qubit(state.n_qubits, qubit)
    if not np.all(np.isfinite(angle)):
        raise NumericError(f"non-finite {kind} angle on qubit {qubit}")
    apply_gate_(state.amplitudes, state.n_qubits, Gate(kind, qubit), angle)
    return state


def apply_two_qubit(state: StateVector, kind: str, control: int, target: int) -> StateVector:
    if kind not in ENTANGLERS:
        raise ConfigurationError(f"{kind!r} is not a two-qubit gate")
    _check_qubit(state.n_qubits, control)
    _check_qubit(state.n_qubits, target)
    apply_gate_(state.amplitudes, state.n_qubits, Gate(kind, target, control))
    return state


def expectation(state: StateVector, obs: ZProductObservable):
    """<psi| Z...Z |psi>; a float for a single register, an array for a batch."""
    val = diag_expectation(state.amplitudes, obs.signs(state.n_qubits))
    return float(val) if np.ndim(val) == 0 else val


# -- compiled circuit engine ----------------------------------------------------
#
# Whole-circuit sweeps over a batch, used by the plan-level forward and adjoint
# passes.  Gates are encoded as (code, target, control) with codes below.

GATE_CODES = {"RY": 0, "RZ": 1, "CNOT": 2, "CZ": 3}


@njit(cache=True)
def _gate_1d(amps, n, code, t, c, angle):
    dim = amps.shape[0]
    tm = 1 << (n - 1 - t)
    if code == 0:
        ch = math.cos(0.5 * angle)
        sh = math.sin(0.5 * angle)
        for k in range(dim):
            if k & tm == 0:
                a0 = amps[k]
                a1 = amps[k | tm]
                amps[k] = ch * a0 - sh * a1
                amps[k | tm] = sh * a0 + ch * a1
    elif code == 1:
        ph = complex(math.cos(0.5 * angle), -math.sin(0.5 * angle))
        phc = ph.conjugate()
        for k in range(dim):
            if k & tm == 0:
                amps[k] *= ph
            else:
                amps[k] *= phc
    elif code == 2:
        cm = 1 << (n - 1 - c)
        for k in range(dim):
            if (k & cm) != 0 and (k & tm) == 0:
                tmp = amps[k]
                amps[k] = amps[k | tm]
                amps[k | tm] = tmp
    else:
        cm = 1 << (n - 1 - c)
        for k in range(dim):
            if (k & cm) != 0 and (k & tm) != 0:
                amps[k] = -amps[k]


@njit(cache=True)
def _overlap_1d(bra, ket, n, code, t):
    tm = 1 << (n - 1 - t)
    acc = 0.0
    for k in range(ket.shape[0]):
        if k & tm == 0:
            k1 = k | tm
            if code == 0:
                acc += (bra[k1].conjugate() * ket[k] - bra[k].conjugate() * ket[k1]).real
            else:
                acc += (bra[k].conjugate() * ket[k] - bra[k1].conjugate() * ket[k1]).imag
    return acc


@njit(cache=True)
def _run_circuit(codes, targets, controls, angles, n):
    batch = angles.shape[0]
    out = np.zeros((batch, 1 << n), dtype=np.complex128)
    for b in range(batch):
        amps = out[b]
        amps[0] = 1.0
        for g in range(codes.shape[0]):
            _gate_1d(amps, n, codes[g], targets[g], controls[g], angles[b, g])
    return out


@njit(cache=True)
def _adjoint_circuit(codes, targets, controls, angles, n, final, diag):
    batch = angles.shape[0]
    n_gates = codes.shape[0]
    grads = np.zeros((batch, n_gates))
    for b in range(batch):
        ket = final[b].copy()
        bra = ket * diag[b]
        for g in range(n_gates - 1, -1, -1):
            code = codes[g]
            if code < 2:
                grads[b, g] = _overlap_1d(bra, ket, n, code, targets[g])
            if g > 0:
                _gate_1d(ket, n, code, targets[g], controls[g], -angles[b, g])
                _gate_1d(bra, n, code, targets[g], controls[g], -angles[b, g])
    return grads


def encode_gates(gates: Sequence[Gate]):
    codes = np.array([GATE_CODES[g.kind] for g in gates], dtype=np.int64)
    targets = np.array([g.target for g in gates], dtype=np.int64)
    controls = np.array([-1 if g.control is None else g.control for g in gates], dtype=np.int64)
    return codes, targets, controls


def run_circuit(encoded, n: int, angles: np.ndarray) -> np.ndarray:
    """Final amplitudes for angle matrix ``angles`` of shape ``(batch, n_gates)``."""
    return _run_circuit(*encoded, np.ascontiguousarray(angles, dtype=float), n)


def adjoint_circuit(encoded, n: int, angles: np.ndarray, final: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Per-gate partials of ``<diag>`` for each batch row; ``diag`` is ``(batch, 2**n)``."""
    angles = np.ascontiguousarray(angles, dtype=float)
    diag = np.ascontiguousarray(np.broadcast_to(diag, final.shape), dtype=float)
    return _adjoint_circuit(*encoded, angles, n, np.ascontiguousarray(final), diag)
