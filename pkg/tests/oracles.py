"""Independent reference computations used by the tests.

Nothing here touches the package's gate kernels: states are built from
explicit Kronecker-product matrices, derivatives from central differences.
"""
from __future__ import annotations

import numpy as np

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def kron_all(ops):
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def embed_1q(op, q, n):
    return kron_all([op if k == q else I2 for k in range(n)])


def controlled(op, control, target, n):
    a = [P0 if k == control else I2 for k in range(n)]
    b = [P1 if k == control else (op if k == target else I2) for k in range(n)]
    return kron_all(a) + kron_all(b)


def gate_matrix(kind, n, target, control=None, angle=None):
    if kind == "RY":
        return embed_1q(ry(angle), target, n)
    if kind == "RZ":
        return embed_1q(rz(angle), target, n)
    if kind == "CNOT":
        return controlled(X, control, target, n)
    return controlled(Z, control, target, n)


def z_product_matrix(qubits, n):
    return kron_all([Z if k in qubits else I2 for k in range(n)])


def dense_expectation(psi, qubits, n):
    return float(np.real(np.conj(psi) @ z_product_matrix(qubits, n) @ psi))


def dense_circuit_state(plan, angles):
    """Final state of a plan from explicit 2^n x 2^n unitaries."""
    n = plan.n_qubits
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for g, a in zip(plan.gates, angles):
        psi = gate_matrix(g.kind, n, g.target, g.control, a) @ psi
    return psi


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        out.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def gae_direct(rewards, values, dones, last_value, gamma, lam):
    """Advantages by explicit summation of discounted TD errors up to the episode end."""
    n = len(rewards)
    v_next = np.append(values[1:], last_value)
    live = 1.0 - np.asarray(dones, dtype=float)
    delta = rewards + gamma * v_next * live - values
    adv = np.zeros(n)
    for t in range(n):
        total, coef = 0.0, 1.0
        for k in range(t, n):
            total += coef * delta[k]
            if dones[k]:
                break
            coef *= gamma * lam
        adv[t] = total
    return adv
