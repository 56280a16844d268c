"""Exact dense statevector simulator, the brute-force reference engine.

Qubit 0 is the most significant bit of basis indices throughout, so the
amplitude vector reshaped to [2]*V puts qubit q on axis q.
"""

from __future__ import annotations

import numpy as np

MAX_QUBITS = 14  # 2**14 complex doubles, generous headroom for tests

__all__ = ["MAX_QUBITS", "sv_zero", "sv_apply", "sv_run", "sv_probs", "fidelity"]


def sv_zero(qubits: int) -> np.ndarray:
    """All-zeros computational basis state on `qubits` qubits."""
    if not 1 <= qubits <= MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {qubits}")
    state = np.zeros(2**qubits, dtype=complex)
    state[0] = 1.0
    return state


def _num_qubits(state: np.ndarray) -> int:
    n = int(round(np.log2(state.size)))
    if 2**n != state.size:
        raise ValueError(f"state length {state.size} is not a power of two")
    return n


def sv_apply(state: np.ndarray, qubits: list[int] | tuple[int, ...], gate: np.ndarray) -> np.ndarray:
    """Apply a 1- or 2-qubit gate matrix to the listed qubits."""
    n = _num_qubits(state)
    qubits = list(qubits)
    if len(set(qubits)) != len(qubits):
        raise ValueError("target qubits must be distinct")
    for q in qubits:
        if not 0 <= q < n:
            raise ValueError(f"qubit {q} out of range for {n}-qubit state")
    arity = len(qubits)
    if gate.shape != (2**arity, 2**arity):
        raise ValueError(f"gate shape {gate.shape} does not match {arity} target qubits")

    psi = state.reshape([2] * n)
    g = gate.reshape([2] * (2 * arity))
    # tensordot contracts gate input legs with the target axes; the output
    # legs land at the end, so move them back into place.
    psi = np.tensordot(g, psi, axes=(list(range(arity, 2 * arity)), qubits))
    psi = np.moveaxis(psi, list(range(arity)), qubits)
    return psi.reshape(-1)


def sv_run(state: np.ndarray, circuit) -> np.ndarray:
    """Run a layered ring circuit (same layout as the tensor-ring engine)."""
    from .tensor_ring import cnot, ry, rz

    n = _num_qubits(state)
    if circuit.qubit_count != n:
        raise ValueError(
            f"circuit is for {circuit.qubit_count} qubits, state has {n}"
        )
    cx = cnot()
    for layer in range(circuit.layers):
        for q in range(n):
            state = sv_apply(state, [q], ry(circuit.angles[layer, q, 0]))
            state = sv_apply(state, [q], rz(circuit.angles[layer, q, 1]))
        for q in range(n):
            state = sv_apply(state, [q, (q + 1) % n], cx)
    return state


def sv_probs(state: np.ndarray, outcomes: list[str]):
    """Exact |<bits|psi>|^2 for each requested basis bit-string."""
    from .tensor_ring import MeasurementResult

    n = _num_qubits(state)
    probs = {}
    for bits in outcomes:
        if len(bits) != n:
            raise ValueError(f"outcome '{bits}' has length {len(bits)}, expected {n}")
        idx = int(bits, 2)
        probs[bits] = float(np.abs(state[idx]) ** 2)
    return MeasurementResult(probs)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Squared overlap |<a|b>|^2 of two same-size state vectors."""
    if a.shape != b.shape:
        raise ValueError(f"state length mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(np.vdot(a, b)) ** 2)
