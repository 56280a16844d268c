"""Plain-text circuit description shared by the ring and statevector engines.

Format: a header line `QUBITS V RANK B`, then one gate per line:
`RY q theta`, `RZ q theta`, or `CNOT q` (acting on qubits q and q+1 mod V).
Blank lines and lines starting with `#` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import statevector as sv
from .tensor_ring import TRState, apply_single_qubit, apply_two_qubit, cnot, ry, rz, tr_zero_state

__all__ = ["CircuitFile", "parse_circuit_text", "run_on_ring", "run_on_statevector"]


@dataclass(frozen=True)
class CircuitFile:
    qubits: int
    rank: int
    gates: tuple[tuple, ...]  # ("RY"|"RZ", qubit, angle) or ("CNOT", qubit)


def parse_circuit_text(text: str, source: str = "<circuit>") -> CircuitFile:
    """Parse the text format; errors name the offending line."""
    header = None
    gates = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if header is None:
            if len(tokens) != 4 or tokens[0] != "QUBITS" or tokens[2] != "RANK":
                raise ValueError(
                    f"{source}: line {lineno}: expected header 'QUBITS V RANK B'"
                )
            try:
                header = (int(tokens[1]), int(tokens[3]))
            except ValueError as exc:
                raise ValueError(f"{source}: line {lineno}: {exc}") from exc
            if header[0] < 2 or header[1] < 1:
                raise ValueError(f"{source}: line {lineno}: invalid header values")
            continue
        op = tokens[0].upper()
        try:
            if op in ("RY", "RZ"):
                if len(tokens) != 3:
                    raise ValueError(f"{op} takes a qubit and an angle")
                gates.append((op, int(tokens[1]), float(tokens[2])))
            elif op == "CNOT":
                if len(tokens) != 2:
                    raise ValueError("CNOT takes a single control qubit")
                gates.append((op, int(tokens[1])))
            else:
                raise ValueError(f"unknown gate token '{tokens[0]}'")
        except ValueError as exc:
            raise ValueError(f"{source}: line {lineno}: {exc}") from exc
    if header is None:
        raise ValueError(f"{source}: missing 'QUBITS V RANK B' header")
    for gate in gates:
        if not 0 <= gate[1] < header[0]:
            raise ValueError(f"{source}: qubit {gate[1]} out of range for {header[0]} qubits")
    return CircuitFile(header[0], header[1], tuple(gates))


def run_on_ring(circ: CircuitFile) -> TRState:
    """Execute on the tensor-ring engine at the file's rank."""
    state = tr_zero_state(circ.qubits, circ.rank)
    for gate in circ.gates:
        if gate[0] == "RY":
            state = apply_single_qubit(state, gate[1], ry(gate[2]))
        elif gate[0] == "RZ":
            state = apply_single_qubit(state, gate[1], rz(gate[2]))
        else:
            state = apply_two_qubit(state, gate[1], cnot())
    return state


def run_on_statevector(circ: CircuitFile) -> np.ndarray:
    """Execute exactly on the dense statevector engine."""
    state = sv.sv_zero(circ.qubits)
    for gate in circ.gates:
        if gate[0] == "RY":
            state = sv.sv_apply(state, [gate[1]], ry(gate[2]))
        elif gate[0] == "RZ":
            state = sv.sv_apply(state, [gate[1]], rz(gate[2]))
        else:
            state = sv.sv_apply(state, [gate[1], (gate[1] + 1) % circ.qubits], cnot())
    return state
