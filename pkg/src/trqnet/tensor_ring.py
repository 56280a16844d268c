"""Tensor-ring simulator for layered variational circuits.

A V-qubit state is a closed ring of complex tensors with axes
(left bond, physical, right bond); both bond extents equal the ring rank B.
Single-qubit rotations act exactly; two-qubit gates merge neighboring sites,
apply the gate, and split back with an SVD truncated to B values, after a
QR gauge sweep that concentrates weight on the gate pair. Truncation is not
unitary, so the state is renormalized after every two-qubit gate.

All internal routines accept arbitrary leading batch dimensions on the site
arrays; the public functions wrap the unbatched case. Qubit 0 is the most
significant bit of every basis bit-string.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import cos, sin

import numpy as np

__all__ = [
    "TRState",
    "QuanTRCircuit",
    "MeasurementResult",
    "ry",
    "rz",
    "cnot",
    "tr_zero_state",
    "apply_single_qubit",
    "apply_two_qubit",
    "run_circuit",
    "measure_probs",
    "tr_to_statevector",
]

MAX_STATEVECTOR_QUBITS = 14


# ---------- gate matrices ----------

def ry(theta: float) -> np.ndarray:
    """Rotation about Y: real 2x2 with half-angle entries."""
    if not np.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    c, s = cos(theta / 2.0), sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    """Rotation about Z: diagonal phases exp(-i theta/2), exp(+i theta/2)."""
    if not np.isfinite(theta):
        raise ValueError("rotation angle must be finite")
    return np.array(
        [[np.exp(-0.5j * theta), 0.0], [0.0, np.exp(0.5j * theta)]], dtype=complex
    )


def cnot() -> np.ndarray:
    """Controlled-NOT permuting |10> and |11> (control is the first qubit)."""
    m = np.eye(4, dtype=complex)
    m[[2, 3]] = m[[3, 2]]
    return m


def _check_unitary(gate: np.ndarray, arity: int) -> None:
    dim = 2**arity
    if gate.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} gate matrix, got shape {gate.shape}")
    dev = np.max(np.abs(gate.conj().T @ gate - np.eye(dim)))
    if dev > 1e-12:
        raise ValueError(f"gate is not unitary (max |U+U - I| = {dev:.3e})")


# ---------- batched ring primitives ----------
# Site arrays carry exactly one leading batch axis: shape (n, B, 2, B).
# Hot paths use matmul + reshape rather than einsum broadcasting.

def _zero_sites(qubits: int, rank: int, batch: int = 1) -> list[np.ndarray]:
    sites = []
    for _ in range(qubits):
        t = np.zeros((batch, rank, 2, rank), dtype=complex)
        t[:, 0, 0, 0] = 1.0
        sites.append(t)
    return sites


def _apply_1q(sites: list[np.ndarray], q: int, gate: np.ndarray) -> None:
    """In-place rotation of site q; gate is (2,2) or batched (n,2,2)."""
    t = sites[q]
    n, l, _, r = t.shape
    tt = t.transpose(0, 2, 1, 3).reshape(n, 2, l * r)
    sites[q] = (gate @ tt).reshape(n, 2, l, r).transpose(0, 2, 1, 3)


def _ring_norm(sites: list[np.ndarray]) -> np.ndarray:
    """Global 2-norm of each ring state via transfer-matrix contraction."""
    acc = None
    for t in sites:
        n, b1, _, b2 = t.shape
        a = t.transpose(0, 1, 3, 2).reshape(n, b1 * b2, 2)
        e = a @ np.conj(a.transpose(0, 2, 1))  # rows (l,r), cols (l',r')
        e = e.reshape(n, b1, b2, b1, b2).transpose(0, 1, 3, 2, 4)
        e = e.reshape(n, b1 * b1, b2 * b2)
        acc = e if acc is None else acc @ e
    tr = np.einsum("nii->n", acc)
    return np.sqrt(np.abs(tr))


def _gauge_toward(sites: list[np.ndarray], q: int) -> list[np.ndarray]:
    """QR-sweep the ring, cut opposite the (q, q+1) bond, toward the gate pair.

    Sites strictly left of q become left isometries and sites strictly right
    of q+1 right isometries; the absorbed triangular factors land on the gate
    pair. Exact gauge change, makes the local truncation near-optimal.
    """
    v = len(sites)
    if v <= 2:
        return list(sites)
    nl = (v - 2) // 2
    chain = [(q - nl + i) % v for i in range(v)]
    sites = list(sites)
    for i in range(nl):
        t = sites[chain[i]]
        n, l, _, r = t.shape
        qf, rf = np.linalg.qr(t.reshape(n, l * 2, r))
        sites[chain[i]] = qf.reshape(n, l, 2, qf.shape[-1])
        nxt = sites[chain[i + 1]]
        _, ln, _, rn = nxt.shape
        sites[chain[i + 1]] = (rf @ nxt.reshape(n, ln, 2 * rn)).reshape(n, -1, 2, rn)
    for i in range(v - 1, nl + 1, -1):
        t = sites[chain[i]]
        n, l, _, r = t.shape
        qf, rf = np.linalg.qr(np.conj(t.reshape(n, l, 2 * r).transpose(0, 2, 1)))
        lfac = np.conj(rf.transpose(0, 2, 1))  # (n, l, k)
        qrow = np.conj(qf.transpose(0, 2, 1))  # (n, k, 2r)
        sites[chain[i]] = qrow.reshape(n, -1, 2, r)
        prv = sites[chain[i - 1]]
        _, lp, _, _ = prv.shape
        sites[chain[i - 1]] = (prv.reshape(n, lp * 2, -1) @ lfac).reshape(n, lp, 2, -1)
    return sites


def _apply_2q(
    sites: list[np.ndarray], q: int, gate: np.ndarray, rank: int, renorm: bool = True
) -> tuple[list[np.ndarray], np.ndarray]:
    """Two-qubit gate on ring neighbors (q, q+1 mod V) with rank-B truncation.

    Returns the new sites and the per-batch root-sum-square of discarded
    singular values. Singular values are absorbed into the left site. With
    renorm=False the state keeps its shrunken norm; scalar rescaling commutes
    with every later gate and truncation, so callers may divide once at
    measurement time instead.
    """
    v = len(sites)
    qn = (q + 1) % v
    sites = _gauge_toward(sites, q)
    a, b = sites[q], sites[qn]
    n, bl = a.shape[0], a.shape[1]
    br = b.shape[3]

    m = a.reshape(n, bl * 2, -1) @ b.reshape(n, -1, 2 * br)  # (n, (a y), (z c))
    m = m.reshape(n, bl, 2, 2, br).transpose(0, 1, 4, 2, 3).reshape(n, bl * br, 4)
    m = m @ gate.reshape(4, 4).T  # rows (a, c), cols (Y, Z)
    mat = m.reshape(n, bl, br, 2, 2).transpose(0, 3, 1, 4, 2).reshape(n, 2 * bl, 2 * br)

    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    discarded = np.sqrt(np.sum(s[:, rank:] ** 2, axis=-1))
    u = u[:, :, :rank] * s[:, None, :rank]
    vt = vt[:, :rank, :]

    sites[q] = u.reshape(n, 2, bl, rank).transpose(0, 2, 1, 3)
    sites[qn] = vt.reshape(n, rank, 2, br)

    if renorm:
        norm = _ring_norm(sites)
        if np.any(norm < 1e-300):
            raise ValueError("state collapsed to zero norm under truncation")
        sites[q] = sites[q] / norm[:, None, None, None]
    return sites, discarded


def _run_ring(
    sites: list[np.ndarray], angles: np.ndarray, rank: int
) -> list[np.ndarray]:
    """Layered circuit: per qubit RY then RZ, then the ring CNOT cascade.

    `angles` has shape (n, layers, V, 2) matching the site batch; [..., 0]
    are RY and [..., 1] RZ angles. Normalization is deferred: amplitudes of
    the result must be divided by the final ring norm.
    """
    v = len(sites)
    n = sites[0].shape[0]
    layers = angles.shape[-3]
    cx = cnot()
    for layer in range(layers):
        for q in range(v):
            th_y = angles[:, layer, q, 0]
            c, s = np.cos(th_y / 2.0), np.sin(th_y / 2.0)
            gy = np.zeros((n, 2, 2), dtype=complex)
            gy[:, 0, 0] = c
            gy[:, 0, 1] = -s
            gy[:, 1, 0] = s
            gy[:, 1, 1] = c
            _apply_1q(sites, q, gy)
            ph = np.exp(-0.5j * angles[:, layer, q, 1])
            gz = np.zeros((n, 2, 2), dtype=complex)
            gz[:, 0, 0] = ph
            gz[:, 1, 1] = np.conj(ph)
            _apply_1q(sites, q, gz)
        for q in range(v):
            sites, _ = _apply_2q(sites, q, cx, rank, renorm=False)
    return sites


def _amplitudes(sites: list[np.ndarray], bits: tuple[int, ...]) -> np.ndarray:
    m = sites[0][:, :, bits[0], :]
    for t, b in zip(sites[1:], bits[1:]):
        m = m @ t[:, :, b, :]
    return np.einsum("nii->n", m)


def _outcome_probs(sites: list[np.ndarray], outcomes: list[str]) -> np.ndarray:
    """Probabilities for basis bit-strings, stacked on a trailing axis."""
    cols = []
    for bits in outcomes:
        amp = _amplitudes(sites, tuple(int(c) for c in bits))
        cols.append(np.abs(amp) ** 2)
    return np.stack(cols, axis=-1)


# ---------- public value types ----------

@dataclass(frozen=True)
class TRState:
    """Immutable ring of V complex site tensors, each (B, 2, B)."""

    sites: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.sites) < 2:
            raise ValueError("ring requires at least 2 qubits")
        b = self.sites[0].shape[0]
        for i, t in enumerate(self.sites):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site {i} must have shape (B, 2, B), got {t.shape}")
            if t.shape[0] != b or t.shape[2] != b:
                raise ValueError(f"site {i} breaks the uniform ring rank {b}")

    @property
    def qubit_count(self) -> int:
        return len(self.sites)

    @property
    def bond_dim(self) -> int:
        return self.sites[0].shape[0]


@dataclass(frozen=True)
class QuanTRCircuit:
    """Layered ansatz: per-qubit (RY, RZ) angles plus a ring CNOT cascade.

    angles[layer, qubit, 0] is the RY angle, [..., 1] the RZ angle. The flat
    parameter order is layer-major, then qubit, then (RY, RZ):
    index = layer*2V + qubit*2 + {0: RY, 1: RZ}.
    """

    qubit_count: int
    layers: int
    angles: np.ndarray = field(repr=False)

    def __post_init__(self):
        expect = (self.layers, self.qubit_count, 2)
        if self.angles.shape != expect:
            raise ValueError(f"angles must have shape {expect}, got {self.angles.shape}")

    @property
    def parameter_count(self) -> int:
        return 2 * self.qubit_count * self.layers

    def flat_angles(self) -> np.ndarray:
        return np.asarray(self.angles, dtype=float).reshape(-1).copy()

    @classmethod
    def from_flat(cls, qubit_count: int, layers: int, flat: np.ndarray) -> "QuanTRCircuit":
        flat = np.asarray(flat, dtype=float)
        if flat.size != 2 * qubit_count * layers:
            raise ValueError("flat parameter vector has the wrong length")
        return cls(qubit_count, layers, flat.reshape(layers, qubit_count, 2).copy())


@dataclass(frozen=True)
class MeasurementResult:
    """Map from basis bit-string to its exact outcome probability."""

    probabilities: dict[str, float]

    def __getitem__(self, bits: str) -> float:
        return self.probabilities[bits]

    def total(self) -> float:
        return float(sum(self.probabilities.values()))


# ---------- public operations ----------

def _lift(state: TRState) -> list[np.ndarray]:
    return [t[np.newaxis] for t in state.sites]


def _lower(sites: list[np.ndarray]) -> TRState:
    return TRState(tuple(t[0] for t in sites))


def tr_zero_state(qubits: int, rank: int) -> TRState:
    """|00...0> as a ring: each site has a single unit entry at (0, 0, 0)."""
    if qubits < 2:
        raise ValueError("ring requires at least 2 qubits")
    if rank < 1:
        raise ValueError("ring rank must be >= 1")
    return _lower(_zero_sites(qubits, rank))


def apply_single_qubit(state: TRState, q: int, gate: np.ndarray) -> TRState:
    """Exact rotation of qubit q; all other sites untouched."""
    _check_unitary(gate, 1)
    if not 0 <= q < state.qubit_count:
        raise ValueError(f"qubit {q} out of range for {state.qubit_count}-qubit ring")
    sites = _lift(state)
    _apply_1q(sites, q, gate.astype(complex))
    return _lower(sites)


def apply_two_qubit(
    state: TRState, q: int, gate: np.ndarray, target: int | None = None
) -> TRState:
    """Gate on ring neighbors (q, q+1 mod V) with truncation back to rank B.

    The returned state is renormalized to unit norm.
    """
    _check_unitary(gate, 2)
    v = state.qubit_count
    if not 0 <= q < v:
        raise ValueError(f"qubit {q} out of range for {v}-qubit ring")
    if target is not None and target != (q + 1) % v:
        raise ValueError("two-qubit gates act on adjacent ring neighbors (q, q+1 mod V)")
    sites, _ = _apply_2q(_lift(state), q, gate.astype(complex), state.bond_dim)
    return _lower(sites)


def run_circuit(state: TRState, circuit: QuanTRCircuit) -> TRState:
    """Apply every circuit layer; the returned state has unit norm."""
    if circuit.qubit_count != state.qubit_count:
        raise ValueError(
            f"circuit is for {circuit.qubit_count} qubits, state has {state.qubit_count}"
        )
    if circuit.layers == 0:
        return state
    sites = _run_ring(
        _lift(state), np.asarray(circuit.angles, dtype=float)[np.newaxis],
        state.bond_dim,
    )
    norm = _ring_norm(sites)
    if np.any(norm < 1e-300):
        raise ValueError("state collapsed to zero norm under truncation")
    sites[0] = sites[0] / norm[:, None, None, None]
    return _lower(sites)


def measure_probs(state: TRState, outcomes: list[str]) -> MeasurementResult:
    """Exact Pauli-Z basis probabilities for the requested bit-strings."""
    v = state.qubit_count
    for bits in outcomes:
        if len(bits) != v or any(c not in "01" for c in bits):
            raise ValueError(f"outcome '{bits}' is not a {v}-bit string")
    probs = _outcome_probs(_lift(state), list(outcomes))[0]
    return MeasurementResult({o: float(p) for o, p in zip(outcomes, probs)})


def tr_to_statevector(state: TRState, normalize: bool = False) -> np.ndarray:
    """Contract the ring into the full 2^V amplitude vector (V <= 14)."""
    v = state.qubit_count
    if v > MAX_STATEVECTOR_QUBITS:
        raise ValueError(f"statevector export limited to {MAX_STATEVECTOR_QUBITS} qubits")
    acc = np.transpose(state.sites[0], (1, 0, 2))  # (bits, left, right)
    for t in state.sites[1:]:
        acc = np.einsum("pab,byc->pyac", acc, t)
        acc = acc.reshape(-1, acc.shape[-2], acc.shape[-1])
    vec = np.einsum("paa->p", acc)
    if normalize:
        vec = vec / np.linalg.norm(vec)
    return vec
