"""Hybrid classifier: TN layers -> fixed bridge -> angle encoder -> ring circuit.

The readout measures a fixed basis outcome per class; class probabilities are
the softmax of those outcome probabilities. The bridge matrix adapting the TN
output width to the qubit count is frozen at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .mpo import TNLayer, _forward_with_cache, random_layer
from .tensor_ring import (
    QuanTRCircuit,
    _apply_1q,
    _outcome_probs,
    _ring_norm,
    _run_ring,
    _zero_sites,
)

__all__ = [
    "ReadoutMap",
    "HybridModel",
    "binary_readout",
    "ternary_readout",
    "encode_angles",
    "forward",
    "loss",
    "predict_label",
    "predict_sign",
    "softmax",
    "build_model",
    "default_architecture",
]

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class ReadoutMap:
    """Ordered basis bit-strings, one measured outcome per class."""

    outcomes: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.outcomes)) != len(self.outcomes):
            raise ValueError("readout outcomes must be distinct")
        if not 2 <= len(self.outcomes) <= 3:
            raise ValueError("readout supports 2 or 3 classes")
        width = len(self.outcomes[0])
        if any(len(o) != width or set(o) - {"0", "1"} for o in self.outcomes):
            raise ValueError("outcomes must be equal-length bit-strings")

    @property
    def n_classes(self) -> int:
        return len(self.outcomes)


def binary_readout(qubits: int) -> ReadoutMap:
    """All-zeros vs all-ones outcomes."""
    return ReadoutMap(("0" * qubits, "1" * qubits))


def ternary_readout(qubits: int) -> ReadoutMap:
    """The three lowest-index weight-1 basis strings (deterministic choice)."""
    if qubits < 3:
        raise ValueError("ternary readout needs at least 3 qubits")
    outcomes = tuple(format(1 << k, f"0{qubits}b") for k in range(3))
    return ReadoutMap(outcomes)


@dataclass(frozen=True)
class HybridModel:
    """TN layers, frozen bridge, encoder, ring circuit, and readout map."""

    layers: tuple[TNLayer, ...]
    bridge: np.ndarray
    circuit: QuanTRCircuit
    readout: ReadoutMap
    rank: int
    feature_width: int

    def __post_init__(self):
        if self.bridge.shape != (self.circuit.qubit_count, self.layers[-1].weight.out_width):
            raise ValueError(
                f"bridge shape {self.bridge.shape} must be "
                f"(qubits={self.circuit.qubit_count}, tn_out={self.layers[-1].weight.out_width})"
            )
        if len(self.readout.outcomes[0]) != self.circuit.qubit_count:
            raise ValueError("readout bit-strings must match the qubit count")
        if self.feature_width > self.layers[0].weight.in_width:
            raise ValueError("feature width exceeds the first layer input")

    @property
    def qubit_count(self) -> int:
        return self.circuit.qubit_count

    @property
    def n_classes(self) -> int:
        return self.readout.n_classes

    def with_circuit(self, circuit: QuanTRCircuit) -> "HybridModel":
        return replace(self, circuit=circuit)

    def with_layers(self, layers: tuple[TNLayer, ...]) -> "HybridModel":
        return replace(self, layers=layers)


def encode_angles(features: np.ndarray) -> np.ndarray:
    """Bounded feature-to-angle map pi*tanh(f) in (-pi, pi)."""
    features = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    return np.pi * np.tanh(features)


def softmax(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    shifted = values - values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _pad_features(x: np.ndarray, width: int) -> np.ndarray:
    if x.shape[-1] == width:
        return x
    padded = np.zeros(x.shape[:-1] + (width,))
    padded[..., : x.shape[-1]] = x
    return padded


def _tn_forward(model: HybridModel, x: np.ndarray):
    """All TN layers on a batch; returns per-layer (input, pre-act, output)."""
    cur = _pad_features(np.atleast_2d(x), model.layers[0].weight.in_width)
    caches = []
    for layer in model.layers:
        y, z = _forward_with_cache(layer, cur)
        caches.append((cur, z, y))
        cur = y
    return cur, caches


def _circuit_outcome_probs(
    enc_angles: np.ndarray, circuit_angles: np.ndarray, rank: int, outcomes: list[str]
) -> np.ndarray:
    """Ring-simulated outcome probabilities for a stack of runs.

    enc_angles has shape (..., V); circuit_angles broadcasts to
    (..., layers, V, 2). The leading dims index independent runs.
    """
    v = enc_angles.shape[-1]
    batch_shape = enc_angles.shape[:-1]
    n = int(np.prod(batch_shape)) if batch_shape else 1
    layers = circuit_angles.shape[-3]
    enc = enc_angles.reshape(n, v)
    circ = np.broadcast_to(
        circuit_angles, batch_shape + circuit_angles.shape[-3:]
    ).reshape(n, layers, v, 2)

    sites = _zero_sites(v, rank, batch=n)
    for q in range(v):
        c, s = np.cos(enc[:, q] / 2.0), np.sin(enc[:, q] / 2.0)
        gate = np.zeros((n, 2, 2), dtype=complex)
        gate[:, 0, 0] = c
        gate[:, 0, 1] = -s
        gate[:, 1, 0] = s
        gate[:, 1, 1] = c
        _apply_1q(sites, q, gate)
    if layers > 0:
        sites = _run_ring(sites, circ, rank)
    probs = _outcome_probs(sites, outcomes)
    norm2 = _ring_norm(sites) ** 2
    return (probs / norm2[:, None]).reshape(batch_shape + (len(outcomes),))


def _forward_batch(model: HybridModel, x: np.ndarray):
    """Full pipeline on a batch; returns (class probs, readout probs, caches)."""
    tn_out, caches = _tn_forward(model, x)
    bridged = tn_out @ model.bridge.T
    enc = encode_angles(bridged)
    z = _circuit_outcome_probs(
        enc, np.asarray(model.circuit.angles, dtype=float), model.rank,
        list(model.readout.outcomes),
    )
    return softmax(z), z, (caches, tn_out, bridged, enc)


def forward(model: HybridModel, x: np.ndarray) -> np.ndarray:
    """Class-probability vector for one feature vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.feature_width,):
        raise ValueError(
            f"expected {model.feature_width} features, got shape {x.shape}"
        )
    probs, _, _ = _forward_batch(model, x[np.newaxis])
    return probs[0]


def loss(probs: np.ndarray, target: int) -> float:
    """Clamped two-sided cross-entropy of a class-probability vector."""
    probs = np.asarray(probs, dtype=float)
    if not 0 <= target < probs.shape[-1]:
        raise ValueError(f"target {target} invalid for {probs.shape[-1]} classes")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.zeros_like(p)
    t[target] = 1.0
    return float(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).sum())


def predict_label(probs: np.ndarray) -> int:
    """Argmax class; exact ties resolve to the lowest index."""
    return int(np.argmax(probs))


def predict_sign(probs: np.ndarray) -> int:
    """Binary convention: class 0 -> +1, class 1 -> -1."""
    return 1 if predict_label(probs) == 0 else -1


def default_architecture(width: int) -> tuple[list[tuple[tuple[int, ...], tuple[int, ...]]], int]:
    """TN layer dimension plan for a raw feature width.

    Returns ([(in_dims, out_dims), ...], padded_width). Widths that do not
    factor into small extents are zero-padded up to the next power of two.
    """
    if width <= 8:
        return [((2, 2, 2), (2, 2, 2)), ((2, 2, 2), (2, 2, 2))], 8
    if width == 784:
        return [((7, 7, 16), (4, 4, 4)), ((4, 4, 4), (2, 2, 2))], 784
    k = int(np.ceil(np.log2(width)))
    return [((2,) * k, (2, 2, 2)), ((2, 2, 2), (2, 2, 2))], 2**k


def build_model(
    feature_width: int,
    qubits: int,
    rank: int,
    n_classes: int,
    tn_rng: np.random.Generator,
    bridge_rng: np.random.Generator,
    circuit_rng: np.random.Generator,
    circuit_layers: int = 2,
    max_bond: int = 8,
    angle_scale: float = 0.3,
    readout: ReadoutMap | None = None,
) -> HybridModel:
    """Assemble a fresh model with the default layer plan for the width."""
    plan, _ = default_architecture(feature_width)
    layers = tuple(
        random_layer(ind, outd, max_bond, tn_rng, activation="relu")
        for ind, outd in plan
    )
    n_s = layers[-1].weight.out_width
    bridge = bridge_rng.normal(scale=1.0 / np.sqrt(n_s), size=(qubits, n_s))
    angles = circuit_rng.normal(scale=angle_scale, size=(circuit_layers, qubits, 2))
    circuit = QuanTRCircuit(qubits, circuit_layers, angles)
    if readout is None:
        readout = binary_readout(qubits) if n_classes == 2 else ternary_readout(qubits)
    return HybridModel(
        layers=layers,
        bridge=bridge,
        circuit=circuit,
        readout=readout,
        rank=rank,
        feature_width=feature_width,
    )
