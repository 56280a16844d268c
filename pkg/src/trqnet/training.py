"""Gradients and the training loop for the hybrid model.

Circuit angles train by the parameter-shift rule fed through Adam; TN layers
train by bond-tensor sweeps driven by the gradient chained back through the
encoder and the frozen bridge. All shifted circuit evaluations for a batch
run as one stacked tensor-ring execution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .model import (
    PROB_CLAMP,
    HybridModel,
    _circuit_outcome_probs,
    _forward_batch,
    _pad_features,
    _tn_forward,
    encode_angles,
    predict_label,
    softmax,
)
from .mpo import _activate_deriv, dmrg_sweep, mpo_to_matrix
from .tensor_ring import QuanTRCircuit

__all__ = [
    "OptimizerConfig",
    "TrainReport",
    "AdamState",
    "adam_step",
    "param_shift_grad",
    "encoder_grad",
    "fit",
    "evaluate",
    "seed_streams",
]


@dataclass(frozen=True)
class OptimizerConfig:
    """Training hyper-parameters; quantum rates default to the Adam rate."""

    learning_rate: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    tn_learning_rate: float = 0.01
    ry_rate: float | None = None
    rz_rate: float | None = None
    max_epochs: int = 25
    batch_size: int = 4
    seed: int = 0
    alternate: int | None = None
    early_stop_tol: float = 1e-6
    patience: int = 3

    def __post_init__(self):
        if self.learning_rate < 0 or self.tn_learning_rate < 0:
            raise ValueError("learning rates must be non-negative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def rate_ry(self) -> float:
        return self.learning_rate if self.ry_rate is None else self.ry_rate

    @property
    def rate_rz(self) -> float:
        return self.learning_rate if self.rz_rate is None else self.rz_rate


@dataclass
class TrainReport:
    """Per-epoch loss and accuracy trace plus wall time."""

    losses: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def epochs(self) -> int:
        return len(self.losses)

    def to_csv(self) -> str:
        lines = ["epoch,loss,train_acc,val_acc"]
        for i in range(self.epochs):
            lines.append(
                f"{i + 1},{self.losses[i]:.12f},{self.train_acc[i]:.6f},{self.val_acc[i]:.6f}"
            )
        return "\n".join(lines) + "\n"


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Named child generators of one root seed; spawn order is fixed:
    data split, TN init, bridge, circuit init, epoch shuffling."""
    children = np.random.SeedSequence(seed).spawn(5)
    names = ("split", "tn", "bridge", "circuit", "shuffle")
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


# ---------- Adam ----------

@dataclass
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(0, np.zeros(n), np.zeros(n))


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    cfg: OptimizerConfig,
    rates: np.ndarray | None = None,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; decoupled weight decay as configured.

    `rates` optionally overrides the step size per parameter.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape:
        raise ValueError(f"params {params.shape} and grads {grads.shape} differ")
    b1, b2 = cfg.betas
    t = state.step + 1
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * grads**2
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    lr = cfg.learning_rate if rates is None else rates
    new = params - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    if cfg.weight_decay:
        new = new - lr * cfg.weight_decay * params
    return new, AdamState(t, m, v)


# ---------- gradient machinery ----------

def _ce_grad_wrt_readout(z: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy and its gradient w.r.t. the readout probs.

    z holds raw readout probabilities (batch, classes); the loss consumes
    softmax(z) with clamping, so clamped entries contribute zero gradient.
    """
    p = softmax(z)
    n, c = p.shape
    t = np.zeros((n, c))
    t[np.arange(n), targets] = 1.0
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    losses = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).sum(axis=1)
    dldp = -(t / pc - (1.0 - t) / (1.0 - pc))
    dldp[(p < PROB_CLAMP) | (p > 1.0 - PROB_CLAMP)] = 0.0
    # softmax jacobian: dL/dz_j = p_j (dL/dp_j - sum_c dL/dp_c p_c)
    dldz = p * (dldp - (dldp * p).sum(axis=1, keepdims=True))
    return losses, dldz


def _batch_gradients(model: HybridModel, x: np.ndarray, targets: np.ndarray):
    """Loss, circuit-angle gradient, and TN-output gradient for one batch.

    Builds a single stacked ring execution covering the base runs plus every
    (+pi/2, -pi/2) shift of each circuit angle and each encoder angle; the
    batch objective is the mean per-sample cross-entropy.
    """
    n = x.shape[0]
    v = model.qubit_count
    p_count = model.circuit.parameter_count
    layers = model.circuit.layers
    outcomes = list(model.readout.outcomes)

    tn_out, caches = _tn_forward(model, x)
    bridged = tn_out @ model.bridge.T
    enc = encode_angles(bridged)

    runs = 1 + 2 * p_count + 2 * v
    enc_runs = np.broadcast_to(enc[:, None, :], (n, runs, v)).copy()
    flat = model.circuit.flat_angles()
    circ_runs = np.broadcast_to(
        flat.reshape(layers, v, 2), (n, runs, layers, v, 2)
    ).copy()
    circ_flat = circ_runs.reshape(n, runs, p_count)
    for k in range(p_count):
        circ_flat[:, 1 + 2 * k, k] += np.pi / 2
        circ_flat[:, 2 + 2 * k, k] -= np.pi / 2
    for q in range(v):
        enc_runs[:, 1 + 2 * p_count + 2 * q, q] += np.pi / 2
        enc_runs[:, 2 + 2 * p_count + 2 * q, q] -= np.pi / 2

    z_all = _circuit_outcome_probs(enc_runs, circ_runs, model.rank, outcomes)
    z0 = z_all[:, 0, :]
    losses, dldz = _ce_grad_wrt_readout(z0, targets)
    dldz = dldz / n  # batch-mean objective

    dz_circ = 0.5 * (
        z_all[:, 1 : 1 + 2 * p_count : 2, :] - z_all[:, 2 : 2 + 2 * p_count : 2, :]
    )
    grad_circuit = np.einsum("nc,nkc->k", dldz, dz_circ)

    base = 1 + 2 * p_count
    dz_enc = 0.5 * (z_all[:, base::2, :] - z_all[:, base + 1 :: 2, :])
    grad_angles = np.einsum("nc,nqc->nq", dldz, dz_enc)
    # chain through theta = pi*tanh(f) and the frozen bridge
    grad_bridged = grad_angles * np.pi * (1.0 - np.tanh(bridged) ** 2)
    grad_tn_out = grad_bridged @ model.bridge

    return float(losses.mean()), grad_circuit, grad_tn_out, (tn_out, caches)


def param_shift_grad(model: HybridModel, x: np.ndarray, target: int, which: int) -> float:
    """d(loss)/d(circuit angle `which`) via the two-point shift rule."""
    if not 0 <= which < model.circuit.parameter_count:
        raise ValueError(
            f"parameter index {which} out of range "
            f"(circuit has {model.circuit.parameter_count})"
        )
    x = np.asarray(x, dtype=float)[np.newaxis]
    _, grad_circuit, _, _ = _batch_gradients(model, x, np.array([target]))
    return float(grad_circuit[which])


def encoder_grad(model: HybridModel, x: np.ndarray, target: int) -> np.ndarray:
    """d(loss)/d(TN output) chained through the encoder and bridge."""
    x = np.asarray(x, dtype=float)[np.newaxis]
    _, _, grad_tn_out, _ = _batch_gradients(model, x, np.array([target]))
    return grad_tn_out[0]


def _tn_layer_grads(model: HybridModel, caches, grad_tn_out: np.ndarray) -> list[np.ndarray]:
    """Frozen per-layer dL/dy via dense backprop through the MPO matrices."""
    grads = [None] * len(model.layers)
    d = grad_tn_out
    for idx in range(len(model.layers) - 1, -1, -1):
        grads[idx] = d
        if idx > 0:
            _, z, _ = caches[idx]
            dz = d * _activate_deriv(z, model.layers[idx].activation)
            d = dz @ mpo_to_matrix(model.layers[idx].weight)
    return grads


# ---------- training loop ----------

def fit(
    model: HybridModel,
    dataset: Dataset,
    cfg: OptimizerConfig,
    val_dataset: Dataset | None = None,
) -> tuple[HybridModel, TrainReport]:
    """Mini-batch training with parameter-shift Adam and per-layer sweeps.

    Stops at max_epochs, or earlier once the epoch loss has improved by less
    than early_stop_tol for `patience` consecutive epochs. With
    cfg.alternate = N, blocks of N epochs update only the circuit and then
    only the TN layers, in alternation.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    if int(dataset.labels.max()) + 1 > model.n_classes:
        raise ValueError(
            f"dataset has more classes than the {model.n_classes}-way readout"
        )
    started = time.perf_counter()
    shuffle_rng = seed_streams(cfg.seed)["shuffle"]
    report = TrainReport()

    params = model.circuit.flat_angles()
    adam = AdamState.zeros(params.size)
    rates = np.where(
        np.arange(params.size) % 2 == 0, cfg.rate_ry, cfg.rate_rz
    )

    features = np.asarray(dataset.features, dtype=float)
    labels = np.asarray(dataset.labels, dtype=int)
    prev_loss = None
    stall = 0

    for epoch in range(cfg.max_epochs):
        if cfg.alternate:
            quantum_on = (epoch // cfg.alternate) % 2 == 0
            classical_on = not quantum_on
        else:
            quantum_on = classical_on = True

        order = shuffle_rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(dataset), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, tb = features[idx], labels[idx]
            batch_loss, grad_circ, grad_tn, (tn_out, caches) = _batch_gradients(
                model, xb, tb
            )
            epoch_losses.append(batch_loss)

            if quantum_on:
                params, adam = adam_step(params, grad_circ, adam, cfg, rates=rates)
                model = model.with_circuit(
                    QuanTRCircuit.from_flat(model.qubit_count, model.circuit.layers, params)
                )
            if classical_on and cfg.tn_learning_rate > 0:
                layer_grads = _tn_layer_grads(model, caches, grad_tn)
                new_layers = []
                for layer, (xin, _, _), gy in zip(model.layers, caches, layer_grads):
                    new_layers.append(
                        dmrg_sweep(layer, xin, lambda y, g=gy: g, cfg.tn_learning_rate)
                    )
                model = model.with_layers(tuple(new_layers))

        epoch_loss = float(np.mean(epoch_losses))
        train_acc, _ = evaluate(model, dataset)
        if val_dataset is not None and len(val_dataset) > 0:
            val_acc, _ = evaluate(model, val_dataset)
        else:
            val_acc = float("nan")
        report.losses.append(epoch_loss)
        report.train_acc.append(train_acc)
        report.val_acc.append(val_acc)

        if prev_loss is not None and prev_loss - epoch_loss < cfg.early_stop_tol:
            stall += 1
            if stall >= cfg.patience:
                break
        else:
            stall = 0
        prev_loss = epoch_loss

    report.wall_time = time.perf_counter() - started
    return model, report


def evaluate(model: HybridModel, dataset: Dataset) -> tuple[float, np.ndarray]:
    """Accuracy and a (true, predicted) confusion-count matrix."""
    if len(dataset) == 0:
        raise ValueError("dataset must be nonempty")
    probs, _, _ = _forward_batch(model, np.asarray(dataset.features, dtype=float))
    preds = np.argmax(probs, axis=1)
    labels = np.asarray(dataset.labels, dtype=int)
    c = model.n_classes
    confusion = np.zeros((c, c), dtype=int)
    for t, p in zip(labels, preds):
        confusion[t, p] += 1
    return float((preds == labels).mean()), confusion
