"""Versioned binary checkpoint for hybrid models.

Layout: magic b"TRQN", u32 version, then sections in fixed order (TN layers,
bridge, circuit, readout, config echo). Integers are little-endian uint32,
floats little-endian float64, strings length-prefixed UTF-8.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import HybridModel, ReadoutMap
from .mpo import MPOWeight, TNLayer
from .tensor_ring import QuanTRCircuit

__all__ = ["save_model", "load_model", "MAGIC", "VERSION"]

MAGIC = b"TRQN"
VERSION = 1

_ACTIVATIONS = ("relu", "identity")


def _w_u32(fh, *values):
    fh.write(struct.pack(f"<{len(values)}I", *values))


def _r_u32(fh, count):
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError("truncated checkpoint")
    return struct.unpack(f"<{count}I", raw)


def _w_f64(fh, array):
    fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def _r_f64(fh, shape):
    count = int(np.prod(shape)) if shape else 1
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated checkpoint")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def _w_str(fh, text):
    data = text.encode("utf-8")
    _w_u32(fh, len(data))
    fh.write(data)


def _r_str(fh):
    (n,) = _r_u32(fh, 1)
    raw = fh.read(n)
    if len(raw) != n:
        raise ValueError("truncated checkpoint")
    return raw.decode("utf-8")


def save_model(path, model: HybridModel, config_echo: dict | None = None) -> None:
    """Write the model and an optional flat config dictionary to disk."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _w_u32(fh, VERSION)

        _w_u32(fh, len(model.layers))
        for layer in model.layers:
            w = layer.weight
            _w_u32(fh, w.n_sites, w.max_bond, _ACTIVATIONS.index(layer.activation))
            _w_u32(fh, *w.in_dims)
            _w_u32(fh, *w.out_dims)
            for site in w.sites:
                _w_u32(fh, *site.shape)
                _w_f64(fh, site)
            _w_f64(fh, layer.bias)

        _w_u32(fh, *model.bridge.shape)
        _w_f64(fh, model.bridge)

        circ = model.circuit
        _w_u32(fh, circ.qubit_count, circ.layers, model.rank, model.feature_width)
        _w_f64(fh, circ.angles)

        _w_u32(fh, model.readout.n_classes)
        for outcome in model.readout.outcomes:
            _w_str(fh, outcome)

        _w_str(fh, json.dumps(config_echo or {}, sort_keys=True))


def load_model(path) -> tuple[HybridModel, dict]:
    """Read a checkpoint back into a model plus its config echo."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: unrecognized checkpoint magic {magic!r}")
        (version,) = _r_u32(fh, 1)
        if version != VERSION:
            raise ValueError(
                f"{path}: checkpoint version {version} not supported (expected {VERSION})"
            )

        (n_layers,) = _r_u32(fh, 1)
        layers = []
        for _ in range(n_layers):
            n_sites, max_bond, act_idx = _r_u32(fh, 3)
            in_dims = _r_u32(fh, n_sites)
            out_dims = _r_u32(fh, n_sites)
            sites = []
            for _ in range(n_sites):
                shape = _r_u32(fh, 4)
                sites.append(_r_f64(fh, shape))
            weight = MPOWeight(tuple(sites), tuple(in_dims), tuple(out_dims), max_bond)
            bias = _r_f64(fh, (weight.out_width,))
            layers.append(TNLayer(weight, bias, _ACTIVATIONS[act_idx]))

        bridge_shape = _r_u32(fh, 2)
        bridge = _r_f64(fh, bridge_shape)

        qubits, circ_layers, rank, feature_width = _r_u32(fh, 4)
        angles = _r_f64(fh, (circ_layers, qubits, 2))
        circuit = QuanTRCircuit(qubits, circ_layers, angles)

        (n_classes,) = _r_u32(fh, 1)
        outcomes = tuple(_r_str(fh) for _ in range(n_classes))
        config = json.loads(_r_str(fh))

    model = HybridModel(
        layers=tuple(layers),
        bridge=bridge,
        circuit=circuit,
        readout=ReadoutMap(outcomes),
        rank=rank,
        feature_width=feature_width,
    )
    return model, config
