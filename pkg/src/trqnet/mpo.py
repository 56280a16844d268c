"""MPO-factorized dense layers and their sweeping gradient updates.

A weight matrix W of shape (prod(out_dims) x prod(in_dims)) is stored as a
chain of real site tensors with axes (left bond, in, out, right bond),
obtained by interleaving (out_k, in_k) index pairs and splitting left to
right with truncated SVDs. Layers are immutable; updates return new values.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .tensor_core import svd

__all__ = [
    "MPOWeight",
    "TNLayer",
    "BondTensor",
    "mpo_from_matrix",
    "mpo_to_matrix",
    "layer_forward",
    "merge_bond",
    "split_bond",
    "bond_gradient",
    "dmrg_sweep",
    "param_count",
    "random_layer",
]


@dataclass(frozen=True)
class MPOWeight:
    """Chain of (left, in, out, right) site tensors replacing a dense matrix."""

    sites: tuple[np.ndarray, ...]
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]
    max_bond: int

    def __post_init__(self):
        n = len(self.sites)
        if n != len(self.in_dims) or n != len(self.out_dims):
            raise ValueError("one site tensor per (in, out) dimension pair required")
        if self.max_bond < 1:
            raise ValueError("max_bond must be >= 1")
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[-1] != 1:
            raise ValueError("boundary bonds must have extent 1")
        for k, site in enumerate(self.sites):
            if site.ndim != 4:
                raise ValueError(f"site {k} must be rank 4, got shape {site.shape}")
            if site.shape[1] != self.in_dims[k] or site.shape[2] != self.out_dims[k]:
                raise ValueError(
                    f"site {k} physical extents {site.shape[1:3]} do not match "
                    f"dims ({self.in_dims[k]}, {self.out_dims[k]})"
                )
            if k > 0 and self.sites[k - 1].shape[-1] != site.shape[0]:
                raise ValueError(f"bond mismatch between sites {k - 1} and {k}")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def in_width(self) -> int:
        return int(np.prod(self.in_dims))

    @property
    def out_width(self) -> int:
        return int(np.prod(self.out_dims))

    def bond_extents(self) -> tuple[int, ...]:
        return tuple(site.shape[-1] for site in self.sites[:-1])


@dataclass(frozen=True)
class TNLayer:
    """MPO weight plus bias and an element-wise activation tag."""

    weight: MPOWeight
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation '{self.activation}'")
        if self.bias.shape != (self.weight.out_width,):
            raise ValueError(
                f"bias length {self.bias.shape} does not match output width "
                f"{self.weight.out_width}"
            )


@dataclass(frozen=True)
class BondTensor:
    """Two neighboring sites merged over their shared bond."""

    site_index: int
    tensor: np.ndarray  # (left, in_j, out_j, in_{j+1}, out_{j+1}, right)


def _activate(z: np.ndarray, tag: str) -> np.ndarray:
    return np.maximum(z, 0.0) if tag == "relu" else z


def _activate_deriv(z: np.ndarray, tag: str) -> np.ndarray:
    return (z > 0).astype(float) if tag == "relu" else np.ones_like(z)


def _trim_rank(s: np.ndarray, max_bond: int, rel_tol: float = 1e-14) -> int:
    """Bond extent after dropping negligible singular values, at least 1."""
    if s.size == 0 or s[0] == 0.0:
        return 1
    significant = int(np.sum(s > rel_tol * s[0]))
    return max(1, min(max_bond, significant))


def mpo_from_matrix(
    w: np.ndarray,
    in_dims: tuple[int, ...],
    out_dims: tuple[int, ...],
    max_bond: int,
) -> MPOWeight:
    """Factor a dense matrix into an MPO by successive truncated SVDs.

    Singular values are absorbed rightward, which fixes the gauge; every
    internal bond is capped at max_bond.
    """
    in_dims = tuple(in_dims)
    out_dims = tuple(out_dims)
    n = len(in_dims)
    if n != len(out_dims) or n < 2:
        raise ValueError("in_dims and out_dims must have equal length >= 2")
    if max_bond < 1:
        raise ValueError("max_bond must be >= 1")
    out_w = int(np.prod(out_dims))
    in_w = int(np.prod(in_dims))
    if w.shape != (out_w, in_w):
        raise ValueError(f"matrix shape {w.shape} does not match dims ({out_w}, {in_w})")

    # Interleave (out_k, in_k) pairs so each split peels one site.
    t = w.reshape(out_dims + in_dims)
    interleave = [ax for k in range(n) for ax in (k, n + k)]
    t = np.transpose(t, interleave)

    sites = []
    left = 1
    cur = t.reshape(1, -1)
    for k in range(n - 1):
        cur = cur.reshape(left * out_dims[k] * in_dims[k], -1)
        res = svd(cur)
        bond = _trim_rank(res.s, max_bond)
        site = res.u[:, :bond].reshape(left, out_dims[k], in_dims[k], bond)
        sites.append(np.transpose(site, (0, 2, 1, 3)))
        cur = res.s[:bond, None] * res.vt[:bond]
        left = bond
    last = cur.reshape(left, out_dims[-1], in_dims[-1], 1)
    sites.append(np.transpose(last, (0, 2, 1, 3)))
    return MPOWeight(tuple(sites), in_dims, out_dims, max_bond)


def mpo_to_matrix(m: MPOWeight) -> np.ndarray:
    """Contract all sites over their bonds back into the dense matrix."""
    acc = m.sites[0]
    for site in m.sites[1:]:
        acc = np.tensordot(acc, site, axes=([-1], [0]))
    acc = acc[0, ..., 0]  # drop unit boundary bonds; axes now (i1,o1,i2,o2,...)
    n = m.n_sites
    out_first = [2 * k + 1 for k in range(n)] + [2 * k for k in range(n)]
    return np.transpose(acc, out_first).reshape(m.out_width, m.in_width)


_LETTERS = string.ascii_lowercase + string.ascii_uppercase


def _chain_subscripts(n: int, batch: bool) -> tuple[str, list[str], str, str, str]:
    """Einsum letters for x[in...], n sites, and delta[out...]."""
    need = 2 * n + (n + 1) + 1
    if need > len(_LETTERS):
        raise ValueError("too many sites for einsum letters")
    ins = [_LETTERS[k] for k in range(n)]
    outs = [_LETTERS[n + k] for k in range(n)]
    bonds = [_LETTERS[2 * n + k] for k in range(n + 1)]
    b = _LETTERS[-1] if batch else ""
    x_sub = b + "".join(ins)
    site_subs = [bonds[k] + ins[k] + outs[k] + bonds[k + 1] for k in range(n)]
    d_sub = b + "".join(outs)
    return x_sub, site_subs, "".join(outs), "".join(bonds), b


def _forward_with_cache(layer: TNLayer, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched forward pass; returns (activated output, pre-activation)."""
    m = layer.weight
    n = m.n_sites
    xb = np.atleast_2d(np.asarray(x, dtype=float))
    x_sub, site_subs, out_sub, bonds, b = _chain_subscripts(n, batch=True)
    spec = ",".join([x_sub] + site_subs) + "->" + b + out_sub + bonds[0] + bonds[-1]
    ops = [xb.reshape((xb.shape[0],) + m.in_dims)] + list(m.sites)
    z = np.einsum(spec, *ops, optimize=True).reshape(xb.shape[0], m.out_width)
    z = z + layer.bias
    return _activate(z, layer.activation), z


def layer_forward(layer: TNLayer, x: np.ndarray) -> np.ndarray:
    """activation(contract(x, sites) + bias) for a single flat input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (layer.weight.in_width,):
        raise ValueError(
            f"input width {x.shape} does not match layer input {layer.weight.in_width}"
        )
    y, _ = _forward_with_cache(layer, x[np.newaxis])
    return y[0]


def merge_bond(m: MPOWeight, j: int) -> BondTensor:
    """Contract sites j and j+1 over their shared bond; m is unchanged."""
    if not 0 <= j < m.n_sites - 1:
        raise ValueError(f"bond index {j} out of range for {m.n_sites}-site MPO")
    merged = np.tensordot(m.sites[j], m.sites[j + 1], axes=([3], [0]))
    return BondTensor(j, merged)


def split_bond(b: BondTensor, max_bond: int) -> tuple[np.ndarray, np.ndarray]:
    """SVD the bond tensor back into two sites, keeping at most max_bond values.

    Singular values are absorbed into the left factor.
    """
    if max_bond < 1:
        raise ValueError("max_bond must be >= 1")
    l, i1, o1, i2, o2, r = b.tensor.shape
    mat = b.tensor.reshape(l * i1 * o1, i2 * o2 * r)
    res = svd(mat)
    k = _trim_rank(res.s, max_bond)
    left = (res.u[:, :k] * res.s[:k]).reshape(l, i1, o1, k)
    right = res.vt[:k].reshape(k, i2, o2, r)
    return left, right


def bond_gradient(envs: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """Loss gradient for a bond tensor: sum of residual-weighted environments.

    envs stacks one environment tensor per sample on the leading axis;
    residuals holds the matching per-sample scalar factors.
    """
    envs = np.asarray(envs)
    residuals = np.asarray(residuals, dtype=float)
    if envs.shape[0] != residuals.shape[0]:
        raise ValueError(
            f"{envs.shape[0]} environments but {residuals.shape[0]} residuals"
        )
    return np.einsum("n...,n->...", envs, residuals)


def _bond_environments(
    layer: TNLayer, x: np.ndarray, delta: np.ndarray, j: int
) -> np.ndarray:
    """Per-sample environments of bond j: contract everything except sites j, j+1.

    x is the batch of flat inputs, delta the batch of gradients w.r.t. the
    pre-activation outputs. Result has shape (batch, *bond tensor shape).
    """
    m = layer.weight
    n = m.n_sites
    x_sub, site_subs, out_sub, _, b = _chain_subscripts(n, batch=True)
    d_sub = b + out_sub
    keep_subs = [site_subs[k] for k in range(n) if k not in (j, j + 1)]
    keep_ops = [m.sites[k] for k in range(n) if k not in (j, j + 1)]
    # Boundary bonds of the excluded pair appear in no kept operand; feed
    # them explicit unit-extent vectors so einsum can emit them.
    if j == 0:
        keep_subs.append(site_subs[0][0])
        keep_ops.append(np.ones(1))
    if j + 1 == n - 1:
        keep_subs.append(site_subs[-1][3])
        keep_ops.append(np.ones(1))
    target = (
        b
        + site_subs[j][0]
        + site_subs[j][1]
        + site_subs[j][2]
        + site_subs[j + 1][1]
        + site_subs[j + 1][2]
        + site_subs[j + 1][3]
    )
    spec = ",".join([x_sub, d_sub] + keep_subs) + "->" + target
    ops = [
        x.reshape((x.shape[0],) + m.in_dims),
        delta.reshape((delta.shape[0],) + m.out_dims),
    ] + keep_ops
    return np.einsum(spec, *ops, optimize=True)


def dmrg_sweep(layer: TNLayer, x, grad_fn, lr: float) -> TNLayer:
    """One left-to-right then right-to-left bond update pass.

    For each bond: merge the neighboring sites, step the merged tensor
    against the batch-summed gradient, split back with truncation at the
    layer's bond cap. grad_fn maps the batch of layer outputs to the batch
    of per-sample loss gradients (any batch averaging included). The bias
    takes one plain gradient step using the initial outputs.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    m = layer.weight
    n = m.n_sites

    y, z = _forward_with_cache(layer, x)
    dz = np.asarray(grad_fn(y)) * _activate_deriv(z, layer.activation)
    bias = layer.bias - lr * dz.sum(axis=0)
    layer = TNLayer(m, bias, layer.activation)

    order = list(range(n - 1)) + list(range(n - 2, -1, -1))
    for j in order:
        y, z = _forward_with_cache(layer, x)
        dz = np.asarray(grad_fn(y)) * _activate_deriv(z, layer.activation)
        envs = _bond_environments(layer, x, dz, j)
        grad = bond_gradient(envs, np.ones(x.shape[0]))
        merged = merge_bond(layer.weight, j).tensor - lr * grad
        left, right = split_bond(BondTensor(j, merged), m.max_bond)
        sites = list(layer.weight.sites)
        sites[j], sites[j + 1] = left, right
        layer = TNLayer(
            MPOWeight(tuple(sites), m.in_dims, m.out_dims, m.max_bond),
            layer.bias,
            layer.activation,
        )
    return layer


def param_count(layer: TNLayer) -> int:
    """Exact number of stored MPO and bias elements."""
    return int(sum(site.size for site in layer.weight.sites) + layer.bias.size)


def random_layer(
    in_dims: tuple[int, ...],
    out_dims: tuple[int, ...],
    max_bond: int,
    rng: np.random.Generator,
    activation: str = "relu",
) -> TNLayer:
    """Gaussian-initialized layer, each site scaled by 1/sqrt(its fan-in)."""
    in_dims = tuple(in_dims)
    out_dims = tuple(out_dims)
    n = len(in_dims)
    pair = [i * o for i, o in zip(in_dims, out_dims)]
    bonds = [1]
    for k in range(n - 1):
        left = bonds[-1] * pair[k]
        right = int(np.prod(pair[k + 1 :]))
        bonds.append(min(max_bond, left, right))
    bonds.append(1)
    sites = []
    for k in range(n):
        shape = (bonds[k], in_dims[k], out_dims[k], bonds[k + 1])
        scale = 1.0 / np.sqrt(bonds[k] * in_dims[k])
        sites.append(rng.normal(scale=scale, size=shape))
    weight = MPOWeight(tuple(sites), in_dims, out_dims, max_bond)
    return TNLayer(weight, np.zeros(weight.out_width), activation)
