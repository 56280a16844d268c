"""Dense tensor primitives: pairwise contraction, reshape/permute, truncated SVD.

Tensors are plain numpy arrays (row-major, float64 or complex128). Every
function returns a new array; inputs are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SvdResult", "contract", "reshape", "permute", "svd"]


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD factors with the weight lost to truncation.

    u has orthonormal columns, vt orthonormal rows, s is descending and
    non-negative. truncation_error is the root-sum-square of the discarded
    singular values (0.0 when nothing was discarded).
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    truncation_error: float

    @property
    def rank(self) -> int:
        return len(self.s)


def contract(a: np.ndarray, b: np.ndarray, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Sum a*b over the paired axes.

    Result axes are the uncontracted axes of `a` followed by those of `b`,
    each in original order. An empty `pairs` list gives the outer product.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    for ax in axes_a:
        if not 0 <= ax < a.ndim:
            raise ValueError(f"axis {ax} out of range for tensor of rank {a.ndim}")
    for ax in axes_b:
        if not 0 <= ax < b.ndim:
            raise ValueError(f"axis {ax} out of range for tensor of rank {b.ndim}")
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError("paired axes must be distinct within each tensor")
    for ax_a, ax_b in pairs:
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ValueError(
                f"extent mismatch: a.axis {ax_a} has {a.shape[ax_a]}, "
                f"b.axis {ax_b} has {b.shape[ax_b]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def reshape(t: np.ndarray, new_shape: tuple[int, ...]) -> np.ndarray:
    """Relabel the flat row-major buffer with a new shape."""
    t = np.asarray(t)
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise ValueError(f"cannot reshape {t.size} elements into shape {tuple(new_shape)}")
    return t.reshape(new_shape)


def permute(t: np.ndarray, order: tuple[int, ...]) -> np.ndarray:
    """Reorder axes; element at index i of the result is t at i permuted."""
    t = np.asarray(t)
    if sorted(order) != list(range(t.ndim)):
        raise ValueError(f"{tuple(order)} is not a permutation of 0..{t.ndim - 1}")
    return np.transpose(t, order)


def svd(m: np.ndarray, max_rank: int | None = None) -> SvdResult:
    """Deterministic truncated SVD of a matrix.

    Keeps at most `max_rank` singular values (all of them when None) and
    reports the root-sum-square of what was dropped. The phase of each left
    singular vector is fixed so its largest-magnitude entry is real and
    non-negative, making factors comparable across runs.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"svd requires a matrix, got rank-{m.ndim} tensor")
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be >= 1")

    if not np.any(m):
        # Degenerate input: identity-block factors, zero spectrum.
        k = min(m.shape)
        if max_rank is not None:
            k = min(k, max_rank)
        u = np.eye(m.shape[0], k, dtype=m.dtype)
        vt = np.eye(k, m.shape[1], dtype=m.dtype)
        return SvdResult(u=u, s=np.zeros(k), vt=vt, truncation_error=0.0)

    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"svd failed to converge on shape {m.shape}: {exc}") from exc

    # Phase-fix columns of u so the largest-magnitude entry is real >= 0.
    anchor = np.argmax(np.abs(u), axis=0)
    phases = u[anchor, np.arange(u.shape[1])]
    mags = np.abs(phases)
    phases = np.where(mags > 0, phases / np.where(mags > 0, mags, 1.0), 1.0)
    u = u / phases[np.newaxis, :]
    vt = vt * phases[:, np.newaxis]

    if max_rank is not None and max_rank < len(s):
        err = float(np.sqrt(np.sum(s[max_rank:] ** 2)))
        u, s, vt = u[:, :max_rank], s[:max_rank], vt[:max_rank, :]
    else:
        err = 0.0
    return SvdResult(u=u, s=s, vt=vt, truncation_error=err)
