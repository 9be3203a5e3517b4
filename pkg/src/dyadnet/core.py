"""Relational data model, canonical vectorization and dyad-pair configurations.

A directed relational array over ``n`` actors and ``R`` layers has one
observation per ordered dyad ``(i, j)``, ``i != j``, per layer.  Flat vectors
are ordered layer-major, then lexicographically in ``(i, j)``.  Undirected
arrays keep only the ``i < j`` half.

Most numerical routines work on *matrix form*: an array of shape
``(..., n, n, *trailing)`` with zeros on the diagonal, which is what
:func:`to_matrix` produces from flat vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from dyadnet.errors import DimensionError, IncompleteDataError

__all__ = [
    "DyadIndex",
    "PairConfig",
    "RelationalDataset",
    "classify_pair",
    "config_counts",
    "dyad_index",
    "to_matrix",
    "to_flat",
    "vectorize",
    "devectorize",
    "pair_sums",
    "apply_pattern",
    "undirected_pair_sums",
]


class DyadIndex(NamedTuple):
    i: int
    j: int
    r: int = 0


class PairConfig(IntEnum):
    """Configuration of an ordered pair of dyads ``(i, j), (k, l)``.

    The integer values double as slot indices for six-parameter covariance
    patterns (variance first, disjoint last).
    """

    SAME = 0
    RECIPROCAL = 1
    COMMON_RECEIVER = 2
    COMMON_SENDER = 3
    SENDER_RECEIVER = 4
    DISJOINT = 5


def classify_pair(a, b) -> PairConfig:
    """Classify two dyads on the same actor set (layers are ignored)."""
    i, j = a[0], a[1]
    k, l = b[0], b[1]
    if i == k and j == l:
        return PairConfig.SAME
    if i == l and j == k:
        return PairConfig.RECIPROCAL
    if i == k:
        return PairConfig.COMMON_SENDER
    if j == l:
        return PairConfig.COMMON_RECEIVER
    if i == l or j == k:
        return PairConfig.SENDER_RECEIVER
    return PairConfig.DISJOINT


def config_counts(n: int) -> dict[PairConfig, int]:
    """Number of ordered dyad pairs of each configuration among ``n`` actors."""
    if n < 2:
        raise ValueError("need at least two actors")
    d = n * (n - 1)
    return {
        PairConfig.SAME: d,
        PairConfig.RECIPROCAL: d,
        PairConfig.COMMON_RECEIVER: d * (n - 2),
        PairConfig.COMMON_SENDER: d * (n - 2),
        PairConfig.SENDER_RECEIVER: 2 * d * (n - 2),
        PairConfig.DISJOINT: d * (n - 2) * (n - 3),
    }


def _within_layer(n: int, directed: bool) -> tuple[np.ndarray, np.ndarray]:
    if directed:
        mask = ~np.eye(n, dtype=bool)
        return np.nonzero(mask)
    return np.triu_indices(n, 1)


def dyad_index(n: int, R: int = 1, directed: bool = True) -> np.ndarray:
    """Canonical dyad table, shape ``(N, 3)`` with columns ``(i, j, r)``."""
    rows, cols = _within_layer(n, directed)
    m = rows.size
    out = np.empty((m * R, 3), dtype=np.int64)
    for r in range(R):
        out[r * m:(r + 1) * m, 0] = rows
        out[r * m:(r + 1) * m, 1] = cols
        out[r * m:(r + 1) * m, 2] = r
    return out


def n_dyads(n: int, directed: bool = True) -> int:
    return n * (n - 1) if directed else n * (n - 1) // 2


def to_matrix(v, n: int, R: int = 1, directed: bool = True) -> np.ndarray:
    """Expand a flat array (leading axis = dyads) to matrix form.

    Returns shape ``(R, n, n, *trailing)``; undirected input is mirrored so
    the result is symmetric.  Diagonal entries are zero.
    """
    v = np.asarray(v, dtype=float)
    m = n_dyads(n, directed)
    if v.shape[0] != m * R:
        raise DimensionError(f"expected {m * R} dyads, got {v.shape[0]}")
    rows, cols = _within_layer(n, directed)
    out = np.zeros((R, n, n) + v.shape[1:])
    blocks = v.reshape((R, m) + v.shape[1:])
    out[:, rows, cols] = blocks
    if not directed:
        out[:, cols, rows] = blocks
    return out


def to_flat(M, directed: bool = True) -> np.ndarray:
    """Inverse of :func:`to_matrix` for an ``(R, n, n, ...)`` array."""
    M = np.asarray(M, dtype=float)
    n = M.shape[1]
    rows, cols = _within_layer(n, directed)
    blocks = M[:, rows, cols]
    return blocks.reshape((-1,) + M.shape[3:])


@dataclass(frozen=True)
class RelationalDataset:
    """Complete relational regression data in canonical flat order.

    ``y`` has shape ``(N,)`` and ``X`` shape ``(N, p)`` with
    ``N = n(n-1)R`` (directed) or ``n(n-1)R/2`` (undirected).
    """

    n: int
    R: int
    directed: bool
    y: np.ndarray
    X: np.ndarray
    names: tuple = field(default=())

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        N = n_dyads(self.n, self.directed) * self.R
        if self.n < 2 or self.R < 1:
            raise DimensionError("need n >= 2 actors and R >= 1 layers")
        if y.shape != (N,) or X.shape[0] != N:
            raise DimensionError(
                f"expected {N} observations, got y{y.shape} and X{X.shape}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise IncompleteDataError("non-finite response or covariate values")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        names = tuple(self.names) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionError("one name per covariate column required")
        object.__setattr__(self, "names", names)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def dyads(self) -> np.ndarray:
        return dyad_index(self.n, self.R, self.directed)

    @classmethod
    def from_arrays(cls, Y, X, directed: bool = True, names=(), atol: float = 1e-12):
        """Build from matrix-form arrays.

        ``Y`` is ``(n, n)`` or ``(R, n, n)``; ``X`` is ``(n, n, p)`` or
        ``(R, n, n, p)``.  Diagonals are ignored.  Off-diagonal NaNs raise
        :class:`IncompleteDataError`.
        """
        Y = np.asarray(Y, dtype=float)
        X = np.asarray(X, dtype=float)
        if Y.ndim == 2:
            Y = Y[None]
        if X.ndim == 3 and X.shape[0] == Y.shape[1] and Y.shape[0] == 1:
            X = X[None]
        if X.ndim == 3:
            X = X[..., None]
        R, n, _ = Y.shape
        if X.shape[:3] != (R, n, n):
            raise DimensionError(f"X shape {X.shape} does not match Y shape {Y.shape}")
        off = ~np.eye(n, dtype=bool)
        if np.isnan(Y[:, off]).any() or np.isnan(X[:, off]).any():
            raise IncompleteDataError("missing off-diagonal dyads")
        if not directed:
            Yt = np.swapaxes(Y, 1, 2)
            Xt = np.swapaxes(X, 1, 2)
            if not (np.allclose(Y[:, off], Yt[:, off], rtol=0, atol=atol)
                    and np.allclose(X[:, off], Xt[:, off], rtol=0, atol=atol)):
                raise DimensionError("undirected arrays must be symmetric")
        return cls(n, R, directed, to_flat(Y, directed), to_flat(X, directed), names)

    def response_matrix(self) -> np.ndarray:
        return to_matrix(self.y, self.n, self.R, self.directed)

    def design_matrix(self) -> np.ndarray:
        return to_matrix(self.X, self.n, self.R, self.directed)


def vectorize(ds: RelationalDataset) -> tuple[np.ndarray, np.ndarray]:
    """Response vector and design matrix in canonical order."""
    return ds.y.copy(), ds.X.copy()


def devectorize(v, n: int, R: int = 1, directed: bool = True) -> np.ndarray:
    """Flat vector back to ``(R, n, n)`` matrix form (alias of :func:`to_matrix`)."""
    return to_matrix(v, n, R, directed)


# ---------------------------------------------------------------------------
# Aggregation identities over dyad-pair configurations
# ---------------------------------------------------------------------------


def pair_sums(A, B=None) -> np.ndarray:
    """Sums of ``a_u b_v^T`` over ordered dyad pairs of each configuration.

    ``A`` and ``B`` are directed matrix-form arrays of shape
    ``(..., n, n, p)`` and ``(..., n, n, q)`` with zero diagonals.  Returns
    shape ``(6, ..., p, q)`` indexed by :class:`PairConfig`.  Cost is
    ``O(n^2 p q)``: every sum is expressed through row sums, column sums,
    the reciprocal cross term and the grand total.
    """
    A = np.asarray(A, dtype=float)
    B = A if B is None else np.asarray(B, dtype=float)
    same = np.einsum("...ijp,...ijq->...pq", A, B)
    recip = np.einsum("...ijp,...jiq->...pq", A, B)
    rowA, rowB = A.sum(axis=-2), B.sum(axis=-2)  # (..., n, p): sum over receivers
    colA, colB = A.sum(axis=-3), B.sum(axis=-3)  # (..., n, p): sum over senders
    common_receiver = np.einsum("...jp,...jq->...pq", colA, colB) - same
    common_sender = np.einsum("...ip,...iq->...pq", rowA, rowB) - same
    sender_receiver = (
        np.einsum("...ip,...iq->...pq", rowA, colB)
        + np.einsum("...ip,...iq->...pq", colA, rowB)
        - 2.0 * recip
    )
    totA, totB = rowA.sum(axis=-2), rowB.sum(axis=-2)
    total = totA[..., :, None] * totB[..., None, :]
    disjoint = total - same - recip - common_receiver - common_sender - sender_receiver
    return np.stack([same, recip, common_receiver, common_sender, sender_receiver, disjoint])


def apply_pattern(weights, V) -> np.ndarray:
    """Multiply by a six-slot exchangeable matrix in matrix form.

    ``V`` has shape ``(..., n, n, k)`` (directed, zero diagonal); returns
    ``Omega(weights) @ V`` in the same layout, where ``weights[s]`` fills the
    entries whose dyad pair has configuration ``s``.  ``O(n^2 k)``.
    """
    w = np.asarray(weights, dtype=float)
    V = np.asarray(V, dtype=float)
    if w.shape != (6,):
        raise DimensionError("weights must have six slots")
    if V.ndim < 3 or V.shape[-2] != V.shape[-3]:
        raise DimensionError("expected matrix-form input of shape (..., n, n, k)")
    n = V.shape[-2]
    row = V.sum(axis=-2, keepdims=True)    # (..., n, 1, k): sum_j v_ij
    col = V.sum(axis=-3, keepdims=True)    # (..., 1, n, k): sum_i v_ij
    tot = row.sum(axis=-3, keepdims=True)
    Vt = np.swapaxes(V, -2, -3)
    s_recv = col - V
    s_send = row - V
    s_sr = np.swapaxes(col, -2, -3) + np.swapaxes(row, -2, -3) - 2.0 * Vt
    s_dis = tot - V - Vt - s_recv - s_send - s_sr
    out = (w[0] * V + w[1] * Vt + w[2] * s_recv + w[3] * s_send
           + w[4] * s_sr + w[5] * s_dis)
    idx = np.arange(n)
    out[..., idx, idx, :] = 0.0
    return out


def undirected_pair_sums(A, B=None) -> np.ndarray:
    """Undirected analogue of :func:`pair_sums`.

    ``A``, ``B`` are symmetric ``(..., n, n, p)`` arrays; sums run over
    ordered pairs of *unordered* dyads.  Returns ``(3, ..., p, q)`` for
    (same dyad, one shared actor, disjoint).
    """
    A = np.asarray(A, dtype=float)
    B = A if B is None else np.asarray(B, dtype=float)
    same = 0.5 * np.einsum("...ijp,...ijq->...pq", A, B)
    rowA, rowB = A.sum(axis=-2), B.sum(axis=-2)
    shared = np.einsum("...kp,...kq->...pq", rowA, rowB) - 2.0 * same
    totA, totB = 0.5 * rowA.sum(axis=-2), 0.5 * rowB.sum(axis=-2)
    disjoint = totA[..., :, None] * totB[..., None, :] - same - shared
    return np.stack([same, shared, disjoint])
