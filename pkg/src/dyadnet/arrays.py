"""Exchangeable covariance structures for multi-layer arrays (``R > 1``).

Every structure is a map from ordered layer pairs ``(r, s)`` to a *block*
of five values ``(v0, a, b, c, d)``: ``v0`` is the variance on diagonal
blocks and the same-dyad cross-layer covariance off the diagonal; ``a..d``
follow :class:`dyadnet.core.PairConfig`.  Disjoint pairs are zero.

=================  ==========================================  ============
structure          block of layer pair (r, s)                  parameters
=================  ==========================================  ============
full-exch          0 if r == s else 1                          10
stationary         |r - s|                                     5R
unrestricted       unordered pair {r, s}                       5(C(R,2)+R)
independent        0 if r == s, cross blocks fixed at zero     5
=================  ==========================================  ============
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from dyadnet.core import PairConfig, pair_sums, to_matrix, undirected_pair_sums
from dyadnet.errors import DimensionError, InsufficientActorsError

__all__ = [
    "ArrayStructure",
    "ArrayExchParams",
    "estimate_array_params",
    "array_exch_meat",
    "array_dc_meat",
    "layer_pairs",
]


class ArrayStructure(str, Enum):
    FULL_EXCH = "full-exch"
    STATIONARY = "stationary"
    UNRESTRICTED = "unrestricted"
    LAYER_INDEPENDENT = "independent"


def layer_pairs(R: int) -> list[tuple[int, int]]:
    """Unordered layer pairs ``r <= s`` in lexicographic order."""
    return [(r, s) for r in range(R) for s in range(r, R)]


def n_blocks(structure: ArrayStructure, R: int) -> int:
    structure = ArrayStructure(structure)
    if structure in (ArrayStructure.FULL_EXCH, ArrayStructure.LAYER_INDEPENDENT):
        return 2
    if structure is ArrayStructure.STATIONARY:
        return R
    return R * (R + 1) // 2


def block_index(structure: ArrayStructure, R: int, r: int, s: int) -> int:
    structure = ArrayStructure(structure)
    if structure in (ArrayStructure.FULL_EXCH, ArrayStructure.LAYER_INDEPENDENT):
        return 0 if r == s else 1
    if structure is ArrayStructure.STATIONARY:
        return abs(r - s)
    lo, hi = min(r, s), max(r, s)
    # position of (lo, hi) in layer_pairs(R)
    return lo * R - lo * (lo - 1) // 2 + (hi - lo)


@dataclass(frozen=True)
class ArrayExchParams:
    """Block parameters of an array covariance structure.

    ``blocks`` has shape ``(n_blocks, 5)`` for directed arrays and
    ``(n_blocks, 2)`` (``theta``/same-dyad, shared-actor) for undirected.
    """

    structure: ArrayStructure
    R: int
    blocks: np.ndarray
    directed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "structure", ArrayStructure(self.structure))
        b = np.array(self.blocks, dtype=float)
        width = 5 if self.directed else 2
        if b.shape != (n_blocks(self.structure, self.R), width):
            raise DimensionError(f"blocks must have shape {(n_blocks(self.structure, self.R), width)}")
        if self.structure is ArrayStructure.LAYER_INDEPENDENT and np.any(b[1] != 0):
            raise ValueError("layer-independent structure has a zero cross-layer block")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    def block(self, r: int, s: int) -> np.ndarray:
        return self.blocks[block_index(self.structure, self.R, r, s)]

    def slots(self, r: int, s: int) -> np.ndarray:
        """Six-slot weight vector for layer pair ``(r, s)`` (directed only)."""
        return np.r_[self.block(r, s), 0.0]

    @property
    def n_parameters(self) -> int:
        """Number of free values in the structure (as counted in the literature)."""
        width = self.blocks.shape[1]
        if self.structure is ArrayStructure.LAYER_INDEPENDENT:
            return width
        return self.blocks.size

    def within(self) -> np.ndarray:
        return self.blocks[0]

    def cross(self) -> np.ndarray:
        if self.structure not in (ArrayStructure.FULL_EXCH, ArrayStructure.LAYER_INDEPENDENT):
            raise ValueError("single cross block only defined for full exchangeability")
        return self.blocks[1]

    def as_dict(self) -> dict:
        labels = ["v0", "phi_a", "phi_b", "phi_c", "phi_d"] if self.directed else ["v0", "phi"]
        if self.structure is ArrayStructure.STATIONARY:
            keys = [f"lag{k}" for k in range(self.R)]
        elif self.structure is ArrayStructure.UNRESTRICTED:
            keys = [f"layers{r}-{s}" for r, s in layer_pairs(self.R)]
        else:
            keys = ["within", "cross"]
        return {
            "structure": self.structure.value,
            "n_parameters": self.n_parameters,
            "blocks": {k: dict(zip(labels, map(float, row))) for k, row in zip(keys, self.blocks)},
        }


def _layer_residuals(residuals, n: int, R: int, directed: bool) -> np.ndarray:
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 3:
        if e.shape != (R, n, n):
            raise DimensionError(f"residual array must have shape {(R, n, n)}")
        e = e.copy()
        idx = np.arange(n)
        e[:, idx, idx] = 0.0
        return e
    return to_matrix(e, n, R, directed)


def estimate_array_params(residuals, n: int, R: int, structure="full-exch",
                          directed: bool = True) -> ArrayExchParams:
    """Average residual products within each (configuration, layer-relation) class.

    ``residuals`` is the flat vector in canonical order or an ``(R, n, n)``
    array.
    """
    structure = ArrayStructure(structure)
    if R < 2:
        raise DimensionError("use estimate_exch_params for single-layer data")
    if n < 3:
        raise InsufficientActorsError("array estimation needs n >= 3")
    if not directed and structure not in (ArrayStructure.FULL_EXCH, ArrayStructure.LAYER_INDEPENDENT):
        raise NotImplementedError("undirected arrays support full-exch/independent only")
    E = _layer_residuals(residuals, n, R, directed)[..., None]
    if directed:
        from dyadnet.core import config_counts
        counts = np.array([config_counts(n)[k] for k in PairConfig][:5], dtype=float)
        sums_fn, width = pair_sums, 5
    else:
        m = n * (n - 1) // 2
        counts = np.array([m, n * (n - 1) * (n - 2)], dtype=float)
        sums_fn, width = undirected_pair_sums, 2

    nb = n_blocks(structure, R)
    acc = np.zeros((nb, width))
    npairs = np.zeros(nb)
    # (R, R, slots): sums for every ordered layer pair
    for r in range(R):
        for s in range(R):
            k = block_index(structure, R, r, s)
            acc[k] += sums_fn(E[r], E[s])[:width, 0, 0]
            npairs[k] += 1
    blocks = acc / (npairs[:, None] * counts[None, :])
    if structure is ArrayStructure.LAYER_INDEPENDENT:
        blocks[1] = 0.0
    return ArrayExchParams(structure, R, blocks, directed)


def array_exch_meat(X, params: ArrayExchParams, n: int, R: int) -> np.ndarray:
    """``X^T Omega X`` for an array exchangeable structure, matrix free."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if params.R != R:
        raise DimensionError("parameter layer count does not match R")
    Xm = to_matrix(X, n, R, params.directed)
    width = params.blocks.shape[1]
    sums_fn = pair_sums if params.directed else undirected_pair_sums
    if params.structure in (ArrayStructure.FULL_EXCH, ArrayStructure.LAYER_INDEPENDENT):
        within = sum(sums_fn(Xm[r]) for r in range(R))[:width]
        total = sums_fn(Xm.sum(axis=0))[:width]
        return (np.tensordot(params.blocks[0], within, axes=1)
                + np.tensordot(params.blocks[1], total - within, axes=1))
    out = np.zeros((X.shape[1], X.shape[1]))
    for r in range(R):
        for s in range(R):
            out += np.tensordot(params.block(r, s), sums_fn(Xm[r], Xm[s])[:width], axes=1)
    return out


def array_dc_meat(X, residuals, n: int, R: int, directed: bool = True) -> np.ndarray:
    """Dyadic clustering across layers: all actor-sharing pairs, any layers."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    e = np.asarray(residuals, dtype=float)
    if e.shape != (X.shape[0],):
        raise DimensionError("one residual per design row required")
    W = to_matrix(X * e[:, None], n, R, directed).sum(axis=0)
    if directed:
        return pair_sums(W)[:PairConfig.DISJOINT].sum(axis=0)
    s = undirected_pair_sums(W)
    return s[0] + s[1]
