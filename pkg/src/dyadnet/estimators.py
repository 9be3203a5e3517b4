"""OLS fitting and HC / DC / EXCH sandwich variance estimators for ``R = 1``.

All meats are computed without materialising the ``n(n-1) x n(n-1)``
covariance estimate; see :func:`dyadnet.core.pair_sums`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from dyadnet.core import (
    PairConfig,
    RelationalDataset,
    config_counts,
    n_dyads,
    pair_sums,
    to_matrix,
    undirected_pair_sums,
)
from dyadnet.errors import (
    DimensionError,
    InsufficientActorsError,
    InvalidResidualError,
    SingularDesignError,
)

__all__ = [
    "ExchParams",
    "UndirectedParams",
    "ols_fit",
    "estimate_exch_params",
    "exch_meat",
    "dc_meat",
    "sandwich_vcov",
    "hc_vcov",
    "estimate_undirected_params",
    "undirected_exch_meat",
    "undirected_dc_meat",
]


@dataclass(frozen=True)
class ExchParams:
    """Variance and four covariances of a directed exchangeable matrix."""

    sigma2: float
    phi_a: float = 0.0
    phi_b: float = 0.0
    phi_c: float = 0.0
    phi_d: float = 0.0

    def slots(self) -> np.ndarray:
        """Six-slot vector ordered as :class:`PairConfig` (disjoint = 0)."""
        return np.array([self.sigma2, self.phi_a, self.phi_b, self.phi_c, self.phi_d, 0.0])

    @classmethod
    def from_slots(cls, s) -> "ExchParams":
        s = np.asarray(s, dtype=float)
        return cls(*(float(v) for v in s[:5]))

    def scaled(self, factor: float) -> "ExchParams":
        """Covariances multiplied by ``factor``; variance unchanged."""
        return ExchParams(self.sigma2, self.phi_a * factor, self.phi_b * factor,
                          self.phi_c * factor, self.phi_d * factor)

    def as_dict(self) -> dict:
        return {"sigma2": self.sigma2, "phi_a": self.phi_a, "phi_b": self.phi_b,
                "phi_c": self.phi_c, "phi_d": self.phi_d}


@dataclass(frozen=True)
class UndirectedParams:
    """Variance ``theta`` and shared-actor covariance ``phi`` (undirected)."""

    theta: float
    phi: float = 0.0

    def as_dict(self) -> dict:
        return {"theta": self.theta, "phi": self.phi}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _residual_matrix(residuals, n: int) -> np.ndarray:
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 2:
        if e.shape != (n, n):
            raise DimensionError(f"residual matrix must be {n}x{n}")
        e = e.copy()
        np.fill_diagonal(e, 0.0)
        return e
    return to_matrix(e, n)[0]


def _check_rows(X, n: int, directed: bool = True):
    if X.shape[0] != n_dyads(n, directed):
        raise DimensionError(
            f"design has {X.shape[0]} rows, expected {n_dyads(n, directed)} for n={n}"
        )


def _rank_check(X: np.ndarray) -> None:
    p = X.shape[1]
    if X.shape[0] < p:
        raise SingularDesignError("fewer observations than covariates", range(p))
    _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    tol = d.max() * max(X.shape) * np.finfo(float).eps if d.size else 0.0
    rank = int((d > tol).sum())
    if rank < p:
        bad = sorted(int(c) for c in piv[rank:])
        raise SingularDesignError(f"design matrix rank {rank} < {p}; dependent columns {bad}", bad)


def _bread_solve(XtX: np.ndarray, M: np.ndarray) -> np.ndarray:
    try:
        c = linalg.cho_factor(XtX)
    except linalg.LinAlgError as exc:
        raise SingularDesignError("X^T X is singular") from exc
    left = linalg.cho_solve(c, M)
    out = linalg.cho_solve(c, left.T).T
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# OLS and sandwiches
# ---------------------------------------------------------------------------


def ols_fit(ds: RelationalDataset) -> tuple[np.ndarray, np.ndarray]:
    """Ordinary least squares via QR.  Returns ``(beta_hat, residuals)``."""
    X, y = ds.X, ds.y
    _rank_check(X)
    q, r = np.linalg.qr(X)
    beta = linalg.solve_triangular(r, q.T @ y)
    return beta, y - X @ beta


def sandwich_vcov(X, meat) -> np.ndarray:
    """``(X^T X)^{-1} meat (X^T X)^{-1}``, symmetrised."""
    X = _as_design(X)
    meat = np.asarray(meat, dtype=float)
    p = X.shape[1]
    if meat.shape != (p, p):
        raise DimensionError(f"meat must be {p}x{p}")
    return _bread_solve(X.T @ X, meat)


def hc_vcov(X, residuals) -> np.ndarray:
    """HC0 sandwich: diagonal meat ``sum e^2 x x^T``."""
    X = _as_design(X)
    e = np.asarray(residuals, dtype=float)
    if e.shape != (X.shape[0],):
        raise DimensionError("one residual per design row required")
    meat = (X * (e * e)[:, None]).T @ X
    return sandwich_vcov(X, meat)


def estimate_exch_params(residuals, n: int) -> ExchParams:
    """Pooled residual-product averages for the five exchangeable terms.

    ``residuals`` is the flat directed vector (length ``n(n-1)``) or an
    ``n x n`` matrix whose diagonal is ignored.
    """
    if n < 3:
        raise InsufficientActorsError("exchangeable estimation needs n >= 3")
    E = _residual_matrix(residuals, n)
    row = E.sum(axis=1)
    col = E.sum(axis=0)
    sq = E * E
    ssq = sq.sum()
    recip = (E * E.T).sum()
    d = n * (n - 1)
    m = d * (n - 2)
    sigma2 = ssq / d
    phi_a = recip / d
    phi_b = (col @ col - ssq) / m
    phi_c = (row @ row - ssq) / m
    phi_d = (row @ col - recip) / m
    return ExchParams(float(sigma2), float(phi_a), float(phi_b), float(phi_c), float(phi_d))


def exch_meat(X, params, n: int) -> np.ndarray:
    """``X^T Omega_E X`` for a directed exchangeable ``Omega_E``.

    ``params`` may be :class:`ExchParams` or a slot vector of length 5
    (disjoint covariance zero) or 6.
    """
    X = _as_design(X)
    _check_rows(X, n)
    w = params.slots() if isinstance(params, ExchParams) else np.asarray(params, dtype=float)
    if w.shape == (5,):
        w = np.r_[w, 0.0]
    elif w.shape != (6,):
        raise DimensionError(f"expected 5 or 6 slot weights, got shape {w.shape}")
    sums = pair_sums(to_matrix(X, n)[0])
    return np.tensordot(w, sums, axes=1)


def dc_meat(X, residuals, n: int) -> np.ndarray:
    """Dyadic-clustering meat: residual products over actor-sharing pairs."""
    X = _as_design(X)
    _check_rows(X, n)
    e = np.asarray(residuals, dtype=float)
    if e.shape != (X.shape[0],):
        raise DimensionError("one residual per design row required")
    W = to_matrix(X * e[:, None], n)[0]
    sums = pair_sums(W)
    return sums[:PairConfig.DISJOINT].sum(axis=0)


def dense_dc_covariance(residuals, n: int) -> np.ndarray:
    """Materialised ``ee^T`` masked to actor-sharing pairs (small ``n`` only)."""
    e = np.asarray(residuals, dtype=float)
    idx = np.argwhere(~np.eye(n, dtype=bool))
    i, j = idx[:, 0], idx[:, 1]
    share = ((i[:, None] == i[None, :]) | (i[:, None] == j[None, :])
             | (j[:, None] == i[None, :]) | (j[:, None] == j[None, :]))
    return np.outer(e, e) * share


# ---------------------------------------------------------------------------
# undirected
# ---------------------------------------------------------------------------


def estimate_undirected_params(E) -> UndirectedParams:
    """Estimate ``(theta, phi)`` from a symmetric zero-diagonal residual matrix."""
    E = np.asarray(E, dtype=float)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise InvalidResidualError("residual matrix must be square")
    n = E.shape[0]
    if n < 3:
        raise InsufficientActorsError("undirected estimation needs n >= 3")
    scale = max(1.0, np.abs(E).max())
    if np.abs(np.diag(E)).max() > 0:
        raise InvalidResidualError("residual matrix must have a zero diagonal")
    if np.abs(E - E.T).max() > 1e-12 * scale:
        raise InvalidResidualError("residual matrix must be symmetric")
    EE = E @ E
    tr = np.trace(EE)
    m = n * (n - 1) * (n - 2)
    return UndirectedParams(float(tr / (n * (n - 1))), float((EE.sum() - tr) / m))


def undirected_exch_meat(X, params: UndirectedParams, n: int) -> np.ndarray:
    X = _as_design(X)
    _check_rows(X, n, directed=False)
    sums = undirected_pair_sums(to_matrix(X, n, directed=False)[0])
    return params.theta * sums[0] + params.phi * sums[1]


def undirected_dc_meat(X, residuals, n: int) -> np.ndarray:
    X = _as_design(X)
    _check_rows(X, n, directed=False)
    e = np.asarray(residuals, dtype=float)
    W = to_matrix(X * e[:, None], n, directed=False)[0]
    sums = undirected_pair_sums(W)
    return sums[0] + sums[1]


def pair_counts(n: int) -> np.ndarray:
    """:func:`config_counts` as a length-6 array in slot order."""
    c = config_counts(n)
    return np.array([c[k] for k in PairConfig], dtype=float)
