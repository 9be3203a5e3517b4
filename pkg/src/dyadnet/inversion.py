"""Inverting exchangeable covariance matrices at a cost independent of ``n``.

The inverse of a directed exchangeable matrix keeps the six-slot pattern
(the disjoint slot becomes nonzero), so it is found by solving a 6 x 6
system ``C(phi, n) p = e1``.  Fully exchangeable arrays lead to a 12 x 12
system in the within- and cross-layer patterns.

Positive definiteness is screened with closed-form eigenvalues and backed
by a numerical check whenever the screen is inconclusive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dyadnet.arrays import ArrayExchParams, ArrayStructure
from dyadnet.core import apply_pattern, dyad_index, to_flat, to_matrix
from dyadnet.errors import DimensionError, NotInvertibleError
from dyadnet.estimators import ExchParams

__all__ = [
    "build_c_matrix",
    "invert_exch",
    "invert_array_exch",
    "apply_inverse",
    "apply_array_inverse",
    "dense_pattern",
    "exch_eigenvalues",
    "check_pd_undirected",
    "check_pd_directed",
    "enforce_pd",
    "enforce_pd_array",
    "EigenCheck",
]

# largest n(n-1) for which the numerical fallback materialises the matrix
_DENSE_LIMIT = 2500
_COND_LIMIT = 1e12


def _six(phi) -> np.ndarray:
    if isinstance(phi, ExchParams):
        return phi.slots()
    p = np.asarray(phi, dtype=float).ravel()
    if p.shape == (5,):
        p = np.r_[p, 0.0]
    if p.shape != (6,):
        raise DimensionError("expected five or six slot values")
    return p


def dense_pattern(slots, n: int) -> np.ndarray:
    """Materialise the ``n(n-1) x n(n-1)`` matrix with a six-slot pattern."""
    w = _six(slots)
    d = dyad_index(n)
    I, J = d[:, 0][:, None], d[:, 1][:, None]
    K, L = d[:, 0][None, :], d[:, 1][None, :]
    same = (I == K) & (J == L)
    recip = (I == L) & (J == K)
    send = (I == K) & ~same
    recv = (J == L) & ~same
    sr = ((I == L) | (J == K)) & ~recip
    cfg = np.full(same.shape, 5)
    for s, mask in enumerate([same, recip, recv, send, sr]):
        cfg[mask] = s
    return w[cfg]


def _read_pattern(M: np.ndarray, n: int) -> np.ndarray:
    """Slot values from the first row of a dense pattern matrix (dyad (0, 1))."""
    pos = {tuple(r[:2]): k for k, r in enumerate(dyad_index(n))}
    reps = [(0, 1), (1, 0), (2, 1), (0, 2), (1, 2), (2, 3)]
    return np.array([M[0, pos[r]] if r in pos else 0.0 for r in reps])


def build_c_matrix(phi, n: int) -> np.ndarray:
    """The 6 x 6 matrix mapping an inverse pattern ``p`` to the first row of ``Omega(phi) Omega(p)``."""
    p1, p2, p3, p4, p5, p6 = _six(phi)
    m2, m3, m4, m5 = n - 2, n - 3, n - 4, n - 5
    return np.array([
        [p1, p2, m2 * p3, m2 * p4, 2 * m2 * p5, m2 * m3 * p6],
        [p2, p1, m2 * p5, m2 * p5, m2 * (p3 + p4), m2 * m3 * p6],
        [p3, p5, p1 + m3 * p3, p5 + m3 * p6, p2 + p4 + m3 * (p5 + p6), m3 * (p4 + p5 + m4 * p6)],
        [p4, p5, p5 + m3 * p6, p1 + m3 * p4, p2 + p3 + m3 * (p5 + p6), m3 * (p3 + p5 + m4 * p6)],
        [p5, p4, p2 + m3 * p5, p3 + m3 * p6, p1 + p5 + m3 * (p4 + p6), m3 * (p3 + p5 + m4 * p6)],
        [p6, p6, p4 + p5 + m4 * p6, p3 + p5 + m4 * p6, p3 + p4 + 2 * p5 + 2 * m4 * p6,
         p1 + p2 + m4 * (p3 + p4 + 2 * p5 + m5 * p6)],
    ])


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _COND_LIMIT:
        raise NotInvertibleError("exchangeable covariance matrix is singular or nearly so")
    return np.linalg.solve(A, b)


def _dense_inverse(M: np.ndarray) -> np.ndarray:
    if np.linalg.cond(M) > _COND_LIMIT:
        raise NotInvertibleError("exchangeable covariance matrix is singular or nearly so")
    return np.linalg.inv(M)


def invert_exch(params, n: int) -> np.ndarray:
    """Six-slot pattern of the inverse of a directed exchangeable matrix.

    Uses the 6 x 6 system for ``n >= 4`` and a dense inverse for ``n = 3``
    (where the disjoint configuration does not exist).
    """
    phi = _six(params)
    if n < 3:
        raise DimensionError("inversion needs n >= 3")
    if n == 3:
        return _read_pattern(_dense_inverse(dense_pattern(phi, 3)), 3)
    return _solve(build_c_matrix(phi, n), np.eye(6)[0])


def _array_blocks(params: ArrayExchParams) -> tuple[np.ndarray, np.ndarray]:
    if params.structure not in (ArrayStructure.FULL_EXCH, ArrayStructure.LAYER_INDEPENDENT):
        raise NotImplementedError("closed-form inverse only for full exchangeability")
    if not params.directed:
        raise NotImplementedError("array inversion implemented for directed data")
    return np.r_[params.blocks[0], 0.0], np.r_[params.blocks[1], 0.0]


def invert_array_exch(params: ArrayExchParams, n: int, R: int) -> tuple[np.ndarray, np.ndarray]:
    """Within- and cross-layer patterns ``(p1, p2)`` of a fully exchangeable array inverse."""
    if R < 2 or params.R != R:
        raise DimensionError("array inversion needs R >= 2 matching the parameters")
    phi1, phi2 = _array_blocks(params)
    if n == 3:
        m = n * (n - 1)
        big = np.kron(np.eye(R), dense_pattern(phi1 - phi2, n)) + np.kron(np.ones((R, R)), dense_pattern(phi2, n))
        inv = _dense_inverse(big)
        return _read_pattern(inv[:m, :m], n), _read_pattern(inv[:m, m:2 * m], n)
    C1, C2 = build_c_matrix(phi1, n), build_c_matrix(phi2, n)
    A = np.block([[C1, (R - 1) * C2], [C2, C1 + (R - 2) * C2]])
    sol = _solve(A, np.eye(12)[0])
    return sol[:6], sol[6:]


def apply_inverse(p, v, n: int) -> np.ndarray:
    """``Omega^{-1}(p) v`` for flat ``v`` of length ``n(n-1)`` (or ``(n(n-1), k)``)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != n * (n - 1):
        raise DimensionError(f"expected {n * (n - 1)} rows")
    V = to_matrix(v.reshape(v.shape[0], -1), n)
    out = to_flat(apply_pattern(_six(p), V))
    return out.reshape(v.shape)


def apply_array_inverse(p1, p2, v, n: int, R: int) -> np.ndarray:
    """Apply ``I (x) P1 + (J - I) (x) P2`` to flat array data."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != R * n * (n - 1):
        raise DimensionError(f"expected {R * n * (n - 1)} rows")
    V = to_matrix(v.reshape(v.shape[0], -1), n, R)
    p1, p2 = _six(p1), _six(p2)
    out = apply_pattern(p1 - p2, V) + apply_pattern(p2, V.sum(axis=0, keepdims=True))
    return to_flat(out).reshape(v.shape)


# ---------------------------------------------------------------------------
# eigenvalues and positive definiteness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenCheck:
    """Distinct eigenvalues, their multiplicities and the PD verdict.

    ``method`` is ``"closed-form"`` or ``"numerical"``; ``anomaly`` notes
    when the closed form was inconclusive.
    """

    positive_definite: bool
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    method: str = "closed-form"
    anomaly: str = ""

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(self.eigenvalues))


def undirected_eigenvalues(a: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of the undirected exchangeable correlation matrix."""
    vals = np.array([1 + 2 * (n - 2) * a, 1 - 2 * a, 1 + (n - 4) * a])
    mult = np.array([1, n * (n - 3) // 2, n - 1])
    return vals, mult


def exch_eigenvalues(params, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Closed-form distinct eigenvalues of a directed exchangeable matrix.

    Works on the covariance scale (``sigma2`` in place of 1), so it also
    applies to patterns whose first slot is not a variance.  Returns
    ``(values, multiplicities, discriminant)``; a negative discriminant
    means the closed form does not apply and the ``+-`` pair is ``nan``.
    """
    s, a, b, c, d, _ = _six(params)
    alpha = (c * c + b * b) * (n * n - 2 * n + 1) + 4 * d * d * (n * n - 6 * n + 9) + 2 * b * c * (1 - n * n + 2 * n)
    beta = a * d * (8 * n - 24) + (b + c) * d * (12 - 4 * n) + 4 * a * (a - (b + c))
    disc = alpha + beta
    root = np.sqrt(disc) if disc >= 0 else np.nan
    mid = ((n - 3) * (b + c) - 2 * d + 2 * s) / 2
    vals = np.array([
        s + a + (n - 2) * (b + c) + 2 * (n - 2) * d,
        s + a - (b + c + 2 * d),
        s - (a + b + c) + 2 * d,
        mid + root / 2,
        mid - root / 2,
    ])
    h = (n - 1) * (n - 2) // 2
    mult = np.array([1, h - 1, h, n - 1, n - 1])
    return vals, mult, float(disc)


def _numerical(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ev = np.linalg.eigvalsh(M)
    vals, counts = np.unique(np.round(ev, 9), return_counts=True)
    return vals, counts


def _undirected_dense(a: float, n: int) -> np.ndarray:
    d = dyad_index(n, directed=False)[:, :2]
    shared = (d[:, None, :, None] == d[None, :, None, :]).any(axis=(2, 3))
    M = np.where(shared, a, 0.0)
    np.fill_diagonal(M, 1.0)
    return M


def check_pd_undirected(a: float, n: int, tol: float = 1e-6) -> EigenCheck:
    """Positive definiteness of the undirected correlation matrix with shared-actor value ``a``."""
    if n < 4:
        vals, mult = _numerical(_undirected_dense(a, n))
        return EigenCheck(bool(vals.min() > 0), vals, mult, "numerical")
    vals, mult = undirected_eigenvalues(a, n)
    keep = mult > 0
    vals, mult = vals[keep], mult[keep]
    if np.min(np.abs(vals)) < tol and n * (n - 1) // 2 <= _DENSE_LIMIT:
        nv, nm = _numerical(_undirected_dense(a, n))
        return EigenCheck(bool(nv.min() > 0), nv, nm, "numerical", "eigenvalue near zero")
    return EigenCheck(bool(vals.min() > 0), vals, mult)


def check_pd_directed(params, n: int, tol: float = 1e-6) -> EigenCheck:
    """Positive definiteness of a directed exchangeable matrix.

    ``params`` may be an :class:`ExchParams`, five correlations
    ``(1, a, b, c, d)`` or any six-slot pattern.  Falls back to a dense
    eigendecomposition for ``n = 3``, a negative discriminant or an
    eigenvalue within ``tol`` (relative to the variance slot) of zero.
    Above the dense size limit the fallback screens the spectrum of the
    6 x 6 matrix ``C``, which contains every eigenvalue of the full matrix;
    that verdict is conservative.
    """
    w = _six(params)
    scale = max(abs(w[0]), 1e-300)
    if n >= 4:
        vals, mult, disc = exch_eigenvalues(w, n)
        keep = mult > 0
        vals, mult = vals[keep], mult[keep]
        if disc >= 0 and np.min(np.abs(vals)) >= tol * scale:
            return EigenCheck(bool(vals.min() > 0), vals, mult)
        anomaly = "negative discriminant" if disc < 0 else "eigenvalue near zero"
    else:
        anomaly = "closed form needs n >= 4"
    if n * (n - 1) <= _DENSE_LIMIT:
        vals, mult = _numerical(dense_pattern(w, n))
        return EigenCheck(bool(vals.min() > 0), vals, mult, "numerical", anomaly)
    ev = np.linalg.eigvals(build_c_matrix(w, n))
    ok = bool(np.all(np.abs(ev.imag) < 1e-12) and ev.real.min() > 0)
    return EigenCheck(ok, np.sort(ev.real), np.ones(6, dtype=int), "c-matrix", anomaly)


def enforce_pd(params: ExchParams, n: int, max_halvings: int = 60) -> tuple[ExchParams, int]:
    """Halve the four covariances until the matrix is positive definite.

    Returns the (possibly shrunk) parameters and the number of halvings.
    """
    if params.sigma2 <= 0:
        raise NotInvertibleError("variance must be positive")
    for k in range(max_halvings + 1):
        cand = params.scaled(0.5 ** k)
        if check_pd_directed(cand, n).positive_definite:
            return cand, k
    return params.scaled(0.0), max_halvings + 1


def _array_pd(blocks: np.ndarray, n: int, R: int) -> bool:
    w1, w2 = np.r_[blocks[0], 0.0], np.r_[blocks[1], 0.0]
    return (check_pd_directed(w1 + (R - 1) * w2, n).positive_definite
            and check_pd_directed(w1 - w2, n).positive_definite)


def enforce_pd_array(params: ArrayExchParams, n: int, max_halvings: int = 60) -> tuple[ArrayExchParams, int]:
    """Array analogue of :func:`enforce_pd`: shrink everything except the variance.

    The array matrix is ``I (x) (W1 - W2) + J (x) W2``, so it is PD iff both
    ``W1 + (R-1) W2`` and ``W1 - W2`` are.
    """
    _array_blocks(params)
    base = np.array(params.blocks)
    if base[0, 0] <= 0:
        raise NotInvertibleError("variance must be positive")
    for k in range(max_halvings + 2):
        f = 0.5 ** k if k <= max_halvings else 0.0
        cand = base * f
        cand[0, 0] = base[0, 0]
        if _array_pd(cand, n, params.R) or k > max_halvings:
            return ArrayExchParams(params.structure, params.R, cand, params.directed), k
    raise AssertionError("unreachable")
