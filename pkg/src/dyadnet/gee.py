"""Generalized estimating equations with an exchangeable working covariance.

Alternates a weighted least-squares step, with weights the inverse of the
current exchangeable covariance, and re-estimation of that covariance from
the new residuals.  The inverse is never materialised.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from dyadnet.arrays import ArrayExchParams, ArrayStructure
from dyadnet.core import RelationalDataset
from dyadnet.errors import SingularDesignError
from dyadnet.estimators import ExchParams, ols_fit
from dyadnet.fit import SEKind, dc_meat_for, estimate_params, model_meat
from dyadnet.inversion import (
    apply_array_inverse,
    apply_inverse,
    enforce_pd,
    enforce_pd_array,
    invert_array_exch,
    invert_exch,
)

__all__ = ["GeeConfig", "GeeResult", "gee_fit"]


@dataclass(frozen=True)
class GeeConfig:
    """Iteration controls.

    Convergence is declared when ``max|beta_new - beta| <= tol * max(1, max|beta_new|)``.
    ``structure`` only matters for arrays (``R > 1``), where just
    ``"full-exch"`` has a fast inverse.
    """

    max_iter: int = 100
    tol: float = 1e-8
    structure: str = "full-exch"
    se_kind: str = "exch"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        SEKind(self.se_kind)


@dataclass(frozen=True)
class GeeResult:
    beta_hat: np.ndarray
    vcov: np.ndarray
    iterations: int
    converged: bool
    param_trajectory: list = field(default_factory=list)
    shrink_events: int = 0
    residuals: np.ndarray | None = None
    last_change: float = np.nan

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))


class _Weights:
    """Applies ``W = Omega^{-1}`` for single-layer or fully exchangeable array params."""

    def __init__(self, params, ds: RelationalDataset):
        self.ds = ds
        if isinstance(params, ArrayExchParams):
            self.p = invert_array_exch(params, ds.n, ds.R)
        else:
            self.p = invert_exch(params, ds.n)

    def __call__(self, V: np.ndarray) -> np.ndarray:
        if self.ds.R > 1:
            return apply_array_inverse(*self.p, V, self.ds.n, self.ds.R)
        return apply_inverse(self.p, V, self.ds.n)


def _identity_like(ds: RelationalDataset):
    if ds.R > 1:
        return ArrayExchParams(ArrayStructure.FULL_EXCH, ds.R, [[1, 0, 0, 0, 0], [0] * 5])
    return ExchParams(1.0)


def _make_pd(params, ds):
    if isinstance(params, ArrayExchParams):
        if params.blocks[0, 0] <= 0:
            return _identity_like(ds), 0
        return enforce_pd_array(params, ds.n)
    if params.sigma2 <= 0:
        return _identity_like(ds), 0
    return enforce_pd(params, ds.n)


def _blend(old, new, step: float):
    if step >= 1.0:
        return new
    if isinstance(new, ArrayExchParams):
        return ArrayExchParams(new.structure, new.R, old.blocks + step * (new.blocks - old.blocks))
    return ExchParams.from_slots(old.slots() + step * (new.slots() - old.slots()))


def _weighted_step(ds: RelationalDataset, W: _Weights):
    WX = W(ds.X)
    A = WX.T @ ds.X
    A = 0.5 * (A + A.T)
    try:
        c = linalg.cho_factor(A)
    except linalg.LinAlgError as exc:
        raise SingularDesignError("weighted normal equations are singular") from exc
    return linalg.cho_solve(c, WX.T @ ds.y), WX, c


def gee_fit(ds: RelationalDataset, cfg: GeeConfig | None = None, working=None) -> GeeResult:
    """Exchangeable GEE starting from OLS.

    Parameters
    ----------
    ds : RelationalDataset
        Directed data; ``R > 1`` uses the fully exchangeable array model.
    cfg : GeeConfig, optional
    working : ExchParams or ArrayExchParams, optional
        Fixed working covariance.  When given, the weights are not
        re-estimated and a single weighted solve is performed.

    Returns
    -------
    GeeResult
        ``converged`` is False when ``max_iter`` is exhausted; the last
        iterate is still returned.
    """
    cfg = cfg or GeeConfig()
    if not ds.directed:
        raise NotImplementedError("GEE is implemented for directed data")
    structure = ArrayStructure(cfg.structure)
    if ds.R > 1 and structure is not ArrayStructure.FULL_EXCH:
        raise NotImplementedError("array GEE needs the full-exch working structure")

    beta, e = ols_fit(ds)
    shrinks = 0
    if working is not None:
        params, k = _make_pd(working, ds)
        shrinks += k
        beta, WX, chol = _weighted_step(ds, _Weights(params, ds))
        e = ds.y - ds.X @ beta
        trajectory, it, converged, change = [params], 1, True, 0.0
    else:
        params = estimate_params(e, ds, structure)
        trajectory = [params]
        converged, change, it = False, np.inf, 0
        step, rises = 1.0, 0
        pd_params, k = _make_pd(params, ds)
        shrinks += k
        for it in range(1, cfg.max_iter + 1):
            new_beta, WX, chol = _weighted_step(ds, _Weights(pd_params, ds))
            prev_change = change
            change = float(np.max(np.abs(new_beta - beta)) / max(1.0, np.max(np.abs(new_beta))))
            beta = new_beta
            e = ds.y - ds.X @ beta
            if change <= cfg.tol:
                converged = True
                break
            rises = rises + 1 if change > prev_change else 0
            if rises >= 3:
                step, rises = step / 2, 0
            params = _blend(params, estimate_params(e, ds, structure), step)
            trajectory.append(params)
            pd_params, k = _make_pd(params, ds)
            shrinks += k

    kind = SEKind(cfg.se_kind)
    if kind is SEKind.HC:
        meat = (WX * (e * e)[:, None]).T @ WX
    elif kind is SEKind.DC:
        meat = dc_meat_for(WX, e, ds)
    else:
        meat = model_meat(WX, estimate_params(e, ds, structure), ds)
    left = linalg.cho_solve(chol, meat)
    vcov = linalg.cho_solve(chol, left.T).T
    vcov = 0.5 * (vcov + vcov.T)
    return GeeResult(beta, vcov, it, converged, trajectory, shrinks, e, change)
