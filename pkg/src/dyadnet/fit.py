"""One-call OLS fits with a chosen standard-error estimator."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from dyadnet.arrays import (
    ArrayExchParams,
    array_dc_meat,
    array_exch_meat,
    estimate_array_params,
)
from dyadnet.core import RelationalDataset, to_matrix
from dyadnet.estimators import (
    ExchParams,
    UndirectedParams,
    dc_meat,
    estimate_exch_params,
    estimate_undirected_params,
    exch_meat,
    hc_vcov,
    ols_fit,
    sandwich_vcov,
    undirected_dc_meat,
    undirected_exch_meat,
)

__all__ = ["SEKind", "FitResult", "fit", "estimate_params", "model_meat", "dc_meat_for"]


class SEKind(str, Enum):
    HC = "hc"
    DC = "dc"
    EXCH = "exch"


@dataclass(frozen=True)
class FitResult:
    """Point estimates and the covariance of ``beta_hat`` under one SE model."""

    beta_hat: np.ndarray
    vcov: np.ndarray
    se_kind: SEKind
    residuals: np.ndarray
    names: tuple = ()
    exch_params: ExchParams | UndirectedParams | ArrayExchParams | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        """Normal-approximation intervals, shape ``(p, 2)``."""
        z = stats.norm.ppf(0.5 + level / 2)
        half = z * self.se
        return np.column_stack([self.beta_hat - half, self.beta_hat + half])


def estimate_params(residuals, ds: RelationalDataset, structure="full-exch"):
    """Exchangeable parameters appropriate to the shape of ``ds``."""
    if ds.R > 1:
        return estimate_array_params(residuals, ds.n, ds.R, structure, ds.directed)
    if ds.directed:
        return estimate_exch_params(residuals, ds.n)
    return estimate_undirected_params(to_matrix(residuals, ds.n, 1, False)[0])


def model_meat(X, params, ds: RelationalDataset) -> np.ndarray:
    """``X^T Omega(params) X`` for whichever parameter type ``params`` is."""
    if isinstance(params, ArrayExchParams):
        return array_exch_meat(X, params, ds.n, ds.R)
    if isinstance(params, UndirectedParams):
        return undirected_exch_meat(X, params, ds.n)
    return exch_meat(X, params, ds.n)


def dc_meat_for(X, residuals, ds: RelationalDataset) -> np.ndarray:
    if ds.R > 1:
        return array_dc_meat(X, residuals, ds.n, ds.R, ds.directed)
    if ds.directed:
        return dc_meat(X, residuals, ds.n)
    return undirected_dc_meat(X, residuals, ds.n)


def fit(ds: RelationalDataset, se="exch", structure="full-exch") -> FitResult:
    """OLS coefficients with HC, DC or exchangeable sandwich covariance.

    ``structure`` selects the array covariance model when ``ds.R > 1`` and
    is ignored otherwise.
    """
    kind = SEKind(se)
    beta, e = ols_fit(ds)
    X = ds.X
    params = None
    if kind is SEKind.HC:
        vcov = hc_vcov(X, e)
    elif kind is SEKind.DC:
        vcov = sandwich_vcov(X, dc_meat_for(X, e, ds))
    else:
        params = estimate_params(e, ds, structure)
        vcov = sandwich_vcov(X, model_meat(X, params, ds))
    diag = {"condition_number": float(np.linalg.cond(X.T @ X))}
    if isinstance(params, ArrayExchParams):
        diag["n_parameters"] = params.n_parameters
    return FitResult(beta, vcov, kind, e, ds.names, params, diag)
