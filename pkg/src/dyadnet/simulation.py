"""Monte Carlo coverage experiments for relational regression.

Design matrices follow a three-covariate model: intercept, a same-class
indicator ``1[x2_i = 1] 1[x2_j = 1]``, an absolute difference
``|x3_i - x3_j|`` and a dyad-level normal covariate.  Three error models
all have per-entry variance about 3.

Random streams are keyed: the covariates of design draw ``d`` come from
``SeedSequence(seed, spawn_key=(0, d))`` and the errors of replicate ``k``
from ``spawn_key=(1, d, k)``, so results do not depend on execution order.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, stats

from dyadnet.core import PairConfig, pair_sums, to_flat, to_matrix
from dyadnet.errors import ConfigError, DyadnetError
from dyadnet.estimators import estimate_exch_params

__all__ = [
    "BilinearParams",
    "SimDesign",
    "SimReport",
    "gen_covariates",
    "gen_errors_iid",
    "gen_errors_bilinear",
    "gen_errors_nonexch",
    "gen_errors",
    "bilinear_moments",
    "design_rng",
    "error_rng",
    "run_coverage",
    "worker_count",
    "gravity_panel",
]

ERROR_MODELS = ("iid", "bilinear", "nonexch", "zero")
ESTIMATORS = ("hc", "dc", "exch")


@dataclass(frozen=True)
class BilinearParams:
    """Standard deviations of the bilinear mixed-effects error model.

    ``xi_ij = a_i + b_j + z_i^T z_j + gamma_(ij) + eps_ij`` with
    ``corr(a_i, b_i) = rho_ab``.
    """

    sigma_eps: float = 0.866
    sigma_a: float = 0.957
    sigma_b: float = 0.677
    sigma_gamma: float = 0.677
    sigma_z: float = 0.677
    rho_ab: float = 0.5
    d: int = 2

    def __post_init__(self):
        if not -1 < self.rho_ab < 1:
            raise ConfigError("rho_ab must lie strictly inside (-1, 1)")
        if self.d < 0:
            raise ConfigError("latent dimension d must be >= 0")
        for name in ("sigma_eps", "sigma_a", "sigma_b", "sigma_gamma", "sigma_z"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @property
    def total_variance(self) -> float:
        return (self.sigma_a ** 2 + self.sigma_b ** 2 + self.d * self.sigma_z ** 4
                + self.sigma_gamma ** 2 + self.sigma_eps ** 2)


def bilinear_moments(p: BilinearParams) -> np.ndarray:
    """Analytic covariances in slot order (same, reciprocal, common receiver,
    common sender, sender-receiver, disjoint)."""
    sab = p.rho_ab * p.sigma_a * p.sigma_b
    return np.array([
        p.total_variance,
        2 * sab + p.d * p.sigma_z ** 4 + p.sigma_gamma ** 2,
        p.sigma_b ** 2,
        p.sigma_a ** 2,
        sab,
        0.0,
    ])


@dataclass(frozen=True)
class SimDesign:
    n: int = 40
    n_design_draws: int = 50
    n_error_reps: int = 200
    beta_true: tuple = (1.0, 1.0, 1.0, 1.0)
    error_model: str = "iid"
    seed: int = 0
    estimators: tuple = ESTIMATORS
    ci_level: float = 0.95
    bilinear: BilinearParams = field(default_factory=BilinearParams)

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if isinstance(self.bilinear, dict):
            object.__setattr__(self, "bilinear", BilinearParams(**self.bilinear))
        if self.n < 3:
            raise ConfigError("n must be >= 3")
        if self.n_design_draws < 1 or self.n_error_reps < 2:
            raise ConfigError("need >= 1 design draw and >= 2 error replicates")
        if len(self.beta_true) != 4:
            raise ConfigError("beta_true must have four entries")
        if self.error_model not in ERROR_MODELS:
            raise ConfigError(f"error_model must be one of {ERROR_MODELS}")
        if not self.estimators or any(e not in ESTIMATORS for e in self.estimators):
            raise ConfigError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def design_rng(seed: int, draw: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, draw)))


def error_rng(seed: int, draw: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, draw, rep)))


def worker_count(default: int = 1) -> int:
    """Thread cap from ``DYADNET_THREADS`` (falls back to ``default``)."""
    raw = os.environ.get("DYADNET_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return default


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _offdiag(M: np.ndarray) -> np.ndarray:
    M = np.array(M, dtype=float)
    idx = np.arange(M.shape[-1])
    M[..., idx, idx] = 0.0
    return M


def gen_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Design matrix ``(n(n-1), 4)`` in canonical directed order.

    When the class indicator column is constant, a randomly chosen actor's
    ``x2`` is flipped until it is not.
    """
    if n < 3:
        raise ConfigError("n must be >= 3")
    x2 = rng.integers(0, 2, size=n)
    while x2.sum() < 2 or x2.sum() == n:
        k = rng.integers(n)
        x2[k] = 1 - x2[k]
    x3 = rng.normal(size=n)
    x4 = rng.normal(size=(n, n))
    M = np.empty((n, n, 4))
    M[..., 0] = 1.0
    M[..., 1] = np.outer(x2, x2)
    M[..., 2] = np.abs(x3[:, None] - x3[None, :])
    M[..., 3] = x4
    return to_flat(M[None])


def gen_errors_iid(n: int, rng: np.random.Generator, variance: float = 3.0) -> np.ndarray:
    return _offdiag(rng.normal(scale=np.sqrt(variance), size=(n, n)))


def gen_errors_bilinear(n: int, params: BilinearParams, rng: np.random.Generator) -> np.ndarray:
    p = params
    u = rng.standard_normal((n, 2))
    a = p.sigma_a * u[:, 0]
    b = p.sigma_b * (p.rho_ab * u[:, 0] + np.sqrt(1 - p.rho_ab ** 2) * u[:, 1])
    z = rng.normal(scale=p.sigma_z, size=(n, p.d))
    g = np.triu(rng.normal(scale=p.sigma_gamma, size=(n, n)), 1)
    eps = rng.normal(scale=p.sigma_eps, size=(n, n))
    xi = a[:, None] + b[None, :] + z @ z.T + g + g.T + eps
    return _offdiag(xi)


def gen_errors_nonexch(n: int, rng: np.random.Generator) -> np.ndarray:
    """A random shift shared by the upper-left block of actors plus IID noise."""
    h = n // 2
    tau = rng.normal(scale=np.sqrt(9 * n / (4 * h)))
    xi = rng.normal(scale=np.sqrt(0.75), size=(n, n))
    xi[:h, :h] += tau
    return _offdiag(xi)


def gen_errors(model: str, n: int, rng: np.random.Generator,
               bilinear: BilinearParams | None = None) -> np.ndarray:
    if model == "iid":
        return gen_errors_iid(n, rng)
    if model == "bilinear":
        return gen_errors_bilinear(n, bilinear or BilinearParams(), rng)
    if model == "nonexch":
        return gen_errors_nonexch(n, rng)
    if model == "zero":
        return np.zeros((n, n))
    raise ConfigError(f"unknown error model {model!r}")


def gravity_panel(n: int = 10, R: int = 3, seed: int = 0,
                  beta=(1.0, 0.8, 0.8, -1.0, 0.5)) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Synthetic trade-style panel ``(Y, X, names)`` with ``Y`` of shape ``(R, n, n)``.

    Covariates: intercept, sender and receiver log-GDP (drifting over
    layers), log-distance and a symmetric agreement indicator.  Errors are
    bilinear within each layer plus actor and dyad effects persistent
    across layers, so they are exchangeable in actors and layers.
    """
    rng = design_rng(seed, 0)
    gdp = rng.normal(size=n)[None, :] + 0.1 * rng.normal(size=(R, n)).cumsum(axis=0)
    loc = rng.normal(size=(n, 2))
    dist = np.log1p(np.linalg.norm(loc[:, None] - loc[None, :], axis=-1))
    agree = np.triu(rng.integers(0, 2, size=(n, n)), 1)
    agree = agree + agree.T
    X = np.empty((R, n, n, 5))
    X[..., 0] = 1.0
    X[..., 1] = gdp[:, :, None]
    X[..., 2] = gdp[:, None, :]
    X[..., 3] = dist[None]
    X[..., 4] = agree[None]
    a, b = rng.normal(scale=0.5, size=(2, n))
    dyad = rng.normal(scale=0.5, size=(n, n))
    E = np.stack([gen_errors_bilinear(n, BilinearParams(), rng) for _ in range(R)])
    E = E + (a[:, None] + b[None, :] + dyad)[None]
    Y = _offdiag(X @ np.asarray(beta, dtype=float) + E)
    X[:, np.arange(n), np.arange(n)] = 0.0
    return Y, X, ("const", "log_gdp_sender", "log_gdp_receiver", "log_distance", "agreement")


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimReport:
    """Coverage results with arrays indexed ``(draw, coefficient, estimator)``.

    ``se_error`` is the mean SE minus the across-replicate SD of ``beta_hat``
    (the MC-true SE) and ``se_sd`` is the SD of the SEs.
    """

    design: SimDesign
    coverage: np.ndarray
    se_mean: np.ndarray
    se_error: np.ndarray
    se_sd: np.ndarray
    mc_sd: np.ndarray
    beta_mean: np.ndarray
    failures: tuple = ()

    @property
    def estimators(self) -> tuple:
        return self.design.estimators

    def _col(self, estimator: str) -> int:
        return self.estimators.index(estimator)

    def median_coverage(self, estimator: str) -> np.ndarray:
        return np.median(self.coverage[:, :, self._col(estimator)], axis=0)

    def coverage_quantiles(self, estimator: str, q=(0.1, 0.9)) -> np.ndarray:
        """Per-coefficient quantiles across design draws, shape ``(len(q), p)``."""
        return np.quantile(self.coverage[:, :, self._col(estimator)], q, axis=0)

    def coverage_spread(self, estimator: str, coef: int, q=(0.1, 0.9)) -> float:
        lo, hi = self.coverage_quantiles(estimator, q)[:, coef]
        return float(hi - lo)

    def summary_rows(self) -> list[dict]:
        rows = []
        for c, est in enumerate(self.estimators):
            qs = self.coverage_quantiles(est)
            med = self.median_coverage(est)
            for k in range(self.coverage.shape[1]):
                rows.append({
                    "estimator": est, "coef": f"beta{k + 1}",
                    "median_coverage": float(med[k]),
                    "q10_coverage": float(qs[0, k]), "q90_coverage": float(qs[1, k]),
                    "mean_se_error": float(self.se_error[:, k, c].mean()),
                    "mean_se_sd": float(self.se_sd[:, k, c].mean()),
                })
        return rows

    def to_dict(self) -> dict:
        return {
            "design": self.design.to_dict(),
            "summary": self.summary_rows(),
            "coverage": self.coverage.tolist(),
            "se_error": self.se_error.tolist(),
            "se_sd": self.se_sd.tolist(),
            "mc_sd": self.mc_sd.tolist(),
            "beta_mean": self.beta_mean.tolist(),
            "failures": [list(f) for f in self.failures],
        }


class _DrawContext:
    """Per-design quantities reused across error replicates."""

    def __init__(self, X: np.ndarray, n: int):
        self.X, self.n = X, n
        self.XtX = X.T @ X
        self.chol = linalg.cho_factor(self.XtX)
        self.Xm = to_matrix(X, n)[0]
        self.x_sums = pair_sums(self.Xm)[:PairConfig.DISJOINT]  # (5, p, p)

    def sandwich(self, meat: np.ndarray) -> np.ndarray:
        left = linalg.cho_solve(self.chol, meat)
        out = linalg.cho_solve(self.chol, left.T).T
        return 0.5 * (out + out.T)

    def vcovs(self, e: np.ndarray, estimators) -> dict:
        out = {}
        for est in estimators:
            if est == "hc":
                meat = (self.X * (e * e)[:, None]).T @ self.X
            elif est == "dc":
                W = self.Xm * to_matrix(e, self.n)[0][..., None]
                meat = pair_sums(W)[:PairConfig.DISJOINT].sum(axis=0)
            else:
                slots = estimate_exch_params(e, self.n).slots()[:5]
                meat = np.tensordot(slots, self.x_sums, axes=1)
            out[est] = self.sandwich(meat)
        return out


def _run_draw(design: SimDesign, draw: int):
    n, reps, ests = design.n, design.n_error_reps, design.estimators
    beta = np.asarray(design.beta_true)
    p = beta.size
    X = gen_covariates(n, design_rng(design.seed, draw))
    ctx = _DrawContext(X, n)
    z = stats.norm.ppf(0.5 + design.ci_level / 2)
    betas = np.full((reps, p), np.nan)
    ses = np.full((reps, p, len(ests)), np.nan)
    failures = []
    for k in range(reps):
        xi = to_flat(gen_errors(design.error_model, n, error_rng(design.seed, draw, k),
                                design.bilinear)[None])
        y = X @ beta + xi
        try:
            b = linalg.cho_solve(ctx.chol, X.T @ y)
            e = y - X @ b
            v = ctx.vcovs(e, ests)
        except (DyadnetError, linalg.LinAlgError, ValueError) as exc:
            failures.append((draw, k, type(exc).__name__, str(exc)))
            continue
        betas[k] = b
        for c, est in enumerate(ests):
            ses[k, :, c] = np.sqrt(np.clip(np.diag(v[est]), 0.0, None))
    ok = ~np.isnan(betas[:, 0])
    err = np.abs(betas[ok] - beta)[:, :, None]
    covered = err <= z * ses[ok] + 1e-12 * np.maximum(1.0, np.abs(beta))[None, :, None]
    mc_sd = betas[ok].std(axis=0, ddof=1) if ok.sum() > 1 else np.full(p, np.nan)
    se_mean = ses[ok].mean(axis=0)
    return (covered.mean(axis=0), se_mean, se_mean - mc_sd[:, None],
            ses[ok].std(axis=0, ddof=1), mc_sd, betas[ok].mean(axis=0), failures)


def run_coverage(design: SimDesign, workers: int | None = None) -> SimReport:
    """Coverage of normal-approximation intervals across design draws.

    Replicate failures are recorded in ``SimReport.failures`` and excluded
    rather than aborting the sweep.  ``workers`` defaults to
    :func:`worker_count`; results are identical for any worker count.
    """
    workers = worker_count() if workers is None else max(1, int(workers))
    draws = range(design.n_design_draws)
    if workers == 1:
        results = [_run_draw(design, d) for d in draws]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda d: _run_draw(design, d), draws))
    cov, se_mean, se_err, se_sd, mc_sd, bmean, fails = zip(*results)
    return SimReport(
        design,
        np.stack(cov), np.stack(se_mean), np.stack(se_err), np.stack(se_sd),
        np.stack(mc_sd), np.stack(bmean),
        tuple(f for fs in fails for f in fs),
    )
