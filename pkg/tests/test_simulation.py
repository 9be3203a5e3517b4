import numpy as np
import pytest

from dyadnet.errors import ConfigError
from dyadnet.estimators import estimate_exch_params
from dyadnet.simulation import (
    BilinearParams,
    SimDesign,
    bilinear_moments,
    design_rng,
    error_rng,
    gen_covariates,
    gen_errors_bilinear,
    gen_errors_iid,
    gen_errors_nonexch,
    run_coverage,
)


def test_covariate_columns():
    n = 12
    X = gen_covariates(n, design_rng(0, 0))
    assert X.shape == (n * (n - 1), 4)
    M = np.zeros((n, n, 4))
    M[~np.eye(n, dtype=bool)] = X
    assert np.all(X[:, 0] == 1)
    assert np.all(X[:, 2] >= 0)
    assert np.array_equal(M[..., 1], M[..., 1].T)
    assert np.ptp(X[:, 1]) > 0


class _AllOnes:
    """Generator stand-in whose Bernoulli draws are all ones."""

    def __init__(self):
        self.rng = np.random.default_rng(0)

    def integers(self, lo, hi=None, size=None):
        if size is not None:
            return np.ones(size, dtype=int)
        return self.rng.integers(lo, hi)

    def normal(self, *a, **k):
        return self.rng.normal(*a, **k)


def test_degenerate_indicator_is_flipped():
    X = gen_covariates(6, _AllOnes())
    assert np.ptp(X[:, 1]) > 0


def test_default_bilinear_total_variance():
    assert BilinearParams().total_variance == pytest.approx(3.002, abs=1e-3)
    with pytest.raises(ConfigError):
        BilinearParams(rho_ab=1.0)


def test_bilinear_reduces_to_iid():
    p = BilinearParams(sigma_a=0, sigma_b=0, sigma_z=0, sigma_gamma=0, sigma_eps=1.3)
    assert np.allclose(bilinear_moments(p), [1.69, 0, 0, 0, 0, 0])
    E = gen_errors_bilinear(30, p, error_rng(0, 0, 0))
    off = E[~np.eye(30, dtype=bool)]
    assert off.var() == pytest.approx(1.69, rel=0.1)


def test_iid_and_nonexch_moments():
    n, reps = 40, 100
    iid = np.array([gen_errors_iid(n, error_rng(1, 0, k))[~np.eye(n, dtype=bool)] for k in range(reps)])
    assert abs(iid.mean()) < 4 * np.sqrt(3 / iid.size)
    assert iid.var() == pytest.approx(3.0, rel=0.02)
    params = [estimate_exch_params(e, n).slots()[1:5] for e in iid]
    assert np.all(np.abs(np.mean(params, axis=0)) < 0.02)
    non = np.array([gen_errors_nonexch(n, error_rng(2, 0, k)) for k in range(400)])
    h = n // 2
    quad = non[:, :h, :h][:, ~np.eye(h, dtype=bool)]
    outside = non[:, h:, :h]
    assert outside.var() == pytest.approx(0.75, rel=0.05)
    assert quad.var() == pytest.approx(9 * n / (4 * h) + 0.75, rel=0.15)
    # the literal quadrant variance gives h(h-1) 9n/(4h) + 3n(n-1)/4, not 3n(n-1)
    total = non[:, ~np.eye(n, dtype=bool)].var(axis=0).sum()
    assert total == pytest.approx((h - 1) * 9 * n / 4 + 0.75 * n * (n - 1), rel=0.15)


def test_design_validation():
    with pytest.raises(ConfigError):
        SimDesign(error_model="poisson")
    with pytest.raises(ConfigError):
        SimDesign(estimators=("ols",))
    with pytest.raises(ConfigError):
        SimDesign(beta_true=(1, 1))


def test_coverage_smoke_and_determinism():
    d = SimDesign(n=10, n_design_draws=3, n_error_reps=20, error_model="bilinear", seed=7)
    a = run_coverage(d)
    b = run_coverage(d, workers=3)
    assert a.coverage.shape == (3, 4, 3)
    assert np.all((a.coverage >= 0) & (a.coverage <= 1))
    for field in ("coverage", "se_mean", "se_error", "se_sd", "mc_sd", "beta_mean"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert len(a.summary_rows()) == 12
    assert a.to_dict()["design"]["seed"] == 7


def test_zero_noise_coverage_is_degenerate():
    rep = run_coverage(SimDesign(n=8, n_design_draws=2, n_error_reps=3, error_model="zero"))
    assert np.allclose(rep.beta_mean, 1.0)
    assert np.allclose(rep.se_mean, 0.0, atol=1e-12)


def test_streams_are_keyed():
    a = error_rng(3, 1, 5).normal(size=4)
    _ = error_rng(3, 1, 4).normal(size=4)
    assert np.array_equal(a, error_rng(3, 1, 5).normal(size=4))
    assert not np.array_equal(a, error_rng(3, 2, 5).normal(size=4))
