import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dyadnet.arrays import (
    ArrayExchParams,
    ArrayStructure,
    array_dc_meat,
    array_exch_meat,
    estimate_array_params,
    layer_pairs,
)
from dyadnet.core import to_flat
from dyadnet.errors import DimensionError
from dyadnet.estimators import ExchParams, dc_meat, exch_meat

KEYS = {
    "full-exch": lambda r, s: int(r != s),
    "stationary": lambda r, s: abs(r - s),
    "unrestricted": lambda r, s: (min(r, s), max(r, s)),
}


def _residuals(rng, n, R):
    E = rng.normal(size=(R, n, n))
    E[:, np.arange(n), np.arange(n)] = 0.0
    return E


def _block_keys(structure, R):
    if structure == "unrestricted":
        return layer_pairs(R)
    if structure == "stationary":
        return list(range(R))
    return [0, 1]


def test_zero_residuals_give_zero_params():
    p = estimate_array_params(np.zeros(24), 4, 2)
    assert np.all(p.blocks == 0)


@pytest.mark.parametrize("structure", ["full-exch", "stationary", "unrestricted"])
@pytest.mark.parametrize("n, R", [(4, 2), (4, 3), (3, 3)])
def test_params_match_brute_force(structure, n, R, rng):
    E = _residuals(rng, n, R)
    means = oracles.loop_array_means(E, n, R, KEYS[structure])
    got = estimate_array_params(E, n, R, structure)
    for b, key in enumerate(_block_keys(structure, R)):
        for s in range(5):
            assert got.blocks[b, s] == pytest.approx(means[(key, s)], abs=1e-12)


def test_flat_and_array_inputs_agree(rng):
    E = _residuals(rng, 5, 2)
    a = estimate_array_params(E, 5, 2)
    b = estimate_array_params(to_flat(E[..., None])[:, 0], 5, 2)
    assert np.allclose(a.blocks, b.blocks)


def test_parameter_counts():
    assert ArrayExchParams("full-exch", 3, np.zeros((2, 5))).n_parameters == 10
    assert ArrayExchParams("stationary", 4, np.zeros((4, 5))).n_parameters == 20
    assert ArrayExchParams("unrestricted", 3, np.zeros((6, 5))).n_parameters == 30
    assert ArrayExchParams("independent", 3, np.zeros((2, 5))).n_parameters == 5


def test_stationary_and_full_telescoping(rng):
    n, R = 4, 3
    E = _residuals(rng, n, R)
    unr = estimate_array_params(E, n, R, "unrestricted")
    sta = estimate_array_params(E, n, R, "stationary")
    full = estimate_array_params(E, n, R, "full-exch")
    lag1 = (unr.block(0, 1) + unr.block(1, 2)) / 2
    assert np.allclose(sta.blocks[1], lag1, atol=1e-12)
    # cross block: ordered-pair counts 2(R-k) for lag k
    w = np.array([2 * (R - k) for k in range(1, R)], dtype=float)
    assert np.allclose(full.blocks[1], w @ sta.blocks[1:] / w.sum(), atol=1e-12)
    assert np.allclose(full.blocks[0], sta.blocks[0])


def test_r1_rejected():
    with pytest.raises(DimensionError):
        estimate_array_params(np.zeros(12), 4, 1)


@given(st.integers(3, 6), st.integers(2, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_full_exch_permutation_invariant(n, R, seed):
    rng = np.random.default_rng(seed)
    E = _residuals(rng, n, R)
    perm, lperm = rng.permutation(n), rng.permutation(R)
    F = E[lperm][:, perm][:, :, perm]
    a = estimate_array_params(E, n, R).blocks
    b = estimate_array_params(F, n, R).blocks
    assert np.allclose(a, b, atol=1e-12)


@given(st.integers(3, 6), st.integers(2, 4), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_structured_params_actor_invariant_stationary_reversal(n, R, seed):
    rng = np.random.default_rng(seed)
    E = _residuals(rng, n, R)
    perm = rng.permutation(n)
    F = E[:, perm][:, :, perm]
    for s in ("stationary", "unrestricted"):
        assert np.allclose(estimate_array_params(E, n, R, s).blocks,
                           estimate_array_params(F, n, R, s).blocks, atol=1e-12)
    assert np.allclose(estimate_array_params(E, n, R, "stationary").blocks,
                       estimate_array_params(E[::-1], n, R, "stationary").blocks, atol=1e-12)


@pytest.mark.parametrize("structure", ["full-exch", "stationary", "unrestricted", "independent"])
@pytest.mark.parametrize("n, R", [(4, 2), (4, 3), (5, 2)])
def test_exch_meat_matches_dense(structure, n, R, rng):
    m = n * (n - 1)
    X = rng.normal(size=(R * m, 3))
    E = _residuals(rng, n, R)
    params = estimate_array_params(E, n, R, structure)
    blocks = [np.r_[b, 0.0] for b in params.blocks]
    key = KEYS.get(structure, KEYS["full-exch"])
    keys = _block_keys(structure, R)
    Om = oracles.dense_array_omega(blocks, R, n, lambda r, s: keys.index(key(r, s)))
    assert np.allclose(array_exch_meat(X, params, n, R), X.T @ Om @ X, atol=1e-10)


def test_exch_meat_trivial_cases(rng):
    n, R = 4, 2
    X = rng.normal(size=(R * 12, 2))
    unit = ArrayExchParams("full-exch", R, [[1, 0, 0, 0, 0], [0, 0, 0, 0, 0]])
    assert np.allclose(array_exch_meat(X, unit, n, R), X.T @ X)
    w = [1.3, 0.2, -0.1, 0.3, 0.05]
    ind = ArrayExchParams("independent", R, [w, [0] * 5])
    per_layer = sum(exch_meat(X[r * 12:(r + 1) * 12], ExchParams(*w), n) for r in range(R))
    assert np.allclose(array_exch_meat(X, ind, n, R), per_layer)


@pytest.mark.parametrize("n, R", [(3, 2), (4, 2), (4, 3)])
def test_dc_meat_matches_loop(n, R, rng):
    X = rng.normal(size=(R * n * (n - 1), 2))
    e = rng.normal(size=R * n * (n - 1))
    assert np.allclose(array_dc_meat(X, e, n, R), oracles.loop_array_dc_meat(X, e, n, R), atol=1e-10)


def test_dc_meat_reductions(rng):
    X = rng.normal(size=(20, 2))
    e = rng.normal(size=20)
    assert np.allclose(array_dc_meat(X, e, 5, 1), dc_meat(X, e, 5))
    assert np.allclose(array_dc_meat(X, np.zeros(20), 5, 1), 0.0)


@pytest.mark.parametrize("n", [4, 5])
def test_array_dc_covariance_rank_bound(n, rng):
    for _ in range(5):
        e = rng.normal(size=2 * n * (n - 1))
        assert oracles.numerical_rank(oracles.dense_array_dc(e, n, 2)) <= n * (n - 1) // 2


def test_undirected_full_exch_meat_matches_dense(rng):
    n, R = 5, 2
    d = oracles.udyads(n)
    m = len(d)
    E = np.zeros((R, n, n))
    for r in range(R):
        A = rng.normal(size=(n, n))
        E[r] = A + A.T
        np.fill_diagonal(E[r], 0)
    params = estimate_array_params(E, n, R, "full-exch", directed=False)
    (t1, f1), (t2, f2) = params.blocks
    # within: same dyad theta, shared phi; cross: same dyad t2, shared f2
    W = oracles.dense_undirected_omega(t1, f1, n)
    C = oracles.dense_undirected_omega(t2, f2, n)
    Om = np.block([[W, C], [C, W]])
    e = np.concatenate([[E[r][a] for a in d] for r in range(R)])
    same_cross = np.mean([E[0][a] * E[1][a] for a in d])
    assert t2 == pytest.approx(same_cross)
    assert t1 == pytest.approx(np.mean(e ** 2))
    X = rng.normal(size=(R * m, 2))
    assert np.allclose(array_exch_meat(X, params, n, R), X.T @ Om @ X, atol=1e-10)
