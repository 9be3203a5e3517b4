import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dyadnet.arrays import ArrayExchParams
from dyadnet.errors import NotInvertibleError
from dyadnet.estimators import ExchParams
from dyadnet.inversion import (
    apply_array_inverse,
    apply_inverse,
    build_c_matrix,
    check_pd_directed,
    check_pd_undirected,
    enforce_pd,
    enforce_pd_array,
    exch_eigenvalues,
    invert_array_exch,
    invert_exch,
)


def _array_dense(b1, b2, n, R):
    return oracles.dense_array_omega([b1, b2], R, n, lambda r, s: int(r != s))


def _random_array_blocks(rng, n, R):
    while True:
        b1 = oracles.random_pd_slots(rng)
        b2 = np.r_[rng.uniform(-0.1, 0.1, 5) * b1[0], 0.0]
        if np.linalg.eigvalsh(_array_dense(b1, b2, n, R)).min() > 0.05 * b1[0]:
            return b1, b2


# --- C matrix -----------------------------------------------------------------


def test_c_matrix_identity():
    assert np.array_equal(build_c_matrix([1, 0, 0, 0, 0, 0], 7), np.eye(6))


def test_c_matrix_first_row(rng):
    phi = rng.normal(size=6)
    n = 8
    expected = [phi[0], phi[1], 6 * phi[2], 6 * phi[3], 12 * phi[4], 30 * phi[5]]
    assert np.allclose(build_c_matrix(phi, n)[0], expected)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_c_matrix_reproduces_product_pattern(n, rng):
    phi, p = rng.normal(size=6), rng.normal(size=6)
    prod = oracles.dense_omega(p, n) @ oracles.dense_omega(phi, n)
    # first row of the product, one representative per configuration of dyad (0, 1)
    d = oracles.dyads(n)
    reps = [(0, 1), (1, 0), (2, 1), (0, 2), (1, 2), (2, 3)]
    row = [prod[0, d.index(r)] for r in reps]
    assert np.allclose(build_c_matrix(phi, n) @ p, row, atol=1e-10)


# --- single-layer inverse ------------------------------------------------------


def test_invert_identity():
    assert np.allclose(invert_exch(ExchParams(1.0), 6), np.eye(6)[0])


@pytest.mark.parametrize("n", range(3, 11))
def test_invert_matches_dense(n, rng):
    for _ in range(3):
        s = oracles.random_pd_slots(rng, n=n)
        p = invert_exch(s, n)
        dense_inv = np.linalg.inv(oracles.dense_omega(s, n))
        assert np.abs(oracles.dense_omega(p, n) - dense_inv).max() < 1e-8


@pytest.mark.parametrize("n", [4, 6, 9])
def test_dense_inverse_keeps_six_slot_pattern(n, rng):
    s = oracles.random_pd_slots(rng, n=n)
    inv = np.linalg.inv(oracles.dense_omega(s, n))
    table = oracles.config_table(n)
    for k in range(6):
        vals = inv[table == k]
        if vals.size:
            assert np.ptp(vals) < 1e-8


@given(st.integers(4, 9), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_inverse_homogeneity(n, c, seed):
    s = oracles.random_pd_slots(np.random.default_rng(seed), n=n)
    assert np.allclose(invert_exch(c * s, n), invert_exch(s, n) / c, rtol=1e-9, atol=1e-12)


def test_singular_params_rejected():
    with pytest.raises(NotInvertibleError):
        invert_exch(ExchParams(1.0, 1.0), 6)


# --- applying the inverse --------------------------------------------------------


@pytest.mark.parametrize("n", [3, 5, 7])
def test_apply_inverse(n, rng):
    m = n * (n - 1)
    v = rng.normal(size=m)
    assert np.array_equal(apply_inverse(np.eye(6)[0], v, n), v)
    assert np.allclose(apply_inverse(rng.normal(size=6), np.zeros(m), n), 0.0)
    s = oracles.random_pd_slots(rng, n=n)
    p = invert_exch(s, n)
    assert np.allclose(apply_inverse(p, v, n), oracles.dense_omega(p, n) @ v, atol=1e-10)
    assert np.allclose(oracles.dense_omega(s, n) @ apply_inverse(p, v, n), v, atol=1e-9)
    V = rng.normal(size=(m, 3))
    assert np.allclose(apply_inverse(p, V, n), oracles.dense_omega(p, n) @ V, atol=1e-10)


# --- array inverse ------------------------------------------------------------------


def test_array_inverse_block_diagonal(rng):
    s = oracles.random_pd_slots(rng, n=5)
    params = ArrayExchParams("full-exch", 3, [s[:5], np.zeros(5)])
    p1, p2 = invert_array_exch(params, 5, 3)
    assert np.allclose(p1, invert_exch(s, 5))
    assert np.allclose(p2, 0.0, atol=1e-14)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
@pytest.mark.parametrize("R", [2, 3])
def test_array_inverse_matches_dense(n, R, rng):
    b1, b2 = _random_array_blocks(rng, n, R)
    params = ArrayExchParams("full-exch", R, [b1[:5], b2[:5]])
    p1, p2 = invert_array_exch(params, n, R)
    dense_inv = np.linalg.inv(_array_dense(b1, b2, n, R))
    assert np.abs(_array_dense(p1, p2, n, R) - dense_inv).max() < 1e-8
    v = rng.normal(size=R * n * (n - 1))
    assert np.allclose(apply_array_inverse(p1, p2, v, n, R), dense_inv @ v, atol=1e-9)


# --- eigenvalues -----------------------------------------------------------------------


def test_undirected_table_example():
    chk = check_pd_undirected(0.4, 5)
    assert np.allclose(chk.eigenvalues, [3.4, 0.2, 1.4])
    assert chk.multiplicities.tolist() == [1, 5, 4]
    assert chk.positive_definite
    assert np.allclose(check_pd_undirected(0.0, 6).eigenvalues, 1.0)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_undirected_eigenvalues_match_dense(n, rng):
    for a in rng.uniform(-1 / (2 * (n - 2)), 0.5, 5):
        chk = check_pd_undirected(a, n)
        ev = np.linalg.eigvalsh(oracles.dense_undirected_omega(1.0, a, n))
        expected = np.repeat(chk.eigenvalues, chk.multiplicities)
        assert np.allclose(np.sort(expected), ev, atol=1e-8)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_undirected_pd_interval_endpoints(n):
    lo, hi = -1 / (2 * (n - 2)), 0.5
    assert not check_pd_undirected(lo - 1e-3, n).positive_definite
    assert check_pd_undirected(lo + 1e-3, n).positive_definite
    assert check_pd_undirected(hi - 1e-3, n).positive_definite
    assert not check_pd_undirected(hi + 1e-3, n).positive_definite


def test_directed_identity_and_multiplicities():
    for n in range(4, 12):
        vals, mult, _ = exch_eigenvalues([1, 0, 0, 0, 0], n)
        assert np.allclose(vals, 1.0)
        assert mult.sum() == n * (n - 1)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_directed_eigenvalues_match_dense(n, rng):
    for _ in range(5):
        s = np.r_[1.0, rng.uniform(-0.3, 0.3, 4), 0.0] * rng.uniform(0.5, 2)
        vals, mult, disc = exch_eigenvalues(s, n)
        assert disc >= 0
        expected = np.sort(np.repeat(vals[mult > 0], mult[mult > 0]))
        assert np.allclose(expected, np.linalg.eigvalsh(oracles.dense_omega(s, n)), atol=1e-8)


def test_directed_pd_flag(rng):
    assert check_pd_directed(ExchParams(1.0, 0.2, 0.1, 0.1, 0.05), 10).positive_definite
    assert not check_pd_directed(ExchParams(1.0, 0.0, -0.3, -0.3, 0.0), 10).positive_definite
    near = check_pd_directed(ExchParams(1.0, 1.0), 5)
    assert near.method == "numerical" and not near.positive_definite
    small = check_pd_directed(ExchParams(1.0, 0.1), 3)
    assert small.method == "numerical" and small.positive_definite


# --- PD enforcement -------------------------------------------------------------------


def test_enforce_pd_noop_and_shrink():
    good = ExchParams(2.0, 0.3, 0.1, 0.2, 0.05)
    assert enforce_pd(good, 20) == (good, 0)
    bad = ExchParams(1.0, 0.0, -0.3, -0.3, 0.0)
    fixed, k = enforce_pd(bad, 20)
    assert k > 0 and fixed.sigma2 == 1.0
    assert check_pd_directed(fixed, 20).positive_definite
    assert not check_pd_directed(bad.scaled(0.5 ** (k - 1)), 20).positive_definite


def test_enforce_pd_array():
    bad = ArrayExchParams("full-exch", 3, [[1.0, 0.1, 0.1, 0.1, 0.1], [0.9, 0.2, 0.2, 0.2, 0.2]])
    fixed, k = enforce_pd_array(bad, 6)
    assert k > 0 and fixed.blocks[0, 0] == 1.0
    b1, b2 = np.r_[fixed.blocks[0], 0], np.r_[fixed.blocks[1], 0]
    assert np.linalg.eigvalsh(_array_dense(b1, b2, 6, 3)).min() > 0
