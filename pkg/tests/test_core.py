import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dyadnet.core import (
    PairConfig,
    RelationalDataset,
    apply_pattern,
    classify_pair,
    config_counts,
    devectorize,
    dyad_index,
    pair_sums,
    to_flat,
    to_matrix,
    vectorize,
)
from dyadnet.errors import DimensionError, IncompleteDataError


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((1, 2), (1, 2), PairConfig.SAME),
        ((1, 2), (2, 1), PairConfig.RECIPROCAL),
        ((1, 2), (3, 1), PairConfig.SENDER_RECEIVER),
        ((1, 2), (2, 3), PairConfig.SENDER_RECEIVER),
        ((1, 2), (1, 3), PairConfig.COMMON_SENDER),
        ((1, 2), (3, 2), PairConfig.COMMON_RECEIVER),
        ((1, 2), (3, 4), PairConfig.DISJOINT),
    ],
)
def test_classify_examples(a, b, expected):
    assert classify_pair(a, b) is expected


def test_classify_agrees_with_oracle_table():
    d = oracles.dyads(6)
    for a, b in itertools.product(d, d):
        assert int(classify_pair(a, b)) == oracles.config(a, b)


def _dyad_pairs(n):
    dyad = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda t: t[0] != t[1])
    return st.tuples(dyad, dyad)


@given(st.integers(4, 8).flatmap(lambda n: st.tuples(st.permutations(range(n)), _dyad_pairs(n))))
def test_classify_permutation_invariant(args):
    perm, (a, b) = args
    pa = (perm[a[0]], perm[a[1]])
    pb = (perm[b[0]], perm[b[1]])
    assert classify_pair(pa, pb) == classify_pair(a, b)


@given(_dyad_pairs(8))
def test_classify_closed_under_argument_swap(pair):
    a, b = pair
    assert classify_pair(a, b) == classify_pair(b, a)


@pytest.mark.parametrize("n", range(2, 11))
def test_config_counts_match_enumeration(n):
    d = oracles.dyads(n)
    brute = np.zeros(6, dtype=int)
    for a, b in itertools.product(d, d):
        brute[oracles.config(a, b)] += 1
    counts = config_counts(n)
    assert [counts[c] for c in PairConfig] == brute.tolist()
    assert sum(counts.values()) == (n * (n - 1)) ** 2


def test_config_counts_small_cases():
    c3 = config_counts(3)
    assert [c3[k] for k in PairConfig] == [6, 6, 6, 6, 12, 0]
    c2 = config_counts(2)
    assert [c2[k] for k in PairConfig] == [2, 2, 0, 0, 0, 0]
    assert sum(config_counts(4).values()) == 144


def test_vector_order():
    assert [tuple(r[:2]) for r in dyad_index(3)] == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
    assert [tuple(r[:2]) for r in dyad_index(3, directed=False)] == [(0, 1), (0, 2), (1, 2)]
    layers = dyad_index(3, R=2)[:, 2]
    assert layers.tolist() == [0] * 6 + [1] * 6


@given(st.integers(2, 7), st.integers(1, 3), st.booleans(), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_vectorize_roundtrip(n, R, directed, seed):
    rng = np.random.default_rng(seed)
    N = n * (n - 1) * R // (1 if directed else 2)
    v = rng.normal(size=N)
    M = devectorize(v, n, R, directed)
    assert np.array_equal(to_flat(M, directed), v)
    if not directed:
        assert np.array_equal(M, np.swapaxes(M, 1, 2))


def test_dataset_from_arrays(rng):
    n = 4
    Y = rng.normal(size=(n, n))
    X = rng.normal(size=(n, n, 2))
    ds = RelationalDataset.from_arrays(Y, X)
    y, Xv = vectorize(ds)
    assert y.shape == (12,) and Xv.shape == (12, 2)
    assert y[0] == Y[0, 1] and y[3] == Y[1, 0]
    assert np.allclose(ds.response_matrix()[0][~np.eye(n, dtype=bool)], Y[~np.eye(n, dtype=bool)])
    with pytest.raises(ValueError):
        ds.y[0] = 1.0


def test_dataset_missing_dyad_rejected(rng):
    Y = rng.normal(size=(4, 4))
    Y[1, 2] = np.nan
    with pytest.raises(IncompleteDataError):
        RelationalDataset.from_arrays(Y, np.ones((4, 4, 1)))
    with pytest.raises(DimensionError):
        RelationalDataset(4, 1, True, np.zeros(11), np.zeros((11, 1)))


def test_undirected_requires_symmetry(rng):
    Y = rng.normal(size=(4, 4))
    with pytest.raises(DimensionError):
        RelationalDataset.from_arrays(Y, np.ones((4, 4, 1)), directed=False)
    S = Y + Y.T
    ds = RelationalDataset.from_arrays(S, np.ones((4, 4, 1)), directed=False)
    assert ds.y.shape == (6,)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_pair_sums_match_loops(n, rng):
    A = rng.normal(size=(n * (n - 1), 2))
    B = rng.normal(size=(n * (n - 1), 3))
    sums = pair_sums(to_matrix(A, n)[0], to_matrix(B, n)[0])
    d = oracles.dyads(n)
    brute = np.zeros((6, 2, 3))
    for u, a in enumerate(d):
        for v, b in enumerate(d):
            brute[oracles.config(a, b)] += np.outer(A[u], B[v])
    assert np.allclose(sums, brute, atol=1e-10)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_apply_pattern_matches_dense(n, rng):
    w = rng.normal(size=6)
    v = rng.normal(size=(n * (n - 1), 2))
    out = to_flat(apply_pattern(w, to_matrix(v, n)))
    assert np.allclose(out, oracles.dense_omega(w, n) @ v, atol=1e-10)
