import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from acgnet.graph import (AcgHyperparams, InvalidInputError, build_graph, build_similarity_graph,
                          build_temporal_graph, combine_graphs, default_k, difference_graph,
                          row_normalize, sparsify)

import oracles


def test_identical_vectors_have_unit_similarity():
    a = build_similarity_graph([[1, 2, 2], [1, 2, 2]])
    assert a[0, 1] == pytest.approx(1.0)


def test_orthogonal_vectors_have_zero_similarity():
    assert build_similarity_graph([[1, 0], [0, 1]])[0, 1] == 0.0


def test_similarity_matches_loop_oracle(rng):
    f = rng.standard_normal((5, 8))
    np.testing.assert_allclose(build_similarity_graph(f), oracles.cosine_loop(f.tolist()),
                               atol=1e-9, rtol=0)


def test_zero_feature_row_gets_zero_similarity():
    a = build_similarity_graph([[0.0, 0.0], [1.0, 2.0], [2.0, 1.0]])
    assert np.all(a[0] == 0) and np.all(a[:, 0] == 0)
    assert a[1, 1] == 1.0 and np.all(np.isfinite(a))


def test_similarity_is_symmetric_with_unit_diagonal(rng):
    a = build_similarity_graph(rng.standard_normal((9, 4)))
    np.testing.assert_array_equal(a, a.T)
    np.testing.assert_array_equal(np.diag(a), 1.0)
    assert a.min() >= -1 and a.max() <= 1


@pytest.mark.parametrize("offset, expected", [(0, 0.0), (3, 0.3), (25, 1.0)])
def test_temporal_graph_values(offset, expected):
    a = build_temporal_graph(30, 10)
    assert a[0, offset] == pytest.approx(expected, abs=1e-15)
    assert a[offset, 0] == a[0, offset]


def test_temporal_graph_saturates_and_depends_on_offset_only():
    t, z = 23, 7
    a = build_temporal_graph(t, z)
    for i in range(t):
        for j in range(t):
            if abs(i - j) >= z:
                assert a[i, j] == 1.0
        assert a[i, i] == 0.0
    np.testing.assert_allclose(a, oracles.temporal_loop(t, z), atol=0)


@pytest.mark.parametrize("s, t, alpha, expected", [(1, 1, 1, 1), (1, 0, 1, 0.5), (0.6, 0.4, 0.5, 0.4)])
def test_combine(s, t, alpha, expected):
    assert combine_graphs([[s]], [[t]], alpha)[0, 0] == pytest.approx(expected)


def test_combine_shape_mismatch():
    with pytest.raises(InvalidInputError):
        combine_graphs(np.zeros((2, 2)), np.zeros((3, 3)), 1.0)


def test_difference_graph_is_clamped():
    d = difference_graph([[0.2, 0.9]], [[0.5, 0.1]], 1.0)
    np.testing.assert_allclose(d, [[0.0, 0.4]])


class TestSparsify:
    def test_threshold_and_topk(self, backend):
        row = [0.90, 0.87, 0.30, 0.86]
        expected = oracles.sparsify_row_loop(row, 0.85, 2)
        assert expected == [0.90, 0.87, 0.0, 0.0]
        np.testing.assert_array_equal(sparsify([row], 0.85, 2)[0], expected)

    @pytest.mark.parametrize("k", [1, 2, 3, 10])
    def test_all_below_threshold(self, backend, k):
        np.testing.assert_array_equal(sparsify([[0.5, 0.4, 0.3]], 0.85, k), [[0, 0, 0]])

    def test_ties_go_to_lower_index(self, backend):
        out = sparsify([[0.9, 0.9, 0.9, 0.9]], 0.85, 2)[0]
        np.testing.assert_array_equal(out, oracles.sparsify_row_loop([0.9] * 4, 0.85, 2))
        np.testing.assert_array_equal(out, [0.9, 0.9, 0, 0])

    def test_strict_threshold(self, backend):
        np.testing.assert_array_equal(sparsify([[0.85, 0.86]], 0.85, 2), [[0, 0.86]])

    def test_matches_oracle_on_random_rows(self, backend, rng):
        a = np.round(rng.random((40, 12)), 2)  # rounding forces plenty of ties
        for lam, k in [(0.0, 1), (0.3, 4), (0.85, 50), (0.5, 12)]:
            out = sparsify(a, lam, k)
            for i, row in enumerate(a):
                np.testing.assert_array_equal(out[i], oracles.sparsify_row_loop(list(row), lam, k))

    def test_invalid_k(self):
        with pytest.raises(InvalidInputError):
            sparsify(np.ones((2, 2)), 0.5, 0)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 15)),
              elements=st.floats(-1, 1.5, allow_nan=False)),
       st.floats(0, 0.99), st.floats(0, 0.99), st.integers(1, 15), st.integers(1, 15))
def test_sparsity_bound_and_monotonicity(a, lam1, lam2, k1, k2):
    lo_lam, hi_lam = sorted((lam1, lam2))
    lo_k, hi_k = sorted((k1, k2))
    base = sparsify(a, lo_lam, hi_k)
    assert np.all((base != 0).sum(axis=1) <= hi_k)
    assert np.all(base[base != 0] > lo_lam)
    for tighter in (sparsify(a, hi_lam, hi_k), sparsify(a, lo_lam, lo_k)):
        assert np.all((tighter != 0).sum(axis=1) <= (base != 0).sum(axis=1))


class TestRowNormalize:
    def test_positive_row(self):
        np.testing.assert_allclose(row_normalize([[0.90, 0.87, 0, 0]] + [[0] * 4] * 3)[0],
                                   [0.90 / 1.77, 0.87 / 1.77, 0, 0])
        assert 0.90 / 1.77 == pytest.approx(0.5085, abs=1e-4)

    def test_empty_row_becomes_self_loop(self):
        out = row_normalize(np.zeros((3, 3)))
        np.testing.assert_array_equal(out, np.eye(3))

    def test_equal_weights(self):
        np.testing.assert_allclose(row_normalize([[2, 2], [0, 1]]), [[0.5, 0.5], [0, 1]])

    def test_rows_sum_to_one(self, rng):
        a = np.where(rng.random((10, 10)) > 0.6, rng.random((10, 10)), 0)
        np.testing.assert_allclose(row_normalize(a).sum(axis=1), 1.0)

    def test_rejects_negative(self):
        with pytest.raises(InvalidInputError):
            row_normalize([[-1.0]])


def test_default_k():
    assert default_k(750) == 50
    assert default_k(400) == 40
    assert default_k(64) == 6
    assert default_k(5) == 1


def test_hyperparams_validation():
    with pytest.raises(InvalidInputError):
        AcgHyperparams(lam=1.0)
    with pytest.raises(InvalidInputError):
        AcgHyperparams(z=0)
    with pytest.raises(InvalidInputError):
        AcgHyperparams(k=0)
    with pytest.raises(InvalidInputError):
        AcgHyperparams(alpha=-0.1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 5)),
              elements=st.floats(0.1, 10)), st.floats(0.1, 100))
def test_cosine_scale_invariance(f, scale):
    g = f.copy()
    g[0] *= scale
    np.testing.assert_allclose(build_similarity_graph(f), build_similarity_graph(g), atol=1e-9)


def test_time_reversal_equivariance(rng):
    for _ in range(20):
        f = rng.standard_normal((11, 3))
        hp = AcgHyperparams(z=3, lam=0.2, k=3)
        fwd, _ = build_graph(f, hp)
        rev, _ = build_graph(f[::-1], hp)
        np.testing.assert_allclose(rev, fwd[::-1, ::-1], atol=1e-12)


def test_full_chain_matches_naive(rng):
    for _ in range(25):
        t = int(rng.integers(1, 13))
        f = rng.standard_normal((t, int(rng.integers(1, 7))))
        hp = AcgHyperparams(z=int(rng.integers(1, 6)), alpha=float(rng.random() * 2),
                            lam=float(rng.random() * 0.9), k=int(rng.integers(1, t + 1)))
        sparse, norm = build_graph(f, hp)
        comb = oracles.combine_loop(oracles.cosine_loop(f.tolist()),
                                    oracles.temporal_loop(t, hp.z), hp.alpha)
        expect = [oracles.sparsify_row_loop(r, hp.lam, hp.k) for r in comb]
        np.testing.assert_allclose(sparse, expect, atol=1e-9, rtol=0)
        np.testing.assert_allclose(norm, oracles.normalize_loop(expect), atol=1e-9, rtol=0)


def test_similarity_survives_huge_magnitudes(rng):
    f = rng.standard_normal((6, 4))
    np.testing.assert_allclose(build_similarity_graph(f * 1e200), build_similarity_graph(f), atol=1e-12)
