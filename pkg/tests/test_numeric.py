import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from edbl.exceptions import DomainError, ShapeError
from edbl.numeric import l1_norm, make_rng, matmul, sample_beta, softmax


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


class TestMatmul:
    def test_identity(self, rng):
        a = rng.normal(size=(2, 3))
        np.testing.assert_array_equal(matmul(np.eye(2), a), a)

    def test_hand_case(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])

    def test_against_triple_loop(self, rng):
        a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_associative(self, rng):
        for _ in range(20):
            n = rng.integers(1, 6, size=4)
            a, b, c = rng.normal(size=n[:2]), rng.normal(size=n[1:3]), rng.normal(size=n[2:4])
            left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
            assert np.max(np.abs(left - right)) <= 1e-9 * max(1.0, np.max(np.abs(left)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([[0.0, 0.0, 0.0]]), [[1 / 3] * 3], atol=1e-15)

    def test_no_overflow(self):
        p = softmax([[1000.0, 0.0]])
        assert np.all(np.isfinite(p))
        assert p[0, 0] == pytest.approx(1.0)
        assert p[0, 1] < 1e-300 or p[0, 1] == 0.0

    def test_temperature_against_direct_formula(self):
        row = np.array([1.0, 2.0, 3.0])
        e = np.exp(row / 2)
        np.testing.assert_allclose(softmax(row[None], 2.0)[0], e / e.sum(), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_bad_temperature(self, t):
        with pytest.raises(DomainError):
            softmax([[1.0, 2.0]], t)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)), st.floats(-100, 100),
           st.floats(0.1, 10))
    def test_rows_sum_to_one_and_shift_invariant(self, x, c, t):
        p = softmax(x, t)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(softmax(x + c, t), p, atol=1e-12)


class TestBeta:
    def test_uniform_mean(self):
        draws = sample_beta(make_rng(0), 1, 1, size=100_000)
        assert abs(draws.mean() - 0.5) < 0.01

    def test_uniform_ks(self):
        draws = sample_beta(make_rng(1), 1, 1, size=100_000)
        assert stats.kstest(draws, "uniform").statistic < 0.01

    def test_general_shape_mean(self):
        draws = sample_beta(make_rng(2), 2.0, 5.0, size=50_000)
        assert abs(draws.mean() - 2 / 7) < 0.01
        assert stats.kstest(draws, stats.beta(2, 5).cdf).statistic < 0.01

    def test_deterministic(self):
        r1, r2 = make_rng(7), make_rng(7)
        first = [sample_beta(r1, 1, 1) for _ in range(10)]
        second = [sample_beta(r2, 1, 1) for _ in range(10)]
        assert first == second

    @pytest.mark.parametrize("a,b", [(0, 1), (1, -2)])
    def test_bad_shape(self, a, b):
        with pytest.raises(DomainError):
            sample_beta(make_rng(0), a, b)


class TestL1:
    def test_zero(self):
        assert l1_norm(np.zeros(4)) == 0

    def test_hand(self):
        assert l1_norm([1, -2, 3]) == 6

    def test_random(self, rng):
        v = rng.normal(size=(4, 5))
        # summation order differs from numpy's pairwise sum, hence the ulp-level tolerance
        assert l1_norm(v) == pytest.approx(sum(abs(x) for x in v.ravel()), rel=1e-14)


def test_equal_seeds_give_identical_draws():
    a, b = make_rng(99), make_rng(99)
    np.testing.assert_array_equal(a.normal(size=(3, 3)), b.normal(size=(3, 3)))
