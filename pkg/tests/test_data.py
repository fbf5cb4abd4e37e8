import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lagp.data import LhsSpec, borehole, gp_sample_path, lhs_sample
from lagp.errors import ParameterError, SingularityError
from lagp.gp import Hyperparameters, correlation_matrix

# midpoint value from a 40-digit mpmath evaluation of the formula
BOREHOLE_MIDPOINT = 70.872912636818957091


class TestBorehole:
    def test_midpoint(self):
        assert borehole([0.5] * 8) == pytest.approx(BOREHOLE_MIDPOINT, rel=1e-14)

    def test_matrix_matches_rows(self):
        X = lhs_sample(LhsSpec(20, 8, 1))
        f = borehole(X)
        assert f.shape == (20,)
        assert all(borehole(x) == v for x, v in zip(X, f))

    @given(st.lists(st.floats(0, 1), min_size=8, max_size=8), st.floats(0, 0.9))
    def test_increasing_in_rw(self, x, lo):
        a, b = np.array(x), np.array(x)
        a[0], b[0] = lo, lo + 0.1
        assert borehole(b) > borehole(a) > 0

    def test_repeatable(self):
        x = np.full(8, 0.37)
        assert borehole(x) == borehole(x)

    @pytest.mark.parametrize("x", [[0.5] * 7, [0.5] * 7 + [1.01], [-0.1] + [0.5] * 7, [np.nan] * 8])
    def test_bad_input(self, x):
        with pytest.raises(ParameterError):
            borehole(x)


class TestLhs:
    def test_four_strata(self):
        U = lhs_sample(LhsSpec(4, 1, 3))
        assert sorted(np.floor(U[:, 0] * 4).astype(int)) == [0, 1, 2, 3]

    @given(st.integers(1, 300), st.integers(1, 9), st.integers(0, 2**63))
    @settings(max_examples=50)
    def test_every_stratum_once(self, n, p, seed):
        U = lhs_sample(LhsSpec(n, p, seed))
        counts = np.stack([np.bincount(np.minimum((U[:, i] * n).astype(int), n - 1), minlength=n)
                           for i in range(p)])
        assert np.all(counts == 1)

    def test_large_design_histogram(self):
        U = lhs_sample(LhsSpec(1000, 8, 11))
        for i in range(8):
            counts, _ = np.histogram(U[:, i], bins=np.linspace(0, 1, 1001))
            assert np.all(counts == 1)

    def test_seeded(self):
        a = lhs_sample(LhsSpec(50, 3, 9))
        np.testing.assert_array_equal(a, lhs_sample(LhsSpec(50, 3, 9)))
        assert not np.array_equal(a, lhs_sample(LhsSpec(50, 3, 10)))

    def test_ranges(self):
        U = lhs_sample(LhsSpec(10, 2, 0, ranges=((2.0, 4.0), (-1.0, 0.0))))
        assert np.all((U[:, 0] >= 2) & (U[:, 0] <= 4))
        assert np.all((U[:, 1] >= -1) & (U[:, 1] <= 0))
        assert sorted(np.floor((U[:, 0] - 2) / 0.2).astype(int)) == list(range(10))

    @pytest.mark.parametrize("kw", [dict(n=0, p=1), dict(n=3, p=0), dict(n=3, p=1, ranges=((1.0, 1.0),)),
                                    dict(n=3, p=2, ranges=((0.0, 1.0),))])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            LhsSpec(**kw)


class TestGpSamplePath:
    def test_single_point(self):
        hyper = Hyperparameters(0.5, 0.3)
        z = np.random.Generator(np.random.PCG64(4)).standard_normal(1)[0]
        assert gp_sample_path([[0.2, 0.4]], hyper, 4)[0] == pytest.approx(math.sqrt(1.3) * z, rel=1e-15)

    def test_seeded(self):
        X = lhs_sample(LhsSpec(30, 2, 0))
        h = Hyperparameters(0.5, 1e-6)
        np.testing.assert_array_equal(gp_sample_path(X, h, 1), gp_sample_path(X, h, 1))

    def test_covariance_monte_carlo(self):
        X = np.array([[0.1, 0.2], [0.4, 0.1], [0.3, 0.9]])
        h = Hyperparameters(0.5, 0.01)
        Y = np.stack([gp_sample_path(X, h, s) for s in range(10_000)])
        K = correlation_matrix(X, h)
        # 5% of the diagonal scale per entry
        assert np.all(np.abs(np.cov(Y.T) - K) <= 0.05 * K.diagonal().max())

    def test_not_positive_definite(self):
        with pytest.raises(SingularityError):
            gp_sample_path([[0.0], [0.0]], Hyperparameters(1.0, 0.0), 0)
