import numpy as np
import pytest

from lagp import local
from lagp.data import LhsSpec, lhs_sample
from lagp.errors import NumericalError, ParameterError, PartialDesignError
from lagp.gp import (
    Design,
    Hyperparameters,
    build_gp,
    default_theta_bounds,
    log_marginal_likelihood,
    mle_theta,
    predict,
)
from lagp.local import LocalDesignParams, local_design, local_fit, nearest_neighbors
from oracles import unscaled_variance


def smooth(X):
    return np.sin(4 * X[:, 0]) * np.cos(3 * X[:, 1]) + X[:, 0] * X[:, 1]


def smooth_design(N, seed):
    X = lhs_sample(LhsSpec(N, 2, seed))
    return Design(X, smooth(X))


class TestNearestNeighbors:
    def test_one_dimensional(self):
        d = Design([0.0, 1.0, 2.0, 3.0], np.zeros(4))
        assert list(nearest_neighbors(d, [1.1], 2)) == [1, 2]

    def test_reference_on_a_row(self):
        rng = np.random.default_rng(0)
        d = Design(rng.random((50, 3)), np.zeros(50))
        assert nearest_neighbors(d, d.inputs[17], 5)[0] == 17

    def test_ties_by_lowest_index(self):
        d = Design([[1.0], [-1.0], [1.0], [-1.0], [5.0]], np.zeros(5))
        for use_tree in (False, True):
            assert list(nearest_neighbors(d, [0.0], 4, use_tree=use_tree)) == [0, 1, 2, 3]

    @pytest.mark.parametrize("use_tree", [False, True])
    def test_matches_full_sort(self, use_tree):
        rng = np.random.default_rng(1)
        # rounded coordinates create many exact distance ties
        X = np.round(rng.random((3000, 2)) * 20) / 20
        d = Design(X, np.zeros(3000))
        for _ in range(20):
            x = np.round(rng.random(2) * 20) / 20
            d2 = ((X - x) ** 2).sum(1)
            ref = np.lexsort((np.arange(3000), d2))[:137]
            np.testing.assert_array_equal(nearest_neighbors(d, x, 137, use_tree=use_tree), ref)

    def test_bad_m(self):
        d = Design([0.0, 1.0], [0.0, 0.0])
        with pytest.raises(ParameterError):
            nearest_neighbors(d, [0.0], 3)
        with pytest.raises(ParameterError):
            nearest_neighbors(d, [0.0], 0)
        with pytest.raises(ParameterError):
            nearest_neighbors(d, [0.0, 1.0], 1)


class TestParams:
    @pytest.mark.parametrize("kw", [
        dict(n0=1, n=10), dict(n0=10, n=10), dict(n=1024), dict(n=20, n_close=19),
        dict(stages=0), dict(method="mspe"), dict(theta0=0.0), dict(eta=-1.0),
        dict(theta_bounds=(1.0, 0.5)),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            LocalDesignParams(**kw)

    def test_pool_default(self):
        p = LocalDesignParams(n=40)
        assert p.pool_size(100_000) == 4000
        assert p.pool_size(1000) == 960
        with pytest.raises(ParameterError):
            p.pool_size(60)


def greedy_oracle(design, x, n0, n, theta, eta):
    """Step-by-step argmax of the brute-force variance reduction."""
    X = design.inputs
    d2 = ((X - x) ** 2).sum(1)
    order = list(np.lexsort((np.arange(design.N), d2)))
    chosen = order[:n0]
    while len(chosen) < n:
        v0 = unscaled_variance(X[chosen], x, theta, eta)
        best, best_gain = None, -np.inf
        for c in order[n0:]:
            if c in chosen:
                continue
            gain = v0 - unscaled_variance(X[chosen + [c]], x, theta, eta)
            if gain > best_gain:
                best, best_gain = c, gain
        chosen.append(best)
    return chosen


class TestLocalDesign:
    @pytest.mark.parametrize("evaluator", ["serial", "batch"])
    def test_matches_brute_force_greedy(self, backend, evaluator):
        rng = np.random.default_rng(2)
        design = Design(rng.random((30, 2)), rng.standard_normal(30))
        params = LocalDesignParams(n0=6, n=8, n_close=30)
        for _ in range(5):
            x = rng.random(2)
            s = local_design(design, x, params, 0.1, evaluator=evaluator, backend=backend)
            assert list(s.chosen_indices) == greedy_oracle(design, x, 6, 8, 0.1, params.eta)

    def test_nn_method(self):
        design = smooth_design(500, 3)
        x = np.array([0.4, 0.6])
        s = local_design(design, x, LocalDesignParams(n=10, method="nn"), 0.05)
        assert list(s.chosen_indices) == list(nearest_neighbors(design, x, 10))

    def test_variance_never_increases(self):
        design = smooth_design(3000, 4)
        x = np.array([0.31, 0.72])
        params = LocalDesignParams(n0=6, n=40, n_close=400)
        s = local_design(design, x, params, 0.02)
        idx = list(s.chosen_indices)
        v = [unscaled_variance(design.inputs[idx[:j]], x, 0.02, params.eta) for j in range(6, 41)]
        assert np.all(np.diff(v) <= 1e-10)

    def test_pool_discipline(self):
        design = smooth_design(3000, 5)
        rng = np.random.default_rng(5)
        params = LocalDesignParams(n0=6, n=30, n_close=200)
        for _ in range(5):
            x = rng.random(2)
            s = local_design(design, x, params, 0.05)
            pool = set(nearest_neighbors(design, x, 200).tolist())
            assert set(s.chosen_indices) <= pool
            assert len(set(s.chosen_indices)) == 30

    def test_reaches_beyond_the_neighbour_ring(self):
        g = np.linspace(0, 1, 200)
        X = np.array(np.meshgrid(g, g)).reshape(2, -1).T
        design = Design(X, smooth(X))
        x = np.array([0.5012, 0.4987])
        params = LocalDesignParams(n0=6, n=50, n_close=1000)
        s = local_design(design, x, params, 0.01)
        near = set(nearest_neighbors(design, x, 50).tolist())
        assert any(i not in near for i in s.chosen_indices)

    def test_partial_design_on_exhausted_pool(self):
        # every candidate duplicates an initial row, so none can be added
        X = np.tile(np.array([[0.0, 0.0], [0.2, 0.0]]), (5, 1))
        design = Design(X, np.arange(10.0))
        params = LocalDesignParams(n0=2, n=4, n_close=10, eta=0.0)
        with pytest.raises(PartialDesignError) as info:
            local_design(design, [0.1, 0.0], params, 0.5)
        assert (info.value.reached, info.value.requested) == (2, 4)

    def test_bad_evaluator(self):
        design = smooth_design(100, 6)
        with pytest.raises(ParameterError):
            local_design(design, [0.5, 0.5], LocalDesignParams(n=10), 0.1, evaluator="gpu")


class TestLocalFit:
    def test_deterministic(self):
        design = smooth_design(2000, 7)
        params = LocalDesignParams(n=30, n_close=300)
        a = local_fit(design, [0.2, 0.9], params)
        b = local_fit(design, [0.2, 0.9], params)
        assert a.state.chosen_indices == b.state.chosen_indices
        assert a.theta_hat == b.theta_hat
        assert a.prediction == b.prediction

    def test_evaluators_agree(self):
        design = smooth_design(2000, 8)
        # a larger nugget keeps the local matrices well conditioned
        params = LocalDesignParams(n=30, n_close=300, eta=1e-4)
        a = local_fit(design, [0.6, 0.3], params, evaluator="serial")
        b = local_fit(design, [0.6, 0.3], params, evaluator="batch")
        assert a.state.chosen_indices == b.state.chosen_indices
        assert abs(a.prediction.mean - b.prediction.mean) <= 1e-12

    def test_invariants(self):
        design = smooth_design(2000, 9)
        fit = local_fit(design, [0.5, 0.5], LocalDesignParams(n=25, n_close=250))
        assert len(fit.state.chosen_indices) == 25
        assert fit.prediction.dof == 25
        assert fit.stage_count == 2
        assert not fit.mle_failed
        assert set(fit.timing) == {"design", "mle"}

    def test_single_stage_nn_is_plain_local_kriging(self):
        design = smooth_design(1000, 10)
        x = np.array([0.45, 0.55])
        params = LocalDesignParams(n=20, n_close=100, stages=1, method="nn", theta0=0.05)
        fit = local_fit(design, x, params)
        idx = nearest_neighbors(design, x, 20)
        sub = design.subset(idx)
        lo, hi = default_theta_bounds(sub.inputs)
        theta = mle_theta(sub, min(max(0.05, lo), hi), (lo, hi), params.eta).theta_hat
        ref = predict(build_gp(sub, Hyperparameters(theta, params.eta)), x)
        assert fit.theta_hat == theta
        assert fit.prediction == ref

    def test_mle_improves_likelihood(self):
        design = smooth_design(2000, 11)
        x = np.array([0.7, 0.2])
        params = LocalDesignParams(n=30, n_close=300, stages=1, theta0=0.03)
        fit = local_fit(design, x, params)
        sub = design.subset(fit.state.chosen_indices)
        lo, hi = default_theta_bounds(sub.inputs)
        start = min(max(0.03, lo), hi)
        before = log_marginal_likelihood(build_gp(sub, Hyperparameters(start, params.eta)))
        assert log_marginal_likelihood(fit.state) >= before - 1e-10

    def test_mle_failure_falls_back(self, monkeypatch):
        def broken(*args, **kwargs):
            raise NumericalError("forced", 1.0)

        monkeypatch.setattr(local, "mle_theta", broken)
        design = smooth_design(500, 12)
        fit = local_fit(design, [0.5, 0.5], LocalDesignParams(n=20, n_close=100, theta0=0.04))
        assert fit.mle_failed
        assert fit.theta_hat == 0.04
        assert len(fit.warnings) == 2

    def test_default_theta0_is_pool_mean_squared_distance(self, monkeypatch):
        seen = []
        real = local.local_design

        def spy(design, x, params, theta_x, **kw):
            seen.append(theta_x)
            return real(design, x, params, theta_x, **kw)

        monkeypatch.setattr(local, "local_design", spy)
        design = smooth_design(800, 13)
        x = np.array([0.3, 0.3])
        local_fit(design, x, LocalDesignParams(n=20, n_close=120))
        pool = nearest_neighbors(design, x, 120)
        assert seen[0] == pytest.approx(((design.inputs[pool] - x) ** 2).sum(1).mean())

    def test_alc_beats_nearest_neighbours(self):
        design = smooth_design(4000, 14)
        rng = np.random.default_rng(14)
        P = rng.random((100, 2)) * 0.9 + 0.05
        truth = smooth(P)
        errs = {}
        for method in ("alc", "nn"):
            params = LocalDesignParams(n=30, n_close=300, method=method)
            pred = np.array([local_fit(design, x, params).prediction.mean for x in P])
            errs[method] = np.mean((pred - truth) ** 2)
        assert errs["alc"] <= errs["nn"]
