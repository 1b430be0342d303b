import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bisect_root
from retel.model import Dataset, ModelError, MomentMatrix, PseudoData, aetel_augment, centered, evaluate_moments, figure2, invariant_mean, mean_fn
from retel.solver import (
    SolverError,
    SolverSettings,
    Status,
    el_residual,
    etel_residual,
    retel_residual,
    solve_el,
    solve_etel,
    solve_retel,
    solve_wetel,
)
from retel.stats import normal_quantile_grid


def pen(mu, s=1.0, tau=1.0):
    return (np.atleast_1d(np.asarray(mu, float)), np.atleast_2d(s), math.log(tau))


class TestEtel:
    def test_closed_form(self):
        sol = solve_etel(MomentMatrix([-1.5, 0.5]))
        assert sol.status is Status.CONVERGED
        oracle = bisect_root(lambda l: -1.5 * math.exp(-1.5 * l) + 0.5 * math.exp(0.5 * l), -5, 5)
        assert sol.lam[0] == pytest.approx(oracle, abs=1e-12)
        assert sol.lam[0] == pytest.approx(math.log(3) / 2, abs=1e-12)

    def test_symmetric_zero(self):
        sol = solve_etel(MomentMatrix([-1.0, 1.0]))
        assert sol.converged and sol.iterations == 0 and sol.lam[0] == 0.0

    def test_diverged_with_and_without_screen(self):
        M = MomentMatrix([-3.0, -1.0])
        assert solve_etel(M).status is Status.DIVERGED
        assert solve_etel(M, SolverSettings(hull_screen=False)).status is Status.DIVERGED

    def test_diverged_2d_without_screen(self):
        M = MomentMatrix([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        assert solve_etel(M, SolverSettings(hull_screen=False)).status is Status.DIVERGED

    def test_max_iterations(self):
        sol = solve_etel(MomentMatrix([-1.0, 1e-3, 2.0, 5.0]), SolverSettings(max_iter=1, hull_screen=False, grad_tol=1e-14))
        assert sol.status is Status.MAX_ITERATIONS

    def test_input_errors(self):
        with pytest.raises(ModelError):
            solve_etel(MomentMatrix(np.empty((0, 1))))
        with pytest.raises(ModelError):
            solve_etel(MomentMatrix([1.0, np.inf]))

    def test_monotone_descent(self, rng):
        for _ in range(50):
            g = rng.normal(size=(12, 2)) + rng.normal(size=2) * 0.8
            sol = solve_etel(MomentMatrix(g))
            h = sol.history
            assert np.all(np.diff(h) <= 4e-16 * (1 + np.abs(h[:-1])))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-20, -0.01), st.floats(0.01, 20))
    def test_two_point_weights(self, g1, g2):
        sol = solve_etel(MomentMatrix([g1, g2]))
        a = np.array([g1, g2]) * sol.lam[0]
        w = np.exp(a - a.max())
        w /= w.sum()
        np.testing.assert_allclose(w, [g2 / (g2 - g1), -g1 / (g2 - g1)], rtol=0, atol=1.01e-10 / (g2 - g1) + 1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 4))
    def test_residual_independent(self, seed, p):
        g = np.random.default_rng(seed).normal(size=(30, p))
        sol = solve_etel(MomentMatrix(g))
        if sol.converged:
            assert etel_residual(g, sol.lam) <= 1e-10


class TestRetel:
    def test_zero_row(self):
        sol = solve_retel(MomentMatrix([0.0]), None, penalty=pen(0.0))
        assert sol.lam[0] == 0.0

    def test_single_observation(self):
        sol = solve_retel(evaluate_moments(mean_fn(), Dataset([0.0]), 1.0), figure2(1.0))
        oracle = bisect_root(lambda l: math.exp(l * l / 2) * (l - 1) - 1, 0, 3)
        assert sol.lam[0] == pytest.approx(oracle, abs=1e-9)
        assert sol.lam[0] == pytest.approx(1.3838, abs=1e-4)

    def test_hull_violation_still_converges(self):
        sol = solve_retel(MomentMatrix([-3.0, -1.0]), None, penalty=pen(-2.0))
        oracle = bisect_root(lambda l: -3 * math.exp(-3 * l) - math.exp(-l) + math.exp(-2 * l + l * l / 2) * (l - 2), 0.5, 5)
        assert sol.converged
        assert sol.lam[0] == pytest.approx(oracle, abs=1e-9)
        assert sol.lam[0] == pytest.approx(2.525, abs=1e-3)

    def test_pure_penalty(self):
        mu = np.array([0.5, -1.0])
        S = np.array([[2.0, 0.3], [0.3, 1.0]])
        sol = solve_retel(MomentMatrix(np.empty((0, 2))), None, penalty=(mu, S, 0.0))
        np.testing.assert_allclose(sol.lam, -np.linalg.solve(S, mu), atol=1e-10)

    def test_not_pd(self):
        with pytest.raises(ModelError):
            from retel.model import Regularization

            solve_retel(MomentMatrix([1.0, -1.0]), Regularization(1.0, lambda d, t: [0.0], lambda d, t: [[-1.0]]), Dataset([0.0, 1.0]))

    def test_dimension_mismatch(self):
        with pytest.raises(ModelError):
            solve_retel(MomentMatrix([1.0, -1.0]), None, penalty=(np.zeros(2), np.eye(2), 0.0))

    def test_max_iter_raises_with_iterate(self):
        with pytest.raises(SolverError) as ei:
            solve_retel(MomentMatrix([-3.0, -1.0]), None, s=SolverSettings(max_iter=1), penalty=pen(-2.0))
        assert ei.value.solution is not None and ei.value.solution.status is Status.MAX_ITERATIONS

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.floats(-30, 30), min_size=1, max_size=10),
        st.floats(-10, 10),
        st.floats(0.05, 20),
        st.floats(0.01, 100),
    )
    def test_never_diverges(self, g, mu, s, tau):
        p = pen(mu, s, tau)
        sol = solve_retel(MomentMatrix(g), None, penalty=p)
        assert sol.converged
        assert retel_residual(np.array(g), sol.lam, *p) <= 1e-10

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.floats(-3, 3), st.floats(-50, 50), st.floats(0.1, 10))
    def test_shift_consistency(self, x, theta, c, tau):
        x = np.array(x)
        a = solve_retel(evaluate_moments(mean_fn(), Dataset(x), theta), invariant_mean(tau), Dataset(x))
        b = solve_retel(evaluate_moments(mean_fn(), Dataset(x + c), theta + c), invariant_mean(tau), Dataset(x + c))
        assert a.lam[0] == pytest.approx(b.lam[0], abs=1e-7 * (1 + abs(a.lam[0])))

    def test_2d(self, rng):
        g = rng.normal(size=(10, 2)) + 3.0
        sol = solve_retel(MomentMatrix(g), centered(2.0, 2))
        assert sol.converged
        assert retel_residual(g, sol.lam, np.zeros(2), np.eye(2), math.log(2.0)) < 1e-10


class TestWetel:
    def test_m1_matches_augmented_etel(self):
        M = MomentMatrix([-3.0, -1.0, 0.5])
        A = aetel_augment(M, 1.0)
        wet = solve_wetel(M, PseudoData(A.g[-1:]))
        assert wet.lam[0] == pytest.approx(solve_etel(A).lam[0], abs=1e-12)

    def test_fig1_gap(self):
        wet = solve_wetel(MomentMatrix([-3.0, 1.0]), PseudoData(normal_quantile_grid(4096)))
        ret = solve_retel(MomentMatrix([-3.0, 1.0]), None, penalty=pen(0.0))
        assert abs(wet.lam[0] - ret.lam[0]) < 1e-2
        logw = np.concatenate([np.zeros(2), np.full(4096, -math.log(4096))])
        assert etel_residual(np.concatenate([[-3.0, 1.0], normal_quantile_grid(4096)]), wet.lam, logw) < 1e-10

    def test_symmetric(self):
        sol = solve_wetel(MomentMatrix([-1.0, 1.0]), PseudoData([-0.5, 0.5]))
        assert sol.lam[0] == 0.0

    def test_width_mismatch(self):
        with pytest.raises(ModelError):
            solve_wetel(MomentMatrix([-1.0, 1.0]), PseudoData([[0.0, 1.0]]))

    def test_diverged(self):
        assert solve_wetel(MomentMatrix([1.0, 2.0]), PseudoData([3.0])).status is Status.DIVERGED


class TestEl:
    def test_two_point(self):
        sol = solve_el(MomentMatrix([-1.5, 0.5]))
        assert sol.lam[0] == pytest.approx(-2 / 3, abs=1e-12)
        p = 1 / (2 * (1 + sol.lam[0] * np.array([-1.5, 0.5])))
        np.testing.assert_allclose(p, [0.25, 0.75], atol=1e-12)

    def test_symmetric(self):
        assert solve_el(MomentMatrix([-1.0, 1.0])).lam[0] == 0.0

    def test_diverged(self):
        assert solve_el(MomentMatrix([2.0, 5.0])).status is Status.DIVERGED
        assert solve_el(MomentMatrix([2.0, 5.0]), SolverSettings(hull_screen=False)).status is Status.DIVERGED

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_feasible_and_stationary(self, seed):
        g = np.random.default_rng(seed).normal(size=(15, 2)) + 0.3
        sol = solve_el(MomentMatrix(g))
        if sol.converged:
            assert np.all(1 + g @ sol.lam > 1 / 15)
            assert el_residual(g, sol.lam) < 1e-9


class TestSettings:
    def test_validation(self):
        for kw in (dict(grad_tol=0), dict(max_iter=0), dict(line_search_shrink=1.0), dict(divergence_lambda_norm=-1)):
            with pytest.raises(ValueError):
                SolverSettings(**kw)
        assert SolverSettings().cap(4) == 400.0
