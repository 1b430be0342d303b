import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from retel.model import (
    Dataset,
    EstimatingFunction,
    ModelError,
    MomentMatrix,
    PseudoData,
    aetel_augment,
    centered,
    default_an,
    evaluate_moments,
    figure2,
    hull_contains_zero,
    invariant_mean,
    mean_fn,
    mean_var_fn,
    sample_moments,
)


def lp_hull_interior(g):
    """Brute-force oracle: 0 strictly inside conv{g_i} iff some strictly positive convex weights reach 0."""
    n, p = g.shape
    # maximize t s.t. w_i >= t, sum w = 1, g^T w = 0
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_eq = np.zeros((p + 1, n + 1))
    A_eq[:p, :n] = g.T
    A_eq[p, :n] = 1.0
    b_eq = np.zeros(p + 1)
    b_eq[p] = 1.0
    A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n + [(None, None)])
    if res.status != 0:
        return False
    # strict interior needs full-dimensional hull too
    return res.x[-1] > 1e-9 and np.linalg.matrix_rank(g - g.mean(0), tol=1e-9) == p


class TestDataset:
    def test_vector_becomes_column(self):
        d = Dataset([1.0, 2.0, 3.0])
        assert (d.n, d.d_x) == (3, 1)
        np.testing.assert_allclose(d.mean(), [2.0])

    def test_rejects_nonfinite_and_empty(self):
        with pytest.raises(ModelError):
            Dataset([1.0, np.nan])
        with pytest.raises(ModelError):
            Dataset(np.empty((0, 1)))

    def test_immutable(self):
        d = Dataset([1.0, 2.0])
        with pytest.raises(ValueError):
            d.rows[0, 0] = 5.0


class TestEvaluateMoments:
    def test_mean_shift(self):
        M = evaluate_moments(mean_fn(), Dataset([-1.0, 1.0]), 0.5)
        np.testing.assert_array_equal(M.g[:, 0], [-1.5, 0.5])
        np.testing.assert_array_equal(M.theta, [0.5])

    def test_mean_symmetric(self):
        M = evaluate_moments(mean_fn(), Dataset([-1.0, 1.0]), 0.0)
        np.testing.assert_array_equal(M.g[:, 0], [-1.0, 1.0])
        assert M.mean()[0] == 0.0

    def test_mean_var_row(self):
        M = evaluate_moments(mean_var_fn(), Dataset([2.0]), [1.0, 1.0])
        np.testing.assert_array_equal(M.g, [[1.0, 0.0]])

    def test_rowwise_eval_matches_batch(self, rng):
        x = rng.normal(size=7)
        ef = mean_var_fn()
        slow = EstimatingFunction("mv", 2, 2, 1, ef.eval)
        np.testing.assert_allclose(evaluate_moments(slow, Dataset(x), [0.3, 2.0]).g, evaluate_moments(ef, Dataset(x), [0.3, 2.0]).g)

    def test_nonfinite_names_row(self):
        ef = EstimatingFunction("log", 1, 1, 1, lambda x, t: np.sqrt(x - t) if x[0] > t[0] else np.array([np.nan]))
        with pytest.raises(ModelError, match="row 1"):
            evaluate_moments(ef, Dataset([2.0, 0.0, 3.0]), 0.5)

    def test_dimension_checks(self):
        with pytest.raises(ModelError):
            evaluate_moments(mean_fn(), Dataset([1.0]), [0.0, 1.0])
        with pytest.raises(ModelError):
            evaluate_moments(mean_fn(2), Dataset([1.0]), [0.0, 1.0])

    @given(st.permutations(list(range(6))))
    def test_row_local(self, perm):
        x = np.array([0.3, -1.2, 2.5, 0.0, 4.1, -0.7])
        a = evaluate_moments(mean_var_fn(), Dataset(x), [0.2, 1.5]).g
        b = evaluate_moments(mean_var_fn(), Dataset(x[list(perm)]), [0.2, 1.5]).g
        np.testing.assert_array_equal(a[list(perm)], b)


class TestHull:
    def test_examples(self):
        assert hull_contains_zero(MomentMatrix([-1.5, 0.5]))
        assert not hull_contains_zero(MomentMatrix([-3.0, -1.0]))
        assert hull_contains_zero(MomentMatrix([[1, 0], [-1, 1], [-1, -1]]))

    def test_boundary_is_not_interior(self):
        assert not hull_contains_zero(MomentMatrix([0.0, 1.0]))
        assert not hull_contains_zero(MomentMatrix([[1, 0], [-1, 0], [0, 1]]))
        assert not hull_contains_zero(MomentMatrix([[1, 1], [-1, -1], [2, 2]]))

    @settings(max_examples=150, deadline=None)
    @given(st.integers(3, 7), st.integers(0, 2**31 - 1))
    def test_2d_matches_lp(self, n, seed):
        g = np.random.default_rng(seed).normal(size=(n, 2)) + np.random.default_rng(seed + 1).normal(size=2)
        assert hull_contains_zero(MomentMatrix(g)) == lp_hull_interior(g)

    def test_3d_advisory(self):
        cube = np.array(list(itertools.product([-1.0, 1.0], repeat=3)))
        assert hull_contains_zero(MomentMatrix(cube))
        assert not hull_contains_zero(MomentMatrix(cube + 2.0))


class TestAugment:
    def test_examples(self):
        A = aetel_augment(MomentMatrix([-3.0, -1.0]), 0.3466)
        assert A.n == 3
        assert A.g[-1, 0] == pytest.approx(0.6932)
        assert aetel_augment(MomentMatrix([-1.0, 1.0]), 2.0).g[-1, 0] == 0.0
        np.testing.assert_allclose(aetel_augment(MomentMatrix([[1, 1], [3, 1]]), 1.0).g[-1], [-2.0, -1.0])

    def test_default_an(self):
        assert default_an(5) == 1.0
        assert default_an(10000) == pytest.approx(np.log(10000) / 2)

    def test_rejects_nonpositive(self):
        with pytest.raises(ModelError):
            aetel_augment(MomentMatrix([1.0, 2.0]), 0.0)

    @given(st.lists(st.floats(0.01, 50), min_size=1, max_size=8), st.floats(0.01, 5))
    def test_restores_hull_1d(self, vals, a):
        for sign in (1.0, -1.0):
            M = MomentMatrix(sign * np.array(vals))
            assert hull_contains_zero(aetel_augment(M, a))


class TestRegularization:
    def test_presets(self):
        d = Dataset([1.0, 3.0])
        mu, S, lt = invariant_mean(2.0).resolve(d, 0.5)
        np.testing.assert_allclose(mu, [1.5])
        np.testing.assert_allclose(S, [[1.0]])
        assert lt == pytest.approx(np.log(2.0))
        mu, S, _ = figure2(1.0).resolve(None, 1.0)
        np.testing.assert_allclose(mu, [-1.0])
        mu, S, _ = centered(1.0, 2).resolve(None, None)
        np.testing.assert_allclose(S, np.eye(2))
        M = evaluate_moments(mean_fn(), d, 0.0)
        mu, S, _ = sample_moments(1.0).resolve(d, 0.0, M)
        np.testing.assert_allclose(mu, [2.0])
        np.testing.assert_allclose(S, [[10.0]])

    def test_validation(self):
        with pytest.raises(ModelError):
            centered(0.0)
        from retel.model import Regularization

        bad = Regularization(1.0, lambda d, t: [0.0, 0.0], lambda d, t: [[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(ModelError, match="positive definite"):
            bad.resolve(None, 0.0)
        asym = Regularization(1.0, lambda d, t: [0.0, 0.0], lambda d, t: [[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ModelError, match="symmetric"):
            asym.resolve(None, 0.0)

    def test_pseudo(self):
        assert PseudoData([0.1, 0.2, 0.3]).m == 3
        with pytest.raises(ModelError):
            PseudoData([np.inf])
