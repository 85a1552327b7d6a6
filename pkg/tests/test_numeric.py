import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockomp.errors import InvalidInput, RankDeficient, ZeroColumn
from blockomp.numeric import (
    EigenExtremes,
    coherence,
    gram_extreme_eigenvalues,
    project_complement,
    solve_least_squares,
)


def inverse_3x3(m):
    """Adjugate / determinant inverse, written out by hand."""
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    cof = np.array([
        [e * i - f * h, -(d * i - f * g), d * h - e * g],
        [-(b * i - c * h), a * i - c * g, -(a * h - b * g)],
        [b * f - c * e, -(a * f - c * d), a * e - b * d],
    ])
    det = a * cof[0, 0] + b * cof[0, 1] + c * cof[0, 2]
    return cof.T / det


def char_poly_roots_3x3(g):
    """Eigenvalues of a symmetric 3x3 matrix by bisection on det(g - t I)."""
    def p(t):
        m = g - t * np.eye(3)
        return (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
                - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
                + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))

    bound = np.abs(g).sum(axis=1).max() + 1.0
    grid = np.linspace(-bound, bound, 20001)
    vals = np.array([p(t) for t in grid])
    roots = []
    for k in np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:])):
        lo, hi = grid[k], grid[k + 1]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.sign(p(mid)) == np.sign(p(lo)):
                lo = mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return sorted(roots)


def gram_schmidt(b):
    q = []
    for col in b.T:
        v = col.copy()
        for u in q:
            v = v - (u @ col) * u
        q.append(v / np.linalg.norm(v))
    return np.array(q).T


class TestLeastSquares:
    def test_identity(self):
        np.testing.assert_allclose(solve_least_squares(np.eye(3), [1.0, 2.0, 3.0]), [1, 2, 3])

    def test_single_column_gives_mean(self):
        np.testing.assert_allclose(solve_least_squares([[1.0], [1.0]], [1.0, 3.0]), [2.0])

    def test_matches_normal_equations(self):
        g = np.random.default_rng(3)
        a = g.standard_normal((6, 3))
        y = g.standard_normal(6)
        oracle = inverse_3x3(a.T @ a) @ (a.T @ y)
        z = solve_least_squares(a, y)
        assert np.linalg.norm(z - oracle) <= 1e-10 * np.linalg.norm(oracle)

    def test_deterministic(self):
        g = np.random.default_rng(4)
        a, y = g.standard_normal((8, 4)), g.standard_normal(8)
        assert np.array_equal(solve_least_squares(a, y), solve_least_squares(a, y))

    def test_rank_deficient(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankDeficient):
            solve_least_squares(a, [1.0, 2.0, 3.0])

    def test_too_many_columns(self):
        with pytest.raises(RankDeficient):
            solve_least_squares(np.ones((2, 3)), [1.0, 1.0])

    def test_rejects_nan(self):
        with pytest.raises(InvalidInput):
            solve_least_squares([[np.nan], [1.0]], [1.0, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6), st.integers(0, 6))
    def test_residual_orthogonality(self, seed, n, extra):
        g = np.random.default_rng(seed)
        a = g.standard_normal((n + extra, n))
        y = g.standard_normal(n + extra)
        z = solve_least_squares(a, y)
        assert np.linalg.norm(a.T @ (y - a @ z)) <= 1e-10 * np.linalg.norm(a) * np.linalg.norm(y)


class TestGramExtremes:
    def test_orthonormal_columns(self):
        q = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 3)))[0]
        e = gram_extreme_eigenvalues(q)
        assert e.lambda_min == pytest.approx(1.0, abs=1e-12)
        assert e.lambda_max == pytest.approx(1.0, abs=1e-12)

    def test_rank_one(self):
        e = gram_extreme_eigenvalues([[1.0, 1.0], [0.0, 0.0]])
        assert e.lambda_min == pytest.approx(0.0, abs=1e-12)
        assert e.lambda_max == pytest.approx(2.0, abs=1e-12)

    def test_matches_characteristic_polynomial(self):
        a = np.random.default_rng(11).standard_normal((5, 3))
        roots = char_poly_roots_3x3(a.T @ a)
        e = gram_extreme_eigenvalues(a)
        assert e.lambda_min == pytest.approx(roots[0], abs=1e-9)
        assert e.lambda_max == pytest.approx(roots[-1], abs=1e-9)

    def test_brackets_rayleigh_quotient(self):
        g = np.random.default_rng(12)
        a = g.standard_normal((7, 4))
        e = gram_extreme_eigenvalues(a)
        z = g.standard_normal((1000, 4))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        q = np.linalg.norm(z @ a.T, axis=1) ** 2
        assert np.all(q >= e.lambda_min - 1e-10)
        assert np.all(q <= e.lambda_max + 1e-10)

    def test_extremes_invariant(self):
        with pytest.raises(InvalidInput):
            EigenExtremes(2.0, 1.0)
        assert EigenExtremes(0.5, 1.25).deviation == 0.5


class TestProjection:
    def test_coordinate(self):
        out = project_complement(np.array([[1.0], [0.0], [0.0]]), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(out, [0, 2, 3], atol=1e-15)

    def test_in_span(self):
        b = np.random.default_rng(1).standard_normal((5, 2))
        out = project_complement(b, b @ np.array([0.3, -2.0]))
        assert np.linalg.norm(out) <= 1e-12

    def test_matches_gram_schmidt(self):
        g = np.random.default_rng(2)
        b, v = g.standard_normal((6, 2)), g.standard_normal(6)
        q = gram_schmidt(b)
        np.testing.assert_allclose(project_complement(b, v), v - q @ (q.T @ v), atol=1e-12)

    def test_empty_basis(self):
        v = np.array([1.0, 2.0])
        np.testing.assert_array_equal(project_complement(np.zeros((2, 0)), v), v)

    def test_rank_deficient_basis(self):
        with pytest.raises(RankDeficient):
            project_complement(np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]), [1.0, 2.0, 3.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 4))
    def test_idempotent_orthogonal_pythagoras(self, seed, k):
        g = np.random.default_rng(seed)
        b, v = g.standard_normal((7, k)), g.standard_normal(7)
        p = project_complement(b, v)
        vn = np.linalg.norm(v)
        assert np.linalg.norm(project_complement(b, p) - p) <= 1e-10 * vn
        assert np.linalg.norm(b.T @ p) <= 1e-10 * vn * np.linalg.norm(b)
        pv = v - p
        assert abs(vn ** 2 - (pv @ pv + p @ p)) <= 1e-10 * vn ** 2


class TestCoherence:
    def test_identity(self):
        assert coherence(np.eye(4)) == 0.0

    def test_parallel_columns(self):
        assert coherence([[1.0, 1.0], [0.0, 0.0]]) == pytest.approx(1.0)

    def test_matches_pairwise_scan(self):
        d = np.random.default_rng(8).standard_normal((8, 12))
        best = 0.0
        for i in range(12):
            for j in range(12):
                if i != j:
                    c = abs(d[:, i] @ d[:, j]) / (np.linalg.norm(d[:, i]) * np.linalg.norm(d[:, j]))
                    best = max(best, c)
        assert coherence(d) == pytest.approx(best, rel=1e-12)

    def test_zero_column(self):
        with pytest.raises(ZeroColumn):
            coherence([[1.0, 0.0], [0.0, 0.0]])
