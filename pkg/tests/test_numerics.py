import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egohpo.errors import DomainError, FactorizationError
from egohpo.numerics import (
    cholesky,
    erf,
    jittered_cholesky,
    norm_cdf,
    norm_pdf,
    reg_inc_beta,
    solve_psd,
    solve_triangular,
)


def random_pd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(4)), np.eye(4))

    def test_hand_factorization(self):
        L = cholesky([[4.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)

    def test_random_reconstruction(self, rng):
        A = random_pd(rng, 30)
        L = cholesky(A)
        assert np.allclose(L, np.tril(L))
        assert np.all(np.diag(L) > 0)
        assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) <= 1e-8

    def test_idempotent_reconstruction(self, rng):
        A = random_pd(rng, 12)
        L = cholesky(A)
        L2 = cholesky(L @ L.T)
        np.testing.assert_allclose(L2, L, rtol=1e-8, atol=1e-10)

    def test_not_pd_reports_pivot(self):
        A = np.diag([1.0, 2.0, -1.0, 4.0])
        with pytest.raises(FactorizationError) as info:
            cholesky(A)
        assert info.value.pivot == 3

    def test_asymmetric_rejected(self):
        with pytest.raises(DomainError):
            cholesky([[1.0, 0.5], [0.0, 1.0]])

    def test_jitter_rescues_singular_psd(self):
        L, jitter = jittered_cholesky(np.ones((3, 3)))
        assert 0 < jitter <= 1e-6
        np.testing.assert_allclose(L @ L.T, np.ones((3, 3)) + jitter * np.eye(3), atol=1e-12)

    def test_jitter_gives_up(self):
        with pytest.raises(FactorizationError):
            jittered_cholesky(-np.eye(2))


class TestSolve:
    def test_identity_system(self):
        b = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(solve_psd(np.eye(3), b), b)

    def test_hand_system(self):
        # [[4,2],[2,3]] x = [2,1]  ->  x = [0.5, 0]
        L = cholesky([[4.0, 2.0], [2.0, 3.0]])
        np.testing.assert_allclose(solve_psd(L, [2.0, 1.0]), [0.5, 0.0], atol=1e-15)

    def test_triangular_substitution(self):
        L = np.array([[2.0, 0.0], [1.0, 4.0]])
        # forward: 2 x0 = 4 -> 2; x0 + 4 x1 = 6 -> 1
        np.testing.assert_allclose(solve_triangular(L, [4.0, 6.0]), [2.0, 1.0])
        # backward with L^T: 4 x1 = 4 -> 1; 2 x0 + x1 = 5 -> 2
        np.testing.assert_allclose(solve_triangular(L, [5.0, 4.0], trans=True), [2.0, 1.0])

    def test_random_residual(self, rng):
        A = random_pd(rng, 50)
        b = rng.normal(size=50)
        x = solve_psd(cholesky(A), b)
        assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)


class TestSpecialFunctions:
    def test_trivial_values(self):
        assert erf(0.0) == 0.0
        assert norm_cdf(0.0) == 0.5
        assert norm_pdf(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
        assert norm_pdf(0.0) == pytest.approx(0.3989423, abs=1e-7)

    @pytest.mark.parametrize("x", np.linspace(-8, 8, 81))
    def test_erf_cdf_pdf_against_mpmath(self, x):
        assert abs(erf(x) - float(mpmath.erf(x))) <= 1e-12
        assert abs(norm_cdf(x) - float(mpmath.ncdf(x))) <= 1e-12
        assert abs(norm_pdf(x) - float(mpmath.npdf(x))) <= 1e-12

    def test_vectorized_matches_scalar(self):
        xs = np.linspace(-5, 5, 11)
        np.testing.assert_allclose(norm_cdf(xs), [norm_cdf(float(x)) for x in xs], atol=1e-15)
        np.testing.assert_allclose(norm_pdf(xs), [norm_pdf(float(x)) for x in xs], atol=1e-15)

    def test_cdf_monotone_on_grid(self):
        xs = np.linspace(-10, 10, 2001)
        assert np.all(np.diff(norm_cdf(xs)) >= 0)

    @settings(max_examples=200, deadline=None)
    @given(
        a=st.floats(0.05, 200.0),
        b=st.floats(0.05, 200.0),
        k=st.integers(0, 2**20),
    )
    def test_inc_beta_symmetry(self, a, b, k):
        # dyadic x keeps 1 - x exact
        x = k / 2**20
        assert reg_inc_beta(a, b, x) + reg_inc_beta(b, a, 1 - x) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize(
        "a,b,x",
        [(0.5, 0.5, 0.3), (2.0, 3.0, 0.4), (200.0, 0.5, 0.98), (0.5, 200.0, 0.001), (10.0, 10.0, 0.5)],
    )
    def test_inc_beta_against_mpmath(self, a, b, x):
        ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
        assert abs(reg_inc_beta(a, b, x) - ref) <= 1e-10

    def test_inc_beta_domain(self):
        with pytest.raises(DomainError):
            reg_inc_beta(0.0, 1.0, 0.5)
        with pytest.raises(DomainError):
            reg_inc_beta(1.0, 1.0, 1.5)
