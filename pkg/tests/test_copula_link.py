import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poiscount import copula_link as cl
from poiscount.special import normal_cdf, poisson_quantile


def hermite_derivative_oracle(k, x):
    """H_k via the explicit Rodrigues form, evaluated with sympy."""
    import sympy

    z = sympy.Symbol("z")
    expr = (-1) ** k * sympy.exp(z**2 / 2) * sympy.diff(sympy.exp(-(z**2) / 2), z, k)
    return float(expr.subs(z, x))


class TestHermitePoly:
    def test_order_zero_constant(self):
        assert cl.hermite_poly(0, 3.7) == 1.0

    def test_order_two(self):
        assert cl.hermite_poly(2, 2.0) == pytest.approx(3.0, abs=1e-14)

    @pytest.mark.parametrize("k", range(1, 9))
    def test_matches_rodrigues_form(self, k):
        assert cl.hermite_poly(k, 1.3) == pytest.approx(
            hermite_derivative_oracle(k, 1.3), rel=1e-10
        )

    @given(st.integers(2, 12), st.floats(-4, 4))
    @settings(max_examples=60, deadline=None)
    def test_three_term_recursion(self, k, x):
        lhs = cl.hermite_poly(k, x)
        rhs = x * cl.hermite_poly(k - 1, x) - (k - 1) * cl.hermite_poly(k - 2, x)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


class TestHermiteCoefficients:
    def test_series_and_quadrature_agree(self):
        for lam in [0.1, 1.0, 10.0]:
            s = cl.hermite_coefficients(lam, order=30, method="series")
            q = cl.hermite_coefficients(lam, order=30, method="quadrature")
            assert np.max(np.abs(s.g - q.g)) <= 1e-6

    def test_variance_decomposition_grows_toward_lam(self):
        lam = 2.0
        sums = [
            np.sum(cl.hermite_coefficients(lam, order=K).eta) for K in (5, 15, 30, 50)
        ]
        assert np.all(np.diff(sums) >= -1e-12)
        assert sums[-1] <= 1.0 + 1e-8
        assert sums[-1] > 0.9

    def test_near_identity_link_at_lam_ten(self):
        exp = cl.hermite_coefficients(10.0, order=30)
        # first coefficient dominates: very little correlation is lost
        assert exp.eta[0] >= 0.98
        assert exp.eta[0] / (1.0 - exp.tail_mass) >= 0.99

    def test_g1_monte_carlo_oracle(self):
        rng = np.random.default_rng(91)
        z = rng.standard_normal(10**6)
        gz = poisson_quantile(np.ones(z.size), normal_cdf(z))
        prod = gz * z
        se = np.std(prod) / math.sqrt(z.size)
        g1 = cl.hermite_coefficients(1.0, order=1).g[0]
        assert abs(np.mean(prod) - g1) <= 3 * se

    def test_order_cap(self):
        with pytest.raises(ValueError):
            cl.hermite_coefficients(1.0, order=51)

    def test_eta_invariants(self):
        for lam in (0.2, 1.0, 4.0, 25.0):
            exp = cl.hermite_coefficients(lam)
            assert np.all(exp.eta >= 0.0)
            assert exp.eta.sum() <= 1.0 + 1e-8


class TestLink:
    def test_zero_maps_to_zero(self):
        exp = cl.hermite_coefficients(1.0)
        assert cl.link(exp, 0.0) == 0.0

    def test_one_maps_to_one_minus_tail(self):
        exp = cl.hermite_coefficients(1.0)
        assert cl.link(exp, 1.0) == pytest.approx(1.0 - exp.tail_mass, abs=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
    def test_limit_at_minus_one_matches_neg_bound(self, lam):
        exp = cl.hermite_coefficients(lam, order=30)
        assert cl.link(exp, -1.0) == pytest.approx(cl.neg_bound(lam), abs=2e-2)

    def test_domain_error(self):
        exp = cl.hermite_coefficients(1.0)
        with pytest.raises(ValueError):
            cl.link(exp, 1.2)

    @pytest.mark.parametrize("lam", [0.3, 1.0, 8.0])
    def test_contraction_and_monotonicity(self, lam):
        exp = cl.hermite_coefficients(lam)
        u = np.linspace(-1.0, 1.0, 201)
        vals = cl.link(exp, u)
        assert np.all(np.abs(vals) <= np.abs(u) + 1e-12)
        pos = u >= 0.0
        assert np.all(np.diff(vals[pos]) >= -1e-14)


class TestNegBound:
    def test_tends_to_minus_one(self):
        assert cl.neg_bound(50.0) < -0.95

    def test_range(self):
        for lam in np.arange(0.1, 10.01, 0.7):
            v = cl.neg_bound(lam)
            assert -1.0 <= v <= 0.0

    def test_antithetic_monte_carlo_oracle(self):
        rng = np.random.default_rng(512)
        z = rng.standard_normal(10**6)
        for lam in (0.5, 1.0, 5.0):
            lam_vec = np.full(z.size, lam)
            x = poisson_quantile(lam_vec, normal_cdf(z)).astype(float)
            y = poisson_quantile(lam_vec, normal_cdf(-z)).astype(float)
            r = np.corrcoef(x, y)[0, 1]
            # correlation-estimate standard error via the delta method scale
            se = (1.0 - r**2) / math.sqrt(z.size)
            assert abs(r - cl.neg_bound(lam)) <= max(3 * se, 3e-3)

    def test_non_monotone_below_three(self):
        grid = np.arange(0.05, 3.001, 0.05)
        vals = np.array([cl.neg_bound(l) for l in grid])
        diffs = np.diff(vals)
        assert np.any(diffs > 0.0) and np.any(diffs < 0.0)

    def test_continuity_on_grid(self):
        grid = np.arange(0.1, 5.0, 0.01)
        vals = np.array([cl.neg_bound(l) for l in grid])
        assert np.max(np.abs(np.diff(vals))) <= 0.05


class TestKappa:
    def test_vanishes_at_zero_limit(self):
        assert cl.kappa(1e-8) == pytest.approx(0.0, abs=1e-7)

    def test_tail_sum_oracle_at_one(self):
        n = np.arange(1, 200)
        from poiscount.special import poisson_tail

        oracle = np.sum(poisson_tail(1.0, n) ** 2)
        assert cl.kappa(1.0) == pytest.approx(oracle, abs=1e-10)

    @pytest.mark.parametrize("lam", [0.1, 0.7, 3.0, 40.0, 1e4])
    def test_strictly_below_mean(self, lam):
        assert cl.kappa(lam) < lam


class TestMinExpectHeterogeneous:
    def test_homogeneous_reduction(self):
        for lam in (0.5, 2.0, 11.0):
            assert cl.min_expect_heterogeneous(lam, lam) == pytest.approx(
                cl.kappa(lam), abs=1e-10
            )

    def test_symmetry(self):
        assert cl.min_expect_heterogeneous(1.0, 2.0) == pytest.approx(
            cl.min_expect_heterogeneous(2.0, 1.0), abs=1e-14
        )

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(77)
        n = rng.poisson(1.0, 10**6)
        m = rng.poisson(2.0, 10**6)
        mins = np.minimum(n, m)
        se = np.std(mins) / 1e3
        assert abs(np.mean(mins) - cl.min_expect_heterogeneous(1.0, 2.0)) <= 3 * se


class TestSuperNegBound:
    def test_above_copula_bound_and_nonpositive(self):
        for lam in np.arange(0.1, 10.01, 0.5):
            value, p_star = cl.super_neg_bound(lam)
            assert value >= cl.neg_bound(lam) - 1e-9
            assert value <= 0.0
            assert 0.0 < p_star < 1.0

    def test_anticorrelated_bernoulli_oracle(self):
        # p = 1/2 pair with B' = 1 - B gives gamma_B = -1/4 at that lag
        lam, p = 2.0, 0.5
        rng = np.random.default_rng(303)
        size = 10**6
        n1 = rng.poisson(lam / p, size)
        n2 = rng.poisson(lam / p, size)
        m = int(max(n1.max(), n2.max()))
        b = rng.random((size, m)) < p
        x = np.array([row[:k].sum() for row, k in zip(b, n1)], dtype=float)
        y = np.array([(~row[:k]).sum() for row, k in zip(b, n2)], dtype=float)
        prod = (x - lam) * (y - lam)
        se = np.std(prod) / math.sqrt(size)
        expected = -(p**2) * cl.kappa(lam / p) / lam
        assert abs(np.mean(prod) / lam - expected) <= 3 * se / lam

    def test_correlation_bounds_container(self):
        b = cl.correlation_bounds(1.5)
        assert b.nb <= b.super_nb <= 0.0
