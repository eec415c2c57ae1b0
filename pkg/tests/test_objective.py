"""
Tests for objectives, gradients, Bregman geometry and optimality checks.
"""

import math

import numpy as np
import pytest

from src.errors import DimensionError, DomainError
from src.objective import (BregmanContext, alpha_bound, bregman_divergence,
                           bregman_gradient, bregman_potential, flow_field,
                           kkt_check, nnls_objective, overparam_gradients,
                           project_nonneg, reduced_hessian, reduced_loss,
                           weighted_init, weighted_l1_norm)
from src.active_set import solve_lawson_hanson
from src.problems import make_problem


def _random_instance(seed, m=4, n=3):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    y = rng.standard_normal(m)
    x = rng.uniform(0.2, 1.5, n)
    return A, y, x


class TestObjectives:
    """Test the NNLS and reduced losses."""

    def test_nnls_objective(self):
        """||Az - y||² on a small example."""
        assert nnls_objective([[1.0, 0.0], [0.0, 1.0]], [1.0, -1.0], [1.0, 0.0]) == 1.0

    def test_reduced_loss(self):
        """½||A x^L - y||² with x = 2, L = 2, y = 4 vanishes."""
        assert reduced_loss([[1.0]], [4.0], [2.0], 2) == 0.0
        assert reduced_loss([[1.0]], [0.0], [2.0], 3) == 32.0

    def test_layers_below_two(self):
        """L = 1 is not a valid depth."""
        with pytest.raises(DomainError):
            flow_field([[1.0]], [1.0], [1.0], 1)

    def test_dimension_mismatch(self):
        """Mismatched y raises DimensionError."""
        with pytest.raises(DimensionError):
            nnls_objective([[1.0, 0.0]], [1.0, 2.0], [1.0, 1.0])

    @pytest.mark.parametrize("L", [2, 3, 4])
    def test_gradient_matches_finite_differences(self, L):
        """L * flow_field is the gradient of the reduced loss."""
        A, y, x = _random_instance(L)
        gradient = L * flow_field(A, y, x, L)
        h = 1e-6
        numeric = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            numeric[i] = (reduced_loss(A, y, x + e, L) - reduced_loss(A, y, x - e, L)) / (2 * h)
        assert np.linalg.norm(numeric - gradient) <= 1e-5 * max(1.0, np.linalg.norm(gradient))

    @pytest.mark.parametrize("L", [2, 3])
    def test_hessian_matches_finite_differences(self, L):
        """reduced_hessian is the Jacobian of the gradient and is symmetric."""
        A, y, x = _random_instance(10 + L)
        H = reduced_hessian(A, y, x, L).data
        assert np.allclose(H, H.T, atol=0.0)
        h = 1e-6
        numeric = np.zeros_like(H)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            numeric[:, j] = L * (flow_field(A, y, x + e, L) - flow_field(A, y, x - e, L)) / (2 * h)
        assert np.linalg.norm(numeric - H) <= 1e-5 * max(1.0, np.linalg.norm(H))

    def test_hessian_examples(self):
        """Scalar Hessians with and without residual."""
        assert reduced_hessian([[1.0]], [0.0], [2.0], 2).data[0, 0] == pytest.approx(24.0)
        assert reduced_hessian([[1.0]], [4.0], [2.0], 2).data[0, 0] == pytest.approx(16.0)

    def test_hessian_uses_precomputed_gram(self):
        """A supplied A^T A gives the same Hessian."""
        A, y, x = _random_instance(21)
        assert np.allclose(reduced_hessian(A, y, x, 3, gram=A.T @ A).data,
                           reduced_hessian(A, y, x, 3).data)


class TestOverparamGradients:
    """Test per-factor gradients."""

    def test_scalar_example(self):
        """A = [[1]], y = 0, factors 2 and 3 give gradients 18 and 12."""
        g1, g2 = overparam_gradients([[1.0]], [0.0], [[2.0], [3.0]])
        assert g1[0] == 18.0
        assert g2[0] == 12.0

    def test_equal_factors_match_flow_field(self):
        """Identical factors reproduce the reduced flow field."""
        A, y, x = _random_instance(4)
        for gradient in overparam_gradients(A, y, [x, x, x]):
            assert np.allclose(gradient, flow_field(A, y, x, 3), rtol=1e-13, atol=1e-14)

    def test_zero_factor_entries(self):
        """Zero entries do not produce NaN."""
        A, y, _ = _random_instance(6)
        factors = [np.array([0.0, 1.0, 2.0]), np.array([1.0, 0.0, 3.0]), np.array([2.0, 2.0, 0.0])]
        gradients = overparam_gradients(A, y, factors)
        assert all(np.all(np.isfinite(g)) for g in gradients)
        common = A.T @ (A @ (factors[0] * factors[1] * factors[2]) - y)
        assert np.allclose(gradients[0], common * factors[1] * factors[2])

    def test_needs_two_factors(self):
        """A single factor is rejected."""
        with pytest.raises(DomainError):
            overparam_gradients([[1.0]], [0.0], [[1.0]])

    def test_stationary_at_nnls_solution(self):
        """Factors x+^{1/L} taken from an NNLS solution are stationary."""
        problem = make_problem(30, 50, 3, seed=2, normalize=True)
        z = solve_lawson_hanson(problem).x_final
        L = 3
        factor = np.power(z, 1.0 / L)
        gradients = overparam_gradients(problem.A, problem.y, [factor] * L)
        assert max(float(np.max(np.abs(g))) for g in gradients) <= 1e-8


class TestBregman:
    """Test the Bregman potential and divergence."""

    def test_potential_examples(self):
        """F(0) = 0 and F(1) = -½ for L = 2."""
        assert bregman_potential([0.0], 2) == 0.0
        assert bregman_potential([1.0], 2) == -0.5
        assert bregman_potential([1.0], 4) == pytest.approx(-1.0)

    def test_potential_negative_rejected(self):
        """Negative points lie outside the domain."""
        with pytest.raises(DomainError):
            bregman_potential([-1.0], 2)

    def test_divergence_example(self):
        """D_F(1, e) = e/2 - 1 for L = 2."""
        assert bregman_divergence([1.0], [math.e], 2) == pytest.approx(math.e / 2 - 1, rel=1e-12)

    def test_zero_on_diagonal(self):
        """D_F(p, p) = 0."""
        p = np.array([0.3, 1.2, 4.0])
        for L in (2, 3, 5):
            assert bregman_divergence(p, p, L) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("L", [2, 3, 4])
    def test_matches_definition(self, L):
        """The coordinatewise formula equals F(p) - F(q) - <∇F(q), p - q>."""
        rng = np.random.default_rng(L)
        p = rng.uniform(0.0, 2.0, 6)
        q = rng.uniform(0.1, 2.0, 6)
        direct = bregman_potential(p, L) - bregman_potential(q, L) - bregman_gradient(q, L) @ (p - q)
        assert bregman_divergence(p, q, L) == pytest.approx(direct, rel=1e-9, abs=1e-12)

    def test_positive_off_diagonal(self):
        """D_F(p, q) > 0 whenever p != q."""
        rng = np.random.default_rng(8)
        for L in (2, 3):
            for _ in range(100):
                p = rng.uniform(0.0, 3.0, 4)
                q = rng.uniform(0.05, 3.0, 4)
                assert bregman_divergence(p, q, L) > 0.0

    def test_zero_entries_in_p(self):
        """0 log 0 is taken as 0."""
        assert bregman_divergence([0.0], [1.0], 2) == pytest.approx(0.5)

    def test_q_must_be_positive(self):
        """A zero q entry is outside the divergence domain."""
        with pytest.raises(DomainError):
            bregman_divergence([1.0], [0.0], 2)

    def test_context(self):
        """BregmanContext checks lengths and forwards to the free functions."""
        context = BregmanContext(layers=2, dim=1)
        assert context.divergence([1.0], [math.e]) == pytest.approx(math.e / 2 - 1)
        with pytest.raises(DimensionError):
            context.potential([1.0, 2.0])


class TestProjection:
    """Test the projection onto the non-negative orthant."""

    def test_projection_inequalities(self):
        """Projection inequalities hold for random points in and out of the orthant."""
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            y = rng.standard_normal(5)
            w = np.abs(rng.standard_normal(5))
            p = project_nonneg(y)
            gap = w - p
            assert (w - y) @ gap >= 0.5 * (gap @ gap) - 1e-12
            assert gap @ gap <= (w - y) @ (w - y) - (y - p) @ (y - p) + 1e-12


class TestKkt:
    """Test the KKT checker."""

    def test_optimal_point(self):
        """(1, 0) solves A = I, y = (1, -1)."""
        report = kkt_check(np.eye(2), [1.0, -1.0], [1.0, 0.0])
        assert report.primal_violation == 0.0
        assert report.dual_violation == 0.0
        assert report.complementarity == 0.0
        assert report.optimal

    def test_dual_violation(self):
        """x = 0 is not optimal for y = (1, 1)."""
        report = kkt_check(np.eye(2), [1.0, 1.0], [0.0, 0.0])
        assert report.dual_violation == 1.0
        assert not report.optimal
        assert report.to_dict()["optimal"] is False

    def test_primal_violation(self):
        """Negative entries count as primal violation."""
        report = kkt_check(np.eye(2), [-1.0, 0.0], [-1.0, 0.0])
        assert report.primal_violation == 1.0

    def test_bad_tolerance(self):
        """tol must be positive."""
        with pytest.raises(DomainError):
            kkt_check(np.eye(1), [1.0], [1.0], tol=0.0)


class TestAlphaBound:
    """Test the initialization-scale bound."""

    def test_depth_three(self):
        """L = 3, Q+ = 1, N = 2, ε = 1 gives 1/6."""
        assert alpha_bound(1.0, 1.0, 3, 2) == pytest.approx(1.0 / 6.0, rel=1e-12)

    def test_depth_two(self):
        """L = 2, Q+ = 0, N = 1, ε = 1/e gives 1/e."""
        assert alpha_bound(0.0, math.exp(-1.0), 2, 1) == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_depth_four(self):
        """L = 4, Q+ = 0, N = 1, ε = 1 gives ½."""
        assert alpha_bound(0.0, 1.0, 4, 1) == pytest.approx(0.5, rel=1e-12)

    def test_loose_variant(self):
        """The alternative L = 2 formula is capped at e^{-1/2}."""
        assert alpha_bound(0.0, 100.0, 2, 1, variant="loose") == pytest.approx(math.exp(-0.5))
        with pytest.raises(DomainError):
            alpha_bound(0.0, 1.0, 2, 1, variant="other")

    def test_depth_two_capped(self):
        """For L = 2 the bound never exceeds e^{-1/2}, whatever Q+, ε and N."""
        rng = np.random.default_rng(17)
        cap = math.exp(-0.5)
        for _ in range(1000):
            q_plus = float(rng.uniform(0.0, 10.0))
            epsilon = float(10.0 ** rng.uniform(-4.0, 4.0))
            n = int(rng.integers(1, 1000))
            assert alpha_bound(q_plus, epsilon, 2, n) <= cap
            assert alpha_bound(q_plus, epsilon, 2, n, variant="loose") <= cap

    def test_monotone_in_epsilon(self):
        """Looser accuracy allows larger initializations."""
        for L in (2, 3, 5):
            assert alpha_bound(1.0, 0.1, L, 10) < alpha_bound(1.0, 1.0, L, 10)

    def test_bad_epsilon(self):
        """ε must be positive."""
        with pytest.raises(DomainError):
            alpha_bound(1.0, 0.0, 3, 1)


class TestWeightedInit:
    """Test weighted-ℓ1 initialization."""

    def test_unit_weight(self):
        """w = 1, θ = 1 gives e^{-1}."""
        assert weighted_init([1.0], 1.0)[0] == pytest.approx(math.exp(-1.0))

    def test_two_weights(self):
        """w = (1, ½), θ = 2 gives (e^{-3/2}, e^{-1})."""
        x0 = weighted_init([1.0, 0.5], 2.0)
        assert x0[0] == pytest.approx(math.exp(-1.5))
        assert x0[1] == pytest.approx(math.exp(-1.0))

    def test_invalid_weights(self):
        """Weights must be in (0, 1] with max-norm 1."""
        with pytest.raises(DomainError):
            weighted_init([0.5, 0.5], 1.0)
        with pytest.raises(DomainError):
            weighted_init([1.0, 0.0], 1.0)
        with pytest.raises(DomainError):
            weighted_init([1.0], 0.0)

    def test_weighted_l1_norm(self):
        """||z ⊙ w||_1."""
        assert weighted_l1_norm([1.0, -2.0], [1.0, 0.5]) == 2.0


if __name__ == "__main__":
    pytest.main([__file__])
