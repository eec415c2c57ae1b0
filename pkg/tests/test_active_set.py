"""
Tests for the Lawson-Hanson reference solver and the y+ projection.
"""

from unittest.mock import patch

import numpy as np
import pytest
from scipy.linalg import LinAlgError

from src.active_set import compute_y_plus, solve_lawson_hanson
from src.errors import DomainError, MaxItersError
from src.linalg import DenseMatrix
from src.objective import kkt_check
from src.problems import NnlsProblem, make_problem
from src.reports import StopReason


class TestLawsonHanson:
    """Test the active-set solver."""

    def test_identity_clamp(self):
        """A = I clamps y elementwise."""
        problem = NnlsProblem(A=DenseMatrix.identity(3), y=[1.0, -2.0, 3.0])
        report = solve_lawson_hanson(problem)
        assert list(report.x_final) == [1.0, 0.0, 3.0]
        assert report.stop_reason == StopReason.KKT
        assert report.method == "lh"
        assert report.iterations == 2

    def test_unconstrained_solution(self):
        """A non-negative least-squares solution is returned unchanged."""
        problem = NnlsProblem(A=DenseMatrix.from_rows([[1.0], [1.0]]), y=[1.0, 3.0])
        report = solve_lawson_hanson(problem)
        assert report.x_final[0] == pytest.approx(2.0, abs=1e-14)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_recovers_sparse_truth(self, seed):
        """A consistent 30x50 instance with a 3-sparse truth is solved exactly."""
        problem = make_problem(30, 50, 3, seed=seed)
        report = solve_lawson_hanson(problem)
        assert np.max(np.abs(report.x_final - problem.x_true)) <= 1e-8
        assert report.objective_final <= 1e-16 * max(1.0, float(problem.y @ problem.y))
        assert kkt_check(problem.A, problem.y, report.x_final, 1e-8).optimal
        assert report.kkt.optimal
        assert not report.rank_deficient

    def test_noisy_instance_certified(self):
        """Noisy data still ends at a KKT point."""
        problem = make_problem(30, 20, 3, seed=5, noise=0.5)
        report = solve_lawson_hanson(problem)
        assert report.kkt.optimal
        assert np.all(report.x_final >= 0)

    def test_trace_per_outer_iteration(self):
        """One trace point at the start and one per outer iteration."""
        problem = NnlsProblem(A=DenseMatrix.identity(3), y=[1.0, -2.0, 3.0])
        report = solve_lawson_hanson(problem)
        assert [point.iter for point in report.trace] == [0, 1, 2]

    def test_budget_exhausted(self):
        """Running out of outer iterations keeps the best iterate."""
        problem = NnlsProblem(A=DenseMatrix.identity(3), y=[1.0, -2.0, 3.0])
        with pytest.raises(MaxItersError) as excinfo:
            solve_lawson_hanson(problem, max_iters=1)
        assert list(excinfo.value.best) == [0.0, 0.0, 3.0]
        assert excinfo.value.iterations == 1

    def test_singular_passive_set_falls_back(self):
        """A failed Cholesky factorization switches to the minimum-norm solve."""
        problem = make_problem(10, 6, 2, seed=3)
        reference = solve_lawson_hanson(problem)
        with patch("src.active_set.cho_factor", side_effect=LinAlgError("singular")):
            report = solve_lawson_hanson(problem)
        assert report.rank_deficient
        assert np.allclose(report.x_final, reference.x_final, atol=1e-10)

    def test_rejected_index_reports_stall(self):
        """An entering index that cannot move is not reported as KKT-satisfied."""
        problem = NnlsProblem(A=DenseMatrix.identity(2), y=[1.0, -1.0])
        with patch("src.active_set._passive_solve", return_value=(np.zeros(2), False)):
            report = solve_lawson_hanson(problem)
        assert report.stop_reason == StopReason.STALLED
        assert list(report.x_final) == [0.0, 0.0]
        assert not report.kkt.optimal

    def test_converged_reports_kkt(self):
        """A clean run ends with the KKT stop reason and no stall."""
        report = solve_lawson_hanson(make_problem(12, 8, 2, seed=4, normalize=True))
        assert report.stop_reason == StopReason.KKT
        assert report.kkt.optimal

    def test_bad_tolerance(self):
        """tol must be positive."""
        with pytest.raises(DomainError):
            solve_lawson_hanson(make_problem(2, 2, 1), tol=0.0)


class TestComputeYPlus:
    """Test the projection of y onto the cone spanned by A."""

    def test_negative_ray(self):
        """y = -2 on a single positive column projects to 0."""
        problem = NnlsProblem(A=DenseMatrix.from_rows([[1.0]]), y=[-2.0])
        assert list(compute_y_plus(problem)) == [0.0]

    def test_orthant_clamp(self):
        """A = I clamps y."""
        problem = NnlsProblem(A=DenseMatrix.identity(2), y=[1.0, -1.0])
        assert list(compute_y_plus(problem)) == [1.0, 0.0]

    def test_y_in_cone(self):
        """y = Ax with x >= 0 is its own projection."""
        problem = make_problem(20, 10, 3, seed=4)
        assert np.allclose(compute_y_plus(problem), problem.y, atol=1e-10)


if __name__ == "__main__":
    pytest.main([__file__])
