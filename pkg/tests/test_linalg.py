"""
Tests for dense linear algebra helpers.
"""

import numpy as np
import pytest

from src.errors import DimensionError, DomainError
from src.linalg import (DenseMatrix, gram_spectral_estimate, gram_spectral_norm,
                        hadamard_pow, matvec, matvec_t, power_iteration,
                        symmetric_spectral_norm)


class TestDenseMatrix:
    """Test DenseMatrix construction."""

    def test_from_flat_row_major(self):
        """Flat values fill rows first."""
        A = DenseMatrix.from_flat(2, 3, [1, 2, 3, 4, 5, 6])
        assert A.shape == (2, 3)
        assert A.data[1, 0] == 4.0
        assert list(A.flat()) == [1, 2, 3, 4, 5, 6]

    def test_from_flat_wrong_length(self):
        """A value count that does not match rows*cols is rejected."""
        with pytest.raises(DimensionError):
            DenseMatrix.from_flat(2, 2, [1, 2, 3])

    def test_non_finite_rejected(self):
        """NaN entries are rejected."""
        with pytest.raises(DomainError):
            DenseMatrix.from_rows([[1.0, float("nan")]])

    def test_immutable_copy(self):
        """The stored array is a read-only copy."""
        source = np.eye(2)
        A = DenseMatrix(source)
        source[0, 0] = 5.0
        assert A.data[0, 0] == 1.0
        with pytest.raises(ValueError):
            A.data[0, 0] = 2.0

    def test_equality_and_hash(self):
        """Equal contents compare and hash equal."""
        assert DenseMatrix.identity(2) == DenseMatrix.from_rows([[1, 0], [0, 1]])
        assert hash(DenseMatrix.identity(2)) == hash(DenseMatrix.from_rows([[1, 0], [0, 1]]))


class TestMatvec:
    """Test products with A and A^T."""

    def test_matvec_example(self):
        """[[1,2],[3,4]] (1,1) = (3,7) and the transpose gives (4,6)."""
        A = DenseMatrix.from_rows([[1, 2], [3, 4]])
        assert list(matvec(A, [1, 1])) == [3.0, 7.0]
        assert list(matvec_t(A, [1, 1])) == [4.0, 6.0]

    def test_shape_mismatch(self):
        """Mismatched lengths raise DimensionError."""
        A = DenseMatrix.from_rows([[1, 2], [3, 4]])
        with pytest.raises(DimensionError):
            matvec(A, [1, 1, 1])
        with pytest.raises(DimensionError):
            matvec_t(A, [1])

    def test_adjoint_identity(self):
        """<Ax, v> = <x, A^T v> on random data."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            A = DenseMatrix(rng.standard_normal((7, 4)))
            x = rng.standard_normal(4)
            v = rng.standard_normal(7)
            lhs = float(matvec(A, x) @ v)
            rhs = float(x @ matvec_t(A, v))
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_hadamard_pow(self):
        """Elementwise powers keep signs for odd exponents."""
        assert list(hadamard_pow([-2.0, 3.0], 3)) == [-8.0, 27.0]
        with pytest.raises(DomainError):
            hadamard_pow([1.0], 0)


class TestSpectralNorm:
    """Test power iteration estimates."""

    def test_gram_norm_matches_eigvalsh(self):
        """Power iteration agrees with the dense eigen solver."""
        rng = np.random.default_rng(11)
        A = rng.standard_normal((5, 3))
        expected = float(np.max(np.linalg.eigvalsh(A.T @ A)))
        estimate = gram_spectral_norm(A, tol=1e-13, max_iter=100_000)
        assert abs(estimate - expected) <= 1e-8 * expected

    def test_zero_matrix(self):
        """A zero matrix has zero norm without iterating."""
        result = gram_spectral_estimate(np.zeros((3, 2)))
        assert result.value == 0.0
        assert result.converged

    def test_non_convergence_flagged(self):
        """Exhausting the iteration budget clears the converged flag."""
        H = np.diag([1.0, 0.99])
        result = power_iteration(lambda u: H @ u, 2, tol=1e-14, max_iter=3,
                                 start=np.array([0.01, 1.0]))
        assert not result.converged
        assert result.iterations == 3
        assert result.value <= 1.0

    def test_rayleigh_bound(self):
        """The estimate never exceeds the true spectral norm."""
        rng = np.random.default_rng(5)
        for _ in range(10):
            B = rng.standard_normal((4, 4))
            H = B + B.T
            expected = float(np.max(np.abs(np.linalg.eigvalsh(H))))
            estimate = symmetric_spectral_norm(H).value
            assert estimate <= expected * (1 + 1e-12)

    def test_bounds_random_vectors(self):
        """The Gram norm is at least ||A^T A u|| / ||u|| for any vector u."""
        rng = np.random.default_rng(23)
        for _ in range(5):
            A = rng.standard_normal((8, 5))
            G = A.T @ A
            estimate = gram_spectral_norm(A, tol=1e-12, max_iter=100_000)
            for _ in range(200):
                u = rng.standard_normal(5)
                assert estimate >= np.linalg.norm(G @ u) / np.linalg.norm(u) * (1 - 1e-9)

    def test_opposite_sign_tie(self):
        """Eigenvalues -1 and 1 give norm 1, not a vanishing Rayleigh quotient."""
        H = np.diag([-1.0, 1.0])
        result = symmetric_spectral_norm(H)
        assert result.converged
        assert result.value == pytest.approx(1.0, rel=1e-12)

    def test_non_square_rejected(self):
        """symmetric_spectral_norm needs a square matrix."""
        with pytest.raises(DimensionError):
            symmetric_spectral_norm(np.ones((2, 3)))

    def test_bad_tolerance(self):
        """Non-positive tolerance is a domain error."""
        with pytest.raises(DomainError):
            power_iteration(lambda u: u, 2, tol=0.0)


if __name__ == "__main__":
    pytest.main([__file__])
