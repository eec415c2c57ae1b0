"""
Dense linear algebra and Hadamard calculus shared by every solver.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

# 1-D float64 arrays stand in for vectors throughout the package.
Vector = np.ndarray

DEFAULT_POWER_TOL = 1e-10
DEFAULT_POWER_MAX_ITER = 1000


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major real matrix, the measurement operator A."""

    data: np.ndarray

    def __post_init__(self):
        array = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
            raise DimensionError(f"DenseMatrix needs a non-empty 2-D array, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise DomainError("DenseMatrix entries must be finite")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def flat(self) -> np.ndarray:
        """Row-major flattening, length rows * cols."""
        return self.data.ravel(order="C")

    def gram(self) -> np.ndarray:
        """Q = A^T A."""
        return self.data.T @ self.data

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> 'DenseMatrix':
        return cls(np.asarray(rows, dtype=np.float64))

    @classmethod
    def from_flat(cls, rows: int, cols: int, values: Sequence[float]) -> 'DenseMatrix':
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != rows * cols:
            raise DimensionError(
                f"expected {rows}*{cols}={rows * cols} entries, got {values.size}"
            )
        return cls(values.reshape(rows, cols))

    @classmethod
    def identity(cls, n: int) -> 'DenseMatrix':
        return cls(np.eye(n))

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))


@dataclass(frozen=True)
class PowerIterationResult:
    """Outcome of a power iteration run."""
    value: float
    iterations: int
    converged: bool


def as_matrix(A: Any) -> DenseMatrix:
    """Coerce a DenseMatrix or nested sequence into a DenseMatrix."""
    if isinstance(A, DenseMatrix):
        return A
    return DenseMatrix(np.asarray(A, dtype=np.float64))


def as_vector(x: Any, name: str = "x") -> Vector:
    """Coerce to a finite 1-D float64 array."""
    vector = np.asarray(x, dtype=np.float64)
    if vector.ndim == 0:
        vector = vector.reshape(1)
    if vector.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {vector.shape}")
    if vector.size == 0:
        raise DimensionError(f"{name} must not be empty")
    if not np.all(np.isfinite(vector)):
        raise DomainError(f"{name} has non-finite entries")
    return vector


def matvec(A: Any, x: Any) -> Vector:
    """A x."""
    A = as_matrix(A)
    x = as_vector(x)
    if x.shape[0] != A.cols:
        raise DimensionError(f"matvec: A is {A.rows}x{A.cols} but x has length {x.shape[0]}")
    return A.data @ x


def matvec_t(A: Any, v: Any) -> Vector:
    """A^T v."""
    A = as_matrix(A)
    v = as_vector(v, "v")
    if v.shape[0] != A.rows:
        raise DimensionError(f"matvec_t: A is {A.rows}x{A.cols} but v has length {v.shape[0]}")
    return A.data.T @ v


def hadamard_pow(x: Any, L: int) -> Vector:
    """Elementwise L-th power x^{⊙L}."""
    if int(L) != L or L < 1:
        raise DomainError(f"hadamard_pow needs an integer exponent >= 1, got {L}")
    return np.power(as_vector(x), int(L))


def power_iteration(apply: Callable[[Vector], Vector], dim: int,
                    tol: float = DEFAULT_POWER_TOL,
                    max_iter: int = DEFAULT_POWER_MAX_ITER,
                    start: Optional[Vector] = None) -> PowerIterationResult:
    """Largest-magnitude eigenvalue of a symmetric operator.

    The estimate is ||H v|| for the normalized iterate v, never below the
    Rayleigh quotient, also when eigenvalues of opposite sign tie in
    magnitude. Stops once two successive estimates agree to relative
    tolerance ``tol``.
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    v = np.ones(dim) if start is None else np.array(start, dtype=np.float64)
    v = v / np.linalg.norm(v)
    w = apply(v)
    if not np.any(w):
        # the start vector may sit in the kernel; retry from each basis vector
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = 1.0
            w = apply(e)
            if np.any(w):
                v = e
                break
        else:
            return PowerIterationResult(0.0, 1, True)

    estimate = float(np.linalg.norm(w))
    for iteration in range(1, max_iter + 1):
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return PowerIterationResult(estimate, iteration, True)
        v = w / norm
        w = apply(v)
        previous, estimate = estimate, float(np.linalg.norm(w))
        if abs(estimate - previous) <= tol * estimate:
            return PowerIterationResult(estimate, iteration, True)

    logger.warning("power iteration did not converge in %d steps (estimate %.6g)", max_iter, estimate)
    return PowerIterationResult(estimate, max_iter, False)


def gram_spectral_estimate(A: Any, tol: float = DEFAULT_POWER_TOL,
                           max_iter: int = DEFAULT_POWER_MAX_ITER) -> PowerIterationResult:
    """Power iteration on A^T A without forming it; keeps the convergence flag."""
    A = as_matrix(A)
    if not np.any(A.data):
        return PowerIterationResult(0.0, 0, True)
    data = A.data
    return power_iteration(lambda u: data.T @ (data @ u), A.cols, tol, max_iter)


def gram_spectral_norm(A: Any, tol: float = DEFAULT_POWER_TOL,
                       max_iter: int = DEFAULT_POWER_MAX_ITER) -> float:
    """||A^T A||_2, the Lipschitz constant of the least-squares gradient."""
    return gram_spectral_estimate(A, tol, max_iter).value


def symmetric_spectral_norm(H: Any, tol: float = DEFAULT_POWER_TOL,
                            max_iter: int = DEFAULT_POWER_MAX_ITER) -> PowerIterationResult:
    """||H||_2 for an explicit symmetric matrix."""
    H = as_matrix(H)
    if H.rows != H.cols:
        raise DimensionError(f"symmetric_spectral_norm needs a square matrix, got {H.shape}")
    if not np.any(H.data):
        return PowerIterationResult(0.0, 0, True)
    data = H.data
    return power_iteration(lambda u: data @ u, H.cols, tol, max_iter)
