"""
Losses, derivatives, Bregman machinery, KKT residuals and closed-form bounds
for non-negative least squares and its Hadamard-factorized formulation.

Gradient convention: ``flow_field`` returns [A^T(A x^L - y)] ⊙ x^(L-1) with no
leading factor L. It drives the per-factor dynamics of identically initialized
factors. The exact gradient of ``reduced_loss`` is ``L * flow_field`` and
``reduced_hessian`` is the Jacobian of that exact gradient.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

from .errors import DimensionError, DomainError
from .linalg import DenseMatrix, Vector, as_matrix, as_vector


def _conform(A, y, x) -> Tuple[DenseMatrix, Vector, Vector]:
    A = as_matrix(A)
    y = as_vector(y, "y")
    x = as_vector(x, "x")
    if y.shape[0] != A.rows:
        raise DimensionError(f"y has length {y.shape[0]} but A has {A.rows} rows")
    if x.shape[0] != A.cols:
        raise DimensionError(f"x has length {x.shape[0]} but A has {A.cols} columns")
    return A, y, x


def _check_layers(L: int, minimum: int = 2) -> int:
    if int(L) != L or L < minimum:
        raise DomainError(f"number of layers must be an integer >= {minimum}, got {L}")
    return int(L)


def nnls_objective(A, y, z) -> float:
    """||A z - y||_2^2."""
    A, y, z = _conform(A, y, z)
    residual = A.data @ z - y
    return float(residual @ residual)


def reduced_loss(A, y, x, L: int) -> float:
    """½||A x^{⊙L} - y||_2^2."""
    A, y, x = _conform(A, y, x)
    L = _check_layers(L)
    residual = A.data @ np.power(x, L) - y
    return 0.5 * float(residual @ residual)


def flow_field(A, y, x, L: int) -> Vector:
    """g(x) = [A^T(A x^{⊙L} - y)] ⊙ x^{⊙(L-1)}; the flow is x' = -g(x)."""
    A, y, x = _conform(A, y, x)
    L = _check_layers(L)
    residual = A.data @ np.power(x, L) - y
    return (A.data.T @ residual) * np.power(x, L - 1)


def overparam_gradients(A, y, factors: Sequence) -> List[Vector]:
    """Gradient of the factorized loss with respect to each of the L factors.

    The common term A^T(A x̃ - y) is evaluated once; the product of the other
    factors is built from prefix and suffix products, so zero entries are safe.
    """
    if len(factors) < 2:
        raise DomainError(f"need at least 2 factors, got {len(factors)}")
    A = as_matrix(A)
    y = as_vector(y, "y")
    if y.shape[0] != A.rows:
        raise DimensionError(f"y has length {y.shape[0]} but A has {A.rows} rows")
    vectors = [as_vector(f, f"factor {k}") for k, f in enumerate(factors)]
    for k, vector in enumerate(vectors):
        if vector.shape[0] != A.cols:
            raise DimensionError(f"factor {k} has length {vector.shape[0]}, expected {A.cols}")

    count = len(vectors)
    prefix = [np.ones(A.cols)]
    for vector in vectors[:-1]:
        prefix.append(prefix[-1] * vector)
    suffix = [np.ones(A.cols)]
    for vector in reversed(vectors[1:]):
        suffix.append(vector * suffix[-1])
    suffix.reverse()

    product = prefix[-1] * vectors[-1]
    common = A.data.T @ (A.data @ product - y)
    gradients = []
    for k in range(count):
        if k == 0:
            others = suffix[0]
        elif k == count - 1:
            others = prefix[k]
        else:
            others = prefix[k] * suffix[k]
        gradients.append(common * others)
    return gradients


def reduced_hessian(A, y, x, L: int, gram: np.ndarray = None) -> DenseMatrix:
    """Hessian of the reduced loss.

    L^2 A^T A ⊙ [x^{L-1} (x^{L-1})^T] + L(L-1) diag(A^T(A x^L - y) ⊙ x^{L-2}).
    ``gram`` may carry a precomputed A^T A.
    """
    A, y, x = _conform(A, y, x)
    L = _check_layers(L)
    Q = A.gram() if gram is None else gram
    u = np.power(x, L - 1)
    residual_grad = A.data.T @ (A.data @ np.power(x, L) - y)
    H = (L * L) * Q * np.outer(u, u)
    H[np.diag_indices_from(H)] += L * (L - 1) * residual_grad * np.power(x, L - 2)
    return DenseMatrix(0.5 * (H + H.T))


def bregman_potential(x, L: int) -> float:
    """F(x): ½Σ(x log x - x) for L = 2, L/(2(2-L)) Σ x^{2/L} otherwise.

    0 log 0 is taken as 0.
    """
    x = as_vector(x)
    L = _check_layers(L)
    if np.any(x < 0):
        raise DomainError("Bregman potential is defined on the non-negative orthant only")
    if L == 2:
        return 0.5 * float(np.sum(xlogy(x, x) - x))
    return L / (2.0 * (2 - L)) * float(np.sum(np.power(x, 2.0 / L)))


def bregman_gradient(q, L: int) -> Vector:
    """∇F(q): ½ log q for L = 2, q^{2/L - 1} / (2 - L) otherwise. Needs q > 0."""
    q = as_vector(q, "q")
    L = _check_layers(L)
    if np.any(q <= 0):
        raise DomainError("Bregman gradient needs strictly positive entries")
    if L == 2:
        return 0.5 * np.log(q)
    return np.power(q, 2.0 / L - 1.0) / (2 - L)


def bregman_divergence(p, q, L: int) -> float:
    """D_F(p, q) = F(p) - F(q) - <∇F(q), p - q>.

    Evaluated coordinatewise; each coordinate term is non-negative by
    convexity, so rounding residue below zero is clipped.
    """
    p = as_vector(p, "p")
    q = as_vector(q, "q")
    L = _check_layers(L)
    if p.shape != q.shape:
        raise DimensionError(f"p has length {p.shape[0]} but q has length {q.shape[0]}")
    if np.any(p < 0):
        raise DomainError("p must be non-negative")
    if np.any(q <= 0):
        raise DomainError("q must be strictly positive")
    if L == 2:
        terms = 0.5 * (xlogy(p, p / q) - p + q)
    else:
        a = 2.0 / L
        scale = L / (2.0 * (2 - L))
        terms = scale * (np.power(p, a) - np.power(q, a)) - np.power(q, a - 1.0) * (p - q) / (2 - L)
    return float(np.sum(np.maximum(terms, 0.0)))


@dataclass(frozen=True)
class BregmanContext:
    """Bregman geometry for a fixed depth and dimension."""
    layers: int
    dim: int

    def __post_init__(self):
        _check_layers(self.layers)
        if self.dim < 1:
            raise DomainError(f"dimension must be positive, got {self.dim}")

    def _check(self, v) -> Vector:
        v = as_vector(v)
        if v.shape[0] != self.dim:
            raise DimensionError(f"expected length {self.dim}, got {v.shape[0]}")
        return v

    def potential(self, x) -> float:
        return bregman_potential(self._check(x), self.layers)

    def gradient(self, q) -> Vector:
        return bregman_gradient(self._check(q), self.layers)

    def divergence(self, p, q) -> float:
        return bregman_divergence(self._check(p), self._check(q), self.layers)


@dataclass
class KktReport:
    """Violations of the NNLS optimality conditions at a candidate point."""
    primal_violation: float
    dual_violation: float
    complementarity: float
    dual_vector: Vector = field(repr=False)
    tol: float = 1e-8

    @property
    def optimal(self) -> bool:
        return max(self.primal_violation, self.dual_violation, self.complementarity) <= self.tol

    def to_dict(self):
        return {
            "primal_violation": self.primal_violation,
            "dual_violation": self.dual_violation,
            "complementarity": self.complementarity,
            "tol": self.tol,
            "optimal": self.optimal,
        }


def kkt_check(A, y, x, tol: float = 1e-8) -> KktReport:
    """Check the KKT conditions with w* = A^T(y - A x).

    Indices with x_i <= tol count as active and need w*_i <= tol; the
    remaining indices need |w*_i| <= tol.
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    A, y, x = _conform(A, y, x)
    w = A.data.T @ (y - A.data @ x)
    active = x <= tol

    primal = max(0.0, -float(np.min(x)))
    dual = 0.0
    if np.any(active):
        dual = max(dual, float(np.max(w[active])))
    if np.any(~active):
        dual = max(dual, float(np.max(np.abs(w[~active]))))
    complementarity = float(np.max(np.abs(x * w)))
    return KktReport(primal, max(dual, 0.0), complementarity, w, tol)


def alpha_bound(Q_plus: float, epsilon: float, L: int, N: int,
                variant: str = "strict") -> float:
    """Initialization scale h(Q+, ε) below which the limit is ε-close to ℓ1-minimal.

    For L = 2 the ``strict`` variant exp(-½ - (Q+² + N/e)/(2ε)) is the
    default; ``loose`` gives min(e^{-1/2}, exp(½ - (Q+² + N/e)/(2ε))).
    """
    if epsilon <= 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if Q_plus < 0:
        raise DomainError(f"Q_plus must be non-negative, got {Q_plus}")
    if N < 1:
        raise DomainError(f"N must be positive, got {N}")
    L = _check_layers(L)
    if L == 2:
        exponent = (Q_plus ** 2 + N * np.exp(-1.0)) / (2.0 * epsilon)
        if variant == "strict":
            return float(np.exp(-0.5 - exponent))
        if variant == "loose":
            return float(min(np.exp(-0.5), np.exp(0.5 - exponent)))
        raise DomainError(f"unknown alpha_bound variant '{variant}'")
    return float((2.0 * epsilon / (L * (Q_plus + N + epsilon))) ** (1.0 / (L - 2)))


def weighted_init(w, theta: float) -> Vector:
    """x0 = exp(-½(1 + θ w)), the initialization giving a weighted-ℓ1 bias."""
    w = as_vector(w, "w")
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if np.any(w <= 0) or np.any(w > 1):
        raise DomainError("weights must lie in (0, 1]")
    if abs(float(np.max(w)) - 1.0) > 1e-12:
        raise DomainError("weights must have max-norm 1")
    return np.exp(-0.5 * (1.0 + theta * w))


def weighted_l1_norm(z, w) -> float:
    """||z ⊙ w||_1."""
    z = as_vector(z, "z")
    w = as_vector(w, "w")
    if z.shape != w.shape:
        raise DimensionError(f"z has length {z.shape[0]} but w has length {w.shape[0]}")
    return float(np.sum(np.abs(z * w)))


def project_nonneg(v) -> Vector:
    """Euclidean projection onto the non-negative orthant."""
    return np.maximum(as_vector(v, "v"), 0.0)
