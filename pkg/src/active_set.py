"""
Lawson-Hanson active-set reference solver.
"""

import logging
import time
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq

from .errors import DomainError, MaxItersError
from .linalg import Vector
from .problems import NnlsProblem
from .reports import SolveReport, StopReason, finish_report, snapshot

logger = logging.getLogger(__name__)

DEFAULT_LH_TOL = 1e-10
# Cholesky pivots below this fraction of the largest one count as singular.
PIVOT_RATIO_FLOOR = 1e-10


def _passive_solve(A: np.ndarray, y: Vector, passive: np.ndarray) -> Tuple[Vector, bool]:
    """Least squares restricted to the passive columns.

    Solves the normal equations by Cholesky; a singular or badly conditioned
    passive set falls back to the minimum-norm solution and is flagged.
    """
    z = np.zeros(A.shape[1])
    idx = np.flatnonzero(passive)
    if idx.size == 0:
        return z, False
    A_P = A[:, idx]
    gram = A_P.T @ A_P
    try:
        factor, lower = cho_factor(gram, check_finite=False)
        pivots = np.abs(np.diag(factor))
        if np.min(pivots) <= PIVOT_RATIO_FLOOR * np.max(pivots):
            raise LinAlgError("near-singular passive set")
        z[idx] = cho_solve((factor, lower), A_P.T @ y, check_finite=False)
        return z, False
    except LinAlgError:
        solution, _, rank, _ = lstsq(A_P, y)
        logger.debug("passive set of size %d has rank %d; using minimum-norm solution", idx.size, rank)
        z[idx] = solution
        return z, True


def solve_lawson_hanson(problem: NnlsProblem, tol: float = DEFAULT_LH_TOL,
                        max_iters: Optional[int] = None, kkt_tol: float = 1e-8) -> SolveReport:
    """Classical active-set NNLS.

    ``max_iters`` bounds the outer loop (moves into the passive set) and
    defaults to 3N. Terminates once every zero variable has dual value
    w_j <= tol.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    A = problem.A.data
    y = problem.y
    N = problem.n
    if max_iters is None:
        max_iters = 3 * N
    if max_iters < 1:
        raise DomainError(f"max_iters must be positive, got {max_iters}")

    started = time.perf_counter()
    x = np.zeros(N)
    passive = np.zeros(N, dtype=bool)
    blocked = np.zeros(N, dtype=bool)
    rank_deficient = False
    w = A.T @ (y - A @ x)
    trace = [snapshot(A, y, x, 0, float("nan"), started)]
    outer = 0

    while True:
        candidates = ~passive & ~blocked & (w > tol)
        if not np.any(candidates):
            break
        if outer >= max_iters:
            raise MaxItersError(
                f"Lawson-Hanson did not terminate within {max_iters} outer iterations",
                best=x.copy(), iterations=outer,
            )
        outer += 1
        j = int(np.argmax(np.where(candidates, w, -np.inf)))
        passive[j] = True
        z, deficient = _passive_solve(A, y, passive)
        rank_deficient |= deficient

        if z[j] <= 0:
            # the entering variable cannot move; skip it until the passive set changes
            passive[j] = False
            blocked[j] = True
            logger.debug("index %d rejected at outer iteration %d", j, outer)
            continue
        blocked[:] = False

        while np.any(passive & (z <= 0)):
            leaving = passive & (z <= 0)
            step = float(np.min(x[leaving] / (x[leaving] - z[leaving])))
            x = x + step * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
            z, deficient = _passive_solve(A, y, passive)
            rank_deficient |= deficient

        x = z
        w = A.T @ (y - A @ x)
        trace.append(snapshot(A, y, x, outer, float("nan"), started))

    stop_reason = StopReason.KKT
    if np.any(blocked):
        # rejected indices still have w_j > tol, so the dual test did not pass
        logger.warning("Lawson-Hanson stopped with %d rejected indices", int(np.sum(blocked)))
        stop_reason = StopReason.STALLED
    if rank_deficient:
        logger.warning("rank-deficient passive set encountered; minimum-norm fallback used")
    return finish_report(problem.A, y, x, "lh", outer, stop_reason, trace, kkt_tol,
                         rank_deficient=rank_deficient)


def compute_y_plus(problem: NnlsProblem, tol: float = DEFAULT_LH_TOL) -> Vector:
    """Projection y+ = A x+ of y onto the cone {Az : z >= 0}."""
    report = solve_lawson_hanson(problem, tol)
    return problem.A.data @ report.x_final
