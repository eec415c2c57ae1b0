"""
Iterative NNLS solvers: factorized gradient descent (GD-nL), its stochastic
variant (SGD-nL), RK4 integration of the continuous flow, and projected
gradient descent.
"""

import logging
import math
import time
from typing import Callable, List, Optional, Sequence

import numpy as np

from .config import SolverConfig
from .errors import DivergenceError, DomainError, FallbackSignal
from .linalg import Vector, as_vector, gram_spectral_norm
from .objective import _check_layers, overparam_gradients
from .problems import BATCH_STREAM, NnlsProblem, rng_stream
from .reports import SolveReport, StopReason, TracePoint, finish_report, snapshot
from .stepsize import (ConstantStep, StepRule, bb_stepsize,
                       lipschitz_stepsize)

logger = logging.getLogger(__name__)

# Called with each recorded point and the product iterate it describes.
TraceCallback = Optional[Callable[[TracePoint, Vector], None]]

DEFAULT_PGD_MAX_ITERS = 100_000
DEFAULT_PGD_TOL = 1e-10


class _Recorder:
    """Collects trace points and forwards them to an optional callback."""

    def __init__(self, problem: NnlsProblem, y_plus: Optional[Vector], z_plus: Optional[Vector],
                 layers: Optional[int], on_trace: TraceCallback):
        self.A = problem.A.data
        self.y = problem.y
        self.y_plus = None if y_plus is None else as_vector(y_plus, "y_plus")
        self.z_plus = None if z_plus is None else as_vector(z_plus, "z_plus")
        self.layers = layers
        self.on_trace = on_trace
        self.started = time.perf_counter()
        self.trace: List[TracePoint] = []

    def record(self, x_tilde: Vector, iteration: int, stepsize: float,
               flow_time: float = float("nan")) -> TracePoint:
        point = snapshot(self.A, self.y, x_tilde, iteration, stepsize, self.started,
                         self.y_plus, self.z_plus, self.layers, flow_time)
        self.trace.append(point)
        if self.on_trace is not None:
            self.on_trace(point, x_tilde)
        return point

    def diverged(self, iteration: int, hint: str) -> DivergenceError:
        logger.warning("iterate became non-finite at iteration %d", iteration)
        return DivergenceError(
            f"iterate became non-finite at iteration {iteration}; {hint}",
            trace=self.trace, iteration=iteration,
        )


def _method_name(prefix: str, layers: int, rule: StepRule) -> str:
    name = f"{prefix}-{layers}l"
    if rule.kind != "const":
        name += f"+{rule.kind}"
    return name


def solve_gd(problem: NnlsProblem, cfg: Optional[SolverConfig] = None,
             y_plus: Optional[Vector] = None, z_plus: Optional[Vector] = None,
             on_trace: TraceCallback = None) -> SolveReport:
    """Vanilla gradient descent on identically initialized factors.

    Iterates x <- x - eta * flow_field(x) and reports the product x^L.
    """
    return _factorized_descent(problem, cfg or SolverConfig(), y_plus, z_plus, on_trace,
                               stochastic=False)


def solve_sgd(problem: NnlsProblem, cfg: Optional[SolverConfig] = None,
              y_plus: Optional[Vector] = None, z_plus: Optional[Vector] = None,
              on_trace: TraceCallback = None) -> SolveReport:
    """Minibatch variant of ``solve_gd``.

    Each step draws batch_size rows without replacement from the seeded
    batch stream and scales the batch gradient by M / |B|. A full batch
    reproduces ``solve_gd`` exactly.
    """
    return _factorized_descent(problem, cfg or SolverConfig(), y_plus, z_plus, on_trace,
                               stochastic=True)


def _factorized_descent(problem: NnlsProblem, cfg: SolverConfig, y_plus, z_plus,
                        on_trace: TraceCallback, stochastic: bool) -> SolveReport:
    A = problem.A.data
    y = problem.y
    M, N = A.shape
    x = cfg.initial_point(N)
    if np.any(x <= 0):
        raise DomainError("initialization must be strictly positive")
    cfg.validate_strict()
    L = int(cfg.layers)
    rule = cfg.step_rule

    Q = p = None
    if cfg.precompute_gram:
        Q = A.T @ A
        p = A.T @ y

    batch = cfg.resolve_batch_size(M) if stochastic else M
    rng = rng_stream(cfg.seed, BATCH_STREAM) if stochastic and batch < M else None
    scale = M / batch

    def field(v: Vector) -> Vector:
        x_tilde = np.power(v, L)
        if rng is not None:
            rows = np.sort(rng.choice(M, size=batch, replace=False))
            A_B = A[rows]
            common = scale * (A_B.T @ (A_B @ x_tilde - y[rows]))
        elif Q is not None:
            common = Q @ x_tilde - p
        else:
            common = A.T @ (A @ x_tilde - y)
        return common * np.power(v, L - 1)

    method = _method_name("sgd" if stochastic else "gd", L, rule)
    recorder = _Recorder(problem, y_plus, z_plus, L, on_trace)
    eta = rule.initial()
    flow_time = 0.0
    recorder.record(np.power(x, L), 0, eta, flow_time)
    last_objective = recorder.trace[0].objective

    stop = StopReason.MAX_ITERS
    sign_flip_iter = None
    x_prev = None
    iterations = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, cfg.max_iters + 1):
            if rule.kind == "bb" and x_prev is not None:
                try:
                    eta = bb_stepsize(x, x_prev, problem.A)
                except FallbackSignal as e:
                    logger.debug("BB fallback at iteration %d: %s", t, e)
                    eta = rule.eta0
            elif rule.kind == "lipschitz" and rule.due(t):
                eta = lipschitz_stepsize(problem.A, y, x, L, rule.eta0, gram=Q)

            if rule.kind == "nesterov" and x_prev is not None:
                v = x + rule.momentum(t) * (x - x_prev)
            else:
                v = x
            g = field(v)
            x_next = v - eta * g
            if not np.all(np.isfinite(x_next)):
                raise recorder.diverged(t, "try a smaller step size")

            if L >= 3 and sign_flip_iter is None and np.any(x_next * x < 0):
                sign_flip_iter = t
                logger.warning("factor entry changed sign at iteration %d", t)

            x_prev, x = x, x_next
            iterations = t
            flow_time += eta

            if sign_flip_iter == t and cfg.stop_on_sign_flip:
                stop = StopReason.SIGN_FLIP
                break
            if cfg.target_residual is not None:
                residual = A @ np.power(x, L) - y
                if math.sqrt(float(residual @ residual)) <= cfg.target_residual:
                    stop = StopReason.TARGET_RESIDUAL
                    break
            if cfg.early_stopping and float(np.max(np.abs(g))) <= cfg.grad_tol:
                stop = StopReason.GRAD_TOL
                break
            if t % cfg.trace_every == 0:
                point = recorder.record(np.power(x, L), t, eta, flow_time)
                if cfg.early_stopping and abs(last_objective - point.objective) <= cfg.objective_tol:
                    stop = StopReason.OBJECTIVE_TOL
                    break
                last_objective = point.objective

    x_tilde = np.power(x, L)
    if recorder.trace[-1].iter != iterations:
        recorder.record(x_tilde, iterations, eta, flow_time)
    logger.info("%s stopped after %d iterations (%s)", method, iterations, stop.value)
    return finish_report(problem.A, y, x_tilde, method, iterations, stop, recorder.trace,
                         cfg.kkt_tol, layers=L, factor_final=x, sign_flip_iter=sign_flip_iter)


def overparam_gd_step(A, y, factors: Sequence[Vector], eta: float) -> List[Vector]:
    """One gradient step on every factor of the overparametrized loss."""
    gradients = overparam_gradients(A, y, factors)
    return [np.asarray(f, dtype=np.float64) - eta * g for f, g in zip(factors, gradients)]


def solve_flow_rk4(problem: NnlsProblem, layers: int, x0, t_end: float, dt: float,
                   y_plus: Optional[Vector] = None, z_plus: Optional[Vector] = None,
                   trace_every: int = 100, on_trace: TraceCallback = None,
                   kkt_tol: float = 1e-8) -> SolveReport:
    """Integrate x' = -flow_field(x) with classical fourth-order Runge-Kutta.

    Trace points carry the flow time; ``z_plus`` adds the Bregman distance
    D_F(z_plus, x^L) and ``y_plus`` the residual to the projected data.
    """
    L = _check_layers(layers)
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if not t_end > dt:
        raise DomainError(f"t_end must exceed dt, got t_end={t_end}, dt={dt}")
    if trace_every < 1:
        raise DomainError(f"trace_every must be positive, got {trace_every}")
    x = as_vector(x0, "x0").copy()
    if x.shape[0] != problem.n:
        raise DomainError(f"x0 has length {x.shape[0]}, problem has {problem.n} unknowns")
    if np.any(x <= 0):
        raise DomainError("x0 must be strictly positive")

    A = problem.A.data
    y = problem.y

    def velocity(v: Vector) -> Vector:
        return -(A.T @ (A @ np.power(v, L) - y)) * np.power(v, L - 1)

    recorder = _Recorder(problem, y_plus, z_plus, L, on_trace)
    recorder.record(np.power(x, L), 0, dt, 0.0)
    steps = int(math.ceil(t_end / dt - 1e-9))
    t = 0.0

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            h = min(dt, t_end - t)
            k1 = velocity(x)
            k2 = velocity(x + 0.5 * h * k1)
            k3 = velocity(x + 0.5 * h * k2)
            k4 = velocity(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = min(k * dt, t_end)
            if not np.all(np.isfinite(x)):
                raise recorder.diverged(k, f"reduce dt (currently {dt})")
            if k % trace_every == 0 or k == steps:
                recorder.record(np.power(x, L), k, h, t)

    return finish_report(problem.A, y, np.power(x, L), f"flow-{L}l", steps,
                         StopReason.TIME_HORIZON, recorder.trace, kkt_tol,
                         layers=L, factor_final=x)


def solve_pgd(problem: NnlsProblem, step_rule: Optional[StepRule] = None,
              max_iters: int = DEFAULT_PGD_MAX_ITERS, tol: float = DEFAULT_PGD_TOL,
              x0=None, target_residual: Optional[float] = None, trace_every: int = 100,
              precompute_gram: bool = False, early_stopping: bool = True,
              y_plus: Optional[Vector] = None, on_trace: TraceCallback = None,
              kkt_tol: float = 1e-8) -> SolveReport:
    """Projected gradient descent x <- max(x - eta * A^T(Ax - y), 0).

    The default step is 1 / ||A^T A||_2. A ``lipschitz`` rule resolves to
    the same constant since the least-squares Hessian does not move;
    ``bb`` and ``nesterov`` rules apply to the raw iterate.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if max_iters < 1:
        raise DomainError(f"max_iters must be positive, got {max_iters}")
    if trace_every < 1:
        raise DomainError(f"trace_every must be positive, got {trace_every}")

    A = problem.A.data
    y = problem.y
    N = problem.n
    if step_rule is None or step_rule.kind == "lipschitz":
        lipschitz = gram_spectral_norm(problem.A)
        step_rule = ConstantStep(1.0 / lipschitz if lipschitz > 0 else 1.0)
    rule = step_rule

    if x0 is None:
        x = np.zeros(N)
    else:
        x = as_vector(x0, "x0")
        if x.shape[0] != N:
            raise DomainError(f"x0 has length {x.shape[0]}, problem has {N} unknowns")
        x = np.maximum(x, 0.0)

    Q = p = None
    if precompute_gram:
        Q = A.T @ A
        p = A.T @ y

    def gradient(v: Vector) -> Vector:
        if Q is not None:
            return Q @ v - p
        return A.T @ (A @ v - y)

    method = "pgd" if rule.kind == "const" else f"pgd+{rule.kind}"
    recorder = _Recorder(problem, y_plus, None, None, on_trace)
    eta = rule.initial()
    recorder.record(x, 0, eta)

    stop = StopReason.MAX_ITERS
    x_prev = None
    iterations = 0

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, max_iters + 1):
            if rule.kind == "bb" and x_prev is not None:
                try:
                    eta = bb_stepsize(x, x_prev, problem.A)
                except FallbackSignal:
                    eta = rule.eta0
            if rule.kind == "nesterov" and x_prev is not None:
                v = x + rule.momentum(t) * (x - x_prev)
            else:
                v = x
            x_next = np.maximum(v - eta * gradient(v), 0.0)
            if not np.all(np.isfinite(x_next)):
                raise recorder.diverged(t, "try a smaller step size")

            change = float(np.max(np.abs(x_next - x)))
            x_prev, x = x, x_next
            iterations = t

            if target_residual is not None:
                residual = A @ x - y
                if math.sqrt(float(residual @ residual)) <= target_residual:
                    stop = StopReason.TARGET_RESIDUAL
                    break
            if early_stopping and change <= tol:
                stop = StopReason.STEP_TOL
                break
            if t % trace_every == 0:
                recorder.record(x, t, eta)

    if recorder.trace[-1].iter != iterations:
        recorder.record(x, iterations, eta)
    logger.info("%s stopped after %d iterations (%s)", method, iterations, stop.value)
    return finish_report(problem.A, y, x, method, iterations, stop, recorder.trace, kkt_tol)
