"""
Solver outcomes: stop reasons, trace points and solve reports.
"""

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from jinja2 import Template

from .linalg import Vector
from .objective import KktReport, bregman_divergence, kkt_check, nnls_objective
from .tables import ResultTable, TEMPLATES_DIR

ABSENT = float("nan")


class StopReason(Enum):
    """Why an iterative solver stopped."""
    GRAD_TOL = "GradTol"
    OBJECTIVE_TOL = "ObjectiveTol"
    MAX_ITERS = "MaxIters"
    SIGN_FLIP = "SignFlipDetected"
    TARGET_RESIDUAL = "TargetResidual"
    STEP_TOL = "StepTol"
    KKT = "KktSatisfied"
    STALLED = "Stalled"
    TIME_HORIZON = "TimeHorizon"


@dataclass
class TracePoint:
    """One recorded iterate. NaN marks a quantity that was not requested."""
    iter: int
    objective: float
    l1_norm: float
    min_entry: float
    stepsize: float
    wall_seconds: float
    residual_yplus_sq: float = ABSENT
    time: float = ABSENT
    bregman: float = ABSENT

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iter": self.iter,
            "objective": self.objective,
            "residual_yplus_sq": self.residual_yplus_sq,
            "l1_norm": self.l1_norm,
            "min_entry": self.min_entry,
            "stepsize": self.stepsize,
            "wall_seconds": self.wall_seconds,
            "time": self.time,
            "bregman": self.bregman,
        }


TRACE_COLUMNS = (
    ("iter", "int"), ("time", "float"), ("objective", "float"),
    ("residual_yplus_sq", "float"), ("bregman", "float"), ("l1_norm", "float"),
    ("min_entry", "float"), ("stepsize", "float"), ("wall_seconds", "float"),
)


def snapshot(A: np.ndarray, y: Vector, x_tilde: Vector, iteration: int, stepsize: float,
             started: float, y_plus: Optional[Vector] = None, z_plus: Optional[Vector] = None,
             layers: Optional[int] = None, flow_time: float = ABSENT) -> TracePoint:
    """Record the product iterate x̃ at one iteration."""
    Ax = A @ x_tilde
    residual = Ax - y
    point = TracePoint(
        iter=iteration,
        objective=float(residual @ residual),
        l1_norm=float(np.sum(np.abs(x_tilde))),
        min_entry=float(np.min(x_tilde)),
        stepsize=float(stepsize),
        wall_seconds=time.perf_counter() - started,
        time=float(flow_time),
    )
    if y_plus is not None:
        gap = Ax - y_plus
        point.residual_yplus_sq = float(gap @ gap)
    if z_plus is not None and layers is not None and np.all(x_tilde > 0):
        point.bregman = bregman_divergence(z_plus, x_tilde, max(layers, 2))
    return point


@dataclass
class SolveReport:
    """Final state of a solver run.

    ``x_final`` is the product iterate x^{⊙L} for factorized solvers and the
    raw iterate otherwise; ``factor_final`` keeps the reduced iterate x.
    """
    method: str
    x_final: Vector
    objective_final: float
    iterations: int
    stop_reason: StopReason
    kkt: KktReport
    trace: List[TracePoint] = field(default_factory=list)
    layers: Optional[int] = None
    factor_final: Optional[Vector] = None
    rank_deficient: bool = False
    sign_flip_iter: Optional[int] = None

    @property
    def residual_norm(self) -> float:
        return math.sqrt(self.objective_final)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "method": self.method,
            "layers": self.layers,
            "stop_reason": self.stop_reason.value,
            "iterations": self.iterations,
            "objective_final": self.objective_final,
            "kkt": self.kkt.to_dict(),
            "rank_deficient": self.rank_deficient,
            "sign_flip_iter": self.sign_flip_iter,
            "x_final": [float(v) for v in self.x_final],
        }
        if self.factor_final is not None:
            data["factor_final"] = [float(v) for v in self.factor_final]
        return data

    def trace_table(self, timings: bool = True) -> ResultTable:
        columns = [spec for spec in TRACE_COLUMNS if timings or spec[0] != "wall_seconds"]
        table = ResultTable.with_columns(*columns, metadata={"method": self.method})
        for point in self.trace:
            values = point.to_dict()
            table.add_row(**{name: values[name] for name, _ in columns})
        return table

    def render(self) -> str:
        """Humane summary for terminals."""
        template = Template((TEMPLATES_DIR / "report.txt.template").read_text(encoding="utf-8"))
        solution = np.array2string(np.asarray(self.x_final), precision=6, threshold=12)
        return template.render(
            method=self.method,
            layers=self.layers,
            stop_reason=self.stop_reason.value,
            iterations=self.iterations,
            objective=self.objective_final,
            kkt=self.kkt,
            rank_deficient=self.rank_deficient,
            sign_flip_iter=self.sign_flip_iter,
            solution=solution,
        )


def finish_report(A: np.ndarray, y: Vector, x_final: Vector, method: str, iterations: int,
                  stop_reason: StopReason, trace: List[TracePoint], kkt_tol: float = 1e-8,
                  **extra: Any) -> SolveReport:
    """Build a report whose objective and KKT data are recomputed from x_final."""
    x_final = np.array(x_final, dtype=np.float64)
    return SolveReport(
        method=method,
        x_final=x_final,
        objective_final=nnls_objective(A, y, x_final),
        iterations=iterations,
        stop_reason=stop_reason,
        kkt=kkt_check(A, y, x_final, kkt_tol),
        trace=trace,
        **extra,
    )
