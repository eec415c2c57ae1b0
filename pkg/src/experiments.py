"""
Declarative experiment harness.

An ExperimentSpec names one study (initialization sweep, per-entry error
traces, step-size race, stability under negative corruption, flow rate check,
timing, convergence comparison) and its parameters; ``run_experiment`` turns
it into a ResultTable. Trial i always uses seed master_seed + i and rows are
ordered by (trial, grid point) whatever the thread count.
"""

import hashlib
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from . import __version__
from .active_set import solve_lawson_hanson
from .audit import RunLog
from .config import SolverConfig
from .errors import DivergenceError, MaxItersError, ParseError, ValidationError
from .linalg import gram_spectral_norm
from .problems import SIGNALS, NnlsProblem, make_problem
from .reports import SolveReport, StopReason
from .solvers import solve_flow_rk4, solve_gd, solve_pgd, solve_sgd
from .stepsize import (BarzilaiBorweinStep, ConstantStep, LipschitzOracleStep,
                       NesterovStep)
from .tables import ResultTable

logger = logging.getLogger(__name__)

FACTORIZED_METHOD = re.compile(r"^(gd|sgd)-(\d+)l(?:\+(bb|nesterov|lipschitz))?$")
PLAIN_METHODS = ("lh", "pgd", "pgd+bb", "pgd+nesterov")
RATE_METHODS = ("flow", "gd")

BUDGET_EXHAUSTED = "budget-exhausted"
DIVERGED = "diverged"
OK = "ok"

RESIDUAL_FLOOR = 1e-24
BREGMAN_SLACK = 1e-8
TIMING_RATIO_LIMIT = 3.0


class ExperimentKind(Enum):
    INIT_SWEEP = "InitSweep"
    LAYER_TRACE = "LayerTrace"
    STEPSIZE_RACE = "StepsizeRace"
    STABILITY = "Stability"
    RATE_CHECK = "RateCheck"
    TIMING = "Timing"
    CONVERGENCE_COMPARE = "ConvergenceCompare"


SHARED_DEFAULTS: Dict[str, Any] = {
    "s": 3,
    "alpha_grid": [1e-2],
    "q_grid": [0.0],
    "eta": 1e-2,
    "alpha": 1e-2,
    "layers_list": [2, 3],
    "trials": 1,
    "master_seed": 0,
    "max_iters": 1_000_000,
    "precision": 1e-3,
    "methods": [],
    "signal": "sparse",
    "normalize": True,
    "unit_norm": False,
    "noise": 0.0,
    "t_end": 1e3,
    "dt": 1e-2,
    "sizes": [256],
    "objective_tol": 1e-16,
    "grad_tol": 1e-10,
    "trace_every": 100,
}

FLOAT_FIELDS = ("eta", "alpha", "precision", "noise", "t_end", "dt", "objective_tol", "grad_tol")
INT_FIELDS = ("m", "n", "s", "trials", "master_seed", "max_iters", "trace_every")
FLOAT_LISTS = ("alpha_grid", "q_grid")
INT_LISTS = ("layers_list", "sizes")

KIND_DEFAULTS: Dict[ExperimentKind, Dict[str, Any]] = {
    ExperimentKind.INIT_SWEEP: {
        "m": 10, "n": 50, "alpha_grid": [1e-3, 1e-2, 1e-1],
    },
    ExperimentKind.LAYER_TRACE: {
        "m": 30, "n": 50,
    },
    ExperimentKind.STEPSIZE_RACE: {
        "m": 128, "n": 256, "s": 4, "unit_norm": True, "alpha": 1.0, "eta": 0.02,
        "trials": 25, "max_iters": 100_000, "trace_every": 10,
        "methods": ["gd-2l", "gd-3l", "sgd-2l", "gd-2l+bb", "gd-3l+bb", "pgd"],
    },
    ExperimentKind.STABILITY: {
        "m": 30, "n": 50, "q_grid": [0.0, 0.3, 0.5, 0.7, 1.0], "trials": 20,
        "max_iters": 100_000, "methods": ["lh", "pgd", "gd-3l", "sgd-3l"],
    },
    ExperimentKind.RATE_CHECK: {
        "m": 256, "n": 128, "signal": "gaussian", "unit_norm": True, "noise": 0.05,
        "alpha": 1.0, "methods": ["flow", "gd"],
    },
    ExperimentKind.TIMING: {
        "m": None, "n": None, "alpha": 0.02, "max_iters": 1000, "trials": 1,
        "methods": ["pgd", "gd-2l", "gd-3l"],
    },
    ExperimentKind.CONVERGENCE_COMPARE: {
        "m": 256, "n": 256, "signal": "dense", "unit_norm": True, "max_iters": 5000,
        "trace_every": 10, "methods": ["gd-2l", "gd-3l", "pgd"],
    },
}


@dataclass
class ExperimentSpec:
    """Parameters of one experiment. Unset fields take the defaults of ``kind``."""

    kind: ExperimentKind
    m: Optional[int] = None
    n: Optional[int] = None
    s: Optional[int] = None
    alpha_grid: Optional[List[float]] = None
    q_grid: Optional[List[float]] = None
    eta: Optional[float] = None
    alpha: Optional[float] = None
    layers_list: Optional[List[int]] = None
    trials: Optional[int] = None
    master_seed: Optional[int] = None
    max_iters: Optional[int] = None
    precision: Optional[float] = None
    methods: Optional[List[str]] = None
    signal: Optional[str] = None
    normalize: Optional[bool] = None
    unit_norm: Optional[bool] = None
    noise: Optional[float] = None
    t_end: Optional[float] = None
    dt: Optional[float] = None
    sizes: Optional[List[int]] = None
    objective_tol: Optional[float] = None
    grad_tol: Optional[float] = None
    trace_every: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                self.kind = ExperimentKind(self.kind)
            except ValueError:
                known = ", ".join(kind.value for kind in ExperimentKind)
                raise ValidationError([f"unknown experiment kind '{self.kind}' (expected {known})"],
                                      "Experiment spec")
        defaults = dict(SHARED_DEFAULTS)
        defaults.update(KIND_DEFAULTS[self.kind])
        for name, value in defaults.items():
            if getattr(self, name) is None:
                setattr(self, name, list(value) if isinstance(value, list) else value)
        self._coerce()

    def _coerce(self):
        # YAML 1.1 reads "1e-3" as a string, so numbers are normalized here
        try:
            for name in FLOAT_FIELDS:
                setattr(self, name, float(getattr(self, name)))
            for name in INT_FIELDS:
                if getattr(self, name) is not None:
                    setattr(self, name, int(getattr(self, name)))
            for name in FLOAT_LISTS:
                setattr(self, name, [float(v) for v in getattr(self, name)])
            for name in INT_LISTS:
                setattr(self, name, [int(v) for v in getattr(self, name)])
            self.methods = [str(method) for method in self.methods]
        except (TypeError, ValueError) as e:
            raise ValidationError([f"malformed value: {e}"], "Experiment spec")

    def validate(self) -> List[str]:
        """Validate the spec and return a list of issues."""
        issues = []
        if self.kind != ExperimentKind.TIMING:
            if not self.m or not self.n or self.m < 1 or self.n < 1:
                issues.append(f"dimensions must be positive, got {self.m}x{self.n}")
            elif self.signal == "sparse" and not 1 <= self.s <= self.n:
                issues.append(f"sparsity must satisfy 1 <= s <= n, got s={self.s}")
        for name in ("alpha_grid", "q_grid", "layers_list", "sizes"):
            if not getattr(self, name):
                issues.append(f"{name} must not be empty")
        if self.trials < 1:
            issues.append(f"trials must be positive, got {self.trials}")
        if self.master_seed < 0:
            issues.append(f"master_seed must be non-negative, got {self.master_seed}")
        if self.max_iters < 1:
            issues.append(f"max_iters must be positive, got {self.max_iters}")
        for name in ("eta", "alpha", "precision", "dt", "t_end", "objective_tol", "grad_tol"):
            if not getattr(self, name) > 0:
                issues.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.t_end <= self.dt:
            issues.append("t_end must exceed dt")
        if any(a <= 0 for a in self.alpha_grid):
            issues.append("alpha_grid entries must be positive")
        if any(not 0.0 <= q <= 1.0 for q in self.q_grid):
            issues.append("q_grid entries must lie in [0, 1]")
        if any(int(L) != L or L < 2 for L in self.layers_list):
            issues.append("layers_list entries must be integers >= 2")
        if self.signal not in SIGNALS:
            issues.append(f"unknown signal '{self.signal}'")
        if self.noise < 0:
            issues.append("noise must be non-negative")
        if self.trace_every < 1:
            issues.append("trace_every must be positive")
        if not self.methods and self.kind != ExperimentKind.INIT_SWEEP and self.kind != ExperimentKind.LAYER_TRACE:
            issues.append("methods must not be empty")
        for method in self.methods:
            if self.kind == ExperimentKind.RATE_CHECK:
                known = method in RATE_METHODS
            else:
                known = method in PLAIN_METHODS or bool(FACTORIZED_METHOD.match(method))
            if not known:
                issues.append(f"unknown method '{method}' for {self.kind.value}")
        if self.kind == ExperimentKind.LAYER_TRACE and self.signal != "sparse":
            issues.append("LayerTrace needs a sparse signal")
        return issues

    def validate_strict(self):
        issues = self.validate()
        if issues:
            raise ValidationError(issues, "Experiment spec")

    def to_dict(self) -> Dict[str, Any]:
        data = {}
        for spec_field in fields(self):
            value = getattr(self, spec_field.name)
            data[spec_field.name] = value.value if isinstance(value, ExperimentKind) else value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentSpec':
        known = {spec_field.name for spec_field in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError([f"unknown key '{key}'" for key in unknown], "Experiment spec")
        if "kind" not in data:
            raise ValidationError(["missing key 'kind'"], "Experiment spec")
        return cls(**data)

    @classmethod
    def from_file(cls, spec_file: Union[str, Path]) -> 'ExperimentSpec':
        """Load a spec from a YAML document."""
        spec_file = Path(spec_file)
        try:
            text = spec_file.read_text(encoding="utf-8")
        except OSError as e:
            raise ParseError(f"cannot read {spec_file}: {e}")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ParseError(f"malformed spec file: {getattr(e, 'problem', e)}",
                             line=mark.line + 1 if mark else None)
        if not isinstance(data, dict):
            raise ParseError("expected a mapping of spec fields", line=1)
        return cls.from_dict(data)

    def save(self, spec_file: Union[str, Path]):
        spec_file = Path(spec_file)
        spec_file.parent.mkdir(parents=True, exist_ok=True)
        spec_file.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")

    def spec_hash(self) -> str:
        spec_str = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.md5(spec_str.encode()).hexdigest()[:8]


@dataclass
class Outcome:
    """A solver run inside an experiment: a report, or the reason there is none."""
    status: str
    report: Optional[SolveReport] = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.report is not None


@dataclass
class _Trial:
    """Rows produced by one trial, main table and attachments."""
    rows: List[Dict[str, Any]] = field(default_factory=list)
    attachments: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)

    def attach(self, name: str, **row: Any):
        self.attachments.setdefault(name, []).append(row)


def parse_method(method: str) -> Tuple[str, Optional[int], str]:
    """Split ``gd-3l+bb`` into (family, layers, rule); plain methods carry no layers."""
    if method in PLAIN_METHODS:
        family, _, rule = method.partition("+")
        return family, None, rule or "const"
    match = FACTORIZED_METHOD.match(method)
    if not match:
        raise ValidationError([f"unknown method '{method}'"], "Experiment spec")
    return match.group(1), int(match.group(2)), match.group(3) or "const"


def _factorized_config(spec: ExperimentSpec, layers: int, rule: str, seed: int,
                       alpha: Optional[float] = None, **overrides: Any) -> SolverConfig:
    steps = {
        "const": lambda: ConstantStep(spec.eta),
        "bb": lambda: BarzilaiBorweinStep(spec.eta),
        "nesterov": lambda: NesterovStep(spec.eta),
        "lipschitz": lambda: LipschitzOracleStep(1000, spec.eta),
    }
    settings = dict(
        layers=layers,
        alpha=spec.alpha if alpha is None else alpha,
        step_rule=steps[rule](),
        max_iters=spec.max_iters,
        grad_tol=spec.grad_tol,
        objective_tol=spec.objective_tol,
        trace_every=spec.trace_every,
        seed=seed,
    )
    settings.update(overrides)
    return SolverConfig(**settings)


def run_method(method: str, problem: NnlsProblem, spec: ExperimentSpec, seed: int,
               target: Optional[float] = None, early_stopping: bool = True,
               alpha: Optional[float] = None, precompute_gram: bool = False,
               **solver_kwargs: Any) -> Outcome:
    """Run one named method; divergence and budget failures become statuses."""
    family, layers, rule = parse_method(method)
    started = time.perf_counter()
    try:
        if family == "lh":
            report = solve_lawson_hanson(problem)
        elif family == "pgd":
            step = None
            if rule != "const":
                lipschitz = gram_spectral_norm(problem.A)
                eta0 = 1.0 / lipschitz if lipschitz > 0 else spec.eta
                step = BarzilaiBorweinStep(eta0) if rule == "bb" else NesterovStep(eta0)
            report = solve_pgd(problem, step, max_iters=spec.max_iters, target_residual=target,
                               trace_every=spec.trace_every, early_stopping=early_stopping,
                               precompute_gram=precompute_gram, **solver_kwargs)
        else:
            cfg = _factorized_config(spec, layers, rule, seed, alpha, target_residual=target,
                                     early_stopping=early_stopping,
                                     precompute_gram=precompute_gram)
            solve = solve_sgd if family == "sgd" else solve_gd
            report = solve(problem, cfg, **solver_kwargs)
    except DivergenceError as e:
        logger.warning("%s diverged on %s: %s", method, problem.label, e)
        return Outcome(DIVERGED, seconds=time.perf_counter() - started)
    except MaxItersError as e:
        logger.warning("%s exhausted its budget on %s: %s", method, problem.label, e)
        return Outcome(BUDGET_EXHAUSTED, seconds=time.perf_counter() - started)

    seconds = time.perf_counter() - started
    if target is not None and report.stop_reason != StopReason.TARGET_RESIDUAL \
            and report.residual_norm > target:
        return Outcome(BUDGET_EXHAUSTED, report, seconds)
    return Outcome(OK, report, seconds)


def kkt_gate(outcome: Outcome, method: str) -> str:
    """Re-assert optimality where a method guarantees it."""
    if not outcome.ok:
        return "-"
    if method == "lh":
        passed = outcome.report.kkt.optimal
    elif method == "pgd" and outcome.report.stop_reason == StopReason.STEP_TOL:
        passed = max(outcome.report.kkt.primal_violation, outcome.report.kkt.dual_violation) <= 1e-6
    else:
        return "-"
    if not passed:
        logger.warning("%s failed its KKT sanity gate", method)
    return "pass" if passed else "fail"


def _problem(spec: ExperimentSpec, seed: int, **overrides: Any) -> NnlsProblem:
    settings = dict(m=spec.m, n=spec.n, s=spec.s, seed=seed, signal=spec.signal,
                    normalize=spec.normalize, unit_norm=spec.unit_norm, noise=spec.noise)
    settings.update(overrides)
    return make_problem(**settings)


def _value(outcome: Outcome, getter: Callable[[SolveReport], Any], default: Any = float("nan")) -> Any:
    return getter(outcome.report) if outcome.ok else default


def _init_sweep_trial(spec: ExperimentSpec, trial: int, seed: int) -> _Trial:
    problem = _problem(spec, seed)
    l1_truth = float(np.sum(np.abs(problem.x_true)))
    result = _Trial()
    for layers in spec.layers_list:
        for alpha in spec.alpha_grid:
            outcome = run_method(f"gd-{layers}l", problem, spec, seed, alpha=alpha)
            l1_norm = _value(outcome, lambda r: float(np.sum(np.abs(r.x_final))))
            result.rows.append(dict(
                trial=trial, seed=seed, layers=layers, alpha=alpha, status=outcome.status,
                l1_norm=l1_norm, l1_truth=l1_truth,
                l1_ratio=l1_norm / l1_truth if l1_truth > 0 else float("nan"),
                objective=_value(outcome, lambda r: r.objective_final),
                iterations=_value(outcome, lambda r: r.iterations, -1),
                stop_reason=_value(outcome, lambda r: r.stop_reason.value, "-"),
            ))
    return result


def _layer_trace_trial(spec: ExperimentSpec, trial: int, seed: int) -> _Trial:
    problem = _problem(spec, seed)
    support = np.flatnonzero(problem.x_true)
    truth = problem.x_true[support]
    errors: Dict[int, Dict[int, np.ndarray]] = {}

    for layers in spec.layers_list:
        series: Dict[int, np.ndarray] = {}

        def collect(point, x_tilde, series=series):
            series[point.iter] = np.abs(truth - x_tilde[support])

        run_method(f"gd-{layers}l", problem, spec, seed, on_trace=collect)
        errors[layers] = series

    result = _Trial()
    grid = sorted(set().union(*(series.keys() for series in errors.values())))
    latest = {layers: np.full(len(support), float("nan")) for layers in spec.layers_list}
    for iteration in grid:
        row: Dict[str, Any] = {"trial": trial, "iter": iteration}
        for layers in spec.layers_list:
            if iteration in errors[layers]:
                latest[layers] = errors[layers][iteration]
            for position, value in enumerate(latest[layers]):
                row[f"err_L{layers}_{position}"] = float(value)
        result.rows.append(row)
    result.attach("support", trial=trial, seed=seed,
                  indices=" ".join(str(int(i)) for i in support),
                  values=" ".join(format(float(v), ".17g") for v in truth))
    return result


def _stepsize_race_trial(spec: ExperimentSpec, trial: int, seed: int) -> _Trial:
    problem = _problem(spec, seed)
    lipschitz = gram_spectral_norm(problem.A)
    result = _Trial()
    for method in spec.methods:
        def collect(point, x_tilde, method=method):
            result.attach("curves", trial=trial, method=method, iter=point.iter,
                          objective=point.objective)

        outcome = run_method(method, problem, spec, seed, target=spec.precision,
                             early_stopping=False, on_trace=collect)
        bound = float("nan")
        gate = "-"
        if method == "pgd" and problem.x_true is not None:
            # sublinear rate of PGD with step 1/L from the origin
            bound = float(math.ceil(lipschitz * float(problem.x_true @ problem.x_true)
                                    / spec.precision ** 2))
            gate = "pass" if outcome.status == OK and outcome.report.iterations <= bound else "fail"
        result.rows.append(dict(
            trial=trial, seed=seed, method=method, status=outcome.status,
            iterations=_value(outcome, lambda r: r.iterations, -1),
            residual=_value(outcome, lambda r: r.residual_norm),
            bound=bound, gate=gate,
        ))
    return result


def _stability_trial(spec: ExperimentSpec, trial: int, seed: int) -> _Trial:
    result = _Trial()
    for q in spec.q_grid:
        problem = _problem(spec, seed, q=q)
        for method in spec.methods:
            outcome = run_method(method, problem, spec, seed)
            result.rows.append(dict(
                trial=trial, seed=seed, q=q, method=method, status=outcome.status,
                error=_value(outcome, lambda r: float(np.linalg.norm(r.x_final - problem.x_plus))),
                objective=_value(outcome, lambda r: r.objective_final),
                iterations=_value(outcome, lambda r: r.iterations, -1),
                gate=kkt_gate(outcome, method),
            ))
    return result


def fit_rate_slope(times: np.ndarray, residuals: np.ndarray) -> float:
    """Log-log slope of residual against t over the final decade of t.

    Residuals at or below the floor are dropped; with fewer than three
    points left the decay is faster than any power law and -inf is returned.
    """
    times = np.asarray(times, dtype=np.float64)
    residuals = np.asarray(residuals, dtype=np.float64)
    if times.size == 0:
        return float("-inf")
    horizon = float(np.max(times))
    keep = (times >= horizon / 10.0) & (times > 0) & (residuals > RESIDUAL_FLOOR)
    if np.count_nonzero(keep) < 3:
        return float("-inf")
    slope, _ = np.polyfit(np.log(times[keep]), np.log(residuals[keep]), 1)
    return float(slope)


def rate_bounded(times: np.ndarray, residuals: np.ndarray) -> Tuple[float, float, bool]:
    """(final t*r, max t*r over the first half, final <= 2 * that max)."""
    times = np.asarray(times, dtype=np.float64)
    scaled = times * np.asarray(residuals, dtype=np.float64)
    horizon = float(np.max(times))
    first_half = scaled[(times > 0) & (times <= horizon / 2.0)]
    peak = float(np.max(first_half)) if first_half.size else float(scaled[-1])
    final = float(scaled[-1])
    return final, peak, final <= 2.0 * peak


def bregman_monotone(values: np.ndarray, slack: float = BREGMAN_SLACK) -> bool:
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    return bool(np.all(np.diff(values) <= slack))


def _rate_check_trial(spec: ExperimentSpec, trial: int, seed: int) -> _Trial:
    problem = _problem(spec, seed)
    reference = solve_lawson_hanson(problem)
    y_plus = problem.A.data @ reference.x_final
    z_plus = reference.x_final
    steps = int(math.ceil(spec.t_end / spec.dt - 1e-9))
    trace_every = max(1, int(round(1.0 / spec.dt)))

    result = _Trial()
    for layers in spec.layers_list:
        for method in spec.methods:
            try:
                if method == "flow":
                    report = solve_flow_rk4(problem, layers, np.full(problem.n, spec.alpha),
                                            spec.t_end, spec.dt, y_plus=y_plus, z_plus=z_plus,
                                            trace_every=trace_every)
                else:
                    cfg = SolverConfig(layers=layers, alpha=spec.alpha, step_rule=ConstantStep(spec.dt),
                                       max_iters=steps, trace_every=trace_every,
                                       early_stopping=False, seed=seed)
                    report = solve_gd(problem, cfg, y_plus=y_plus, z_plus=z_plus)
                status = OK
            except DivergenceError as e:
                logger.warning("%s diverged on %s: %s", method, problem.label, e)
                report, status = None, DIVERGED

            if report is None:
                result.rows.append(dict(
                    trial=trial, seed=seed, layers=layers, method=method, status=status,
                    slope=float("nan"), final_t_residual=float("nan"),
                    peak_t_residual=float("nan"), bounded=False, residual_final=float("nan"),
                    gate="-",
                ))
                continue

            times = np.array([point.time for point in report.trace])
            residuals = np.array([point.residual_yplus_sq for point in report.trace])
            bregman = np.array([point.bregman for point in report.trace])
            final, peak, bounded = rate_bounded(times, residuals)
            gate = "-"
            if method == "flow":
                gate = "pass" if bregman_monotone(bregman) else "fail"
                if gate == "fail":
                    logger.warning("Bregman distance increased along the flow on %s", problem.label)
            result.rows.append(dict(
                trial=trial, seed=seed, layers=layers, method=method, status=status,
                slope=fit_rate_slope(times, residuals), final_t_residual=final,
                peak_t_residual=peak, bounded=bounded, residual_final=float(residuals[-1]),
                gate=gate,
            ))
            for point in report.trace:
                result.attach("trajectory", trial=trial, layers=layers, method=method,
                              iter=point.iter, time=point.time,
                              residual_yplus_sq=point.residual_yplus_sq,
                              t_residual=point.time * point.residual_yplus_sq,
                              bregman=point.bregman)
    return result


def _convergence_trial(spec: ExperimentSpec, trial: int, seed: int) -> _Trial:
    problem = _problem(spec, seed)
    result = _Trial()
    for method in spec.methods:
        def collect(point, x_tilde, method=method):
            result.attach("curves", trial=trial, method=method, iter=point.iter,
                          objective=point.objective)

        outcome = run_method(method, problem, spec, seed, early_stopping=False, on_trace=collect)
        result.rows.append(dict(
            trial=trial, seed=seed, method=method, status=outcome.status,
            iterations=_value(outcome, lambda r: r.iterations, -1),
            objective=_value(outcome, lambda r: r.objective_final),
            dual_violation=_value(outcome, lambda r: r.kkt.dual_violation),
        ))
    return result


TRIAL_RUNNERS = {
    ExperimentKind.INIT_SWEEP: _init_sweep_trial,
    ExperimentKind.LAYER_TRACE: _layer_trace_trial,
    ExperimentKind.STEPSIZE_RACE: _stepsize_race_trial,
    ExperimentKind.STABILITY: _stability_trial,
    ExperimentKind.RATE_CHECK: _rate_check_trial,
    ExperimentKind.CONVERGENCE_COMPARE: _convergence_trial,
}

COLUMNS: Dict[ExperimentKind, Tuple[Tuple[str, str], ...]] = {
    ExperimentKind.INIT_SWEEP: (
        ("trial", "int"), ("seed", "int"), ("layers", "int"), ("alpha", "float"),
        ("status", "str"), ("l1_norm", "float"), ("l1_truth", "float"), ("l1_ratio", "float"),
        ("objective", "float"), ("iterations", "int"), ("stop_reason", "str"),
    ),
    ExperimentKind.STEPSIZE_RACE: (
        ("trial", "int"), ("seed", "int"), ("method", "str"), ("status", "str"),
        ("iterations", "int"), ("residual", "float"), ("bound", "float"), ("gate", "str"),
    ),
    ExperimentKind.STABILITY: (
        ("trial", "int"), ("seed", "int"), ("q", "float"), ("method", "str"), ("status", "str"),
        ("error", "float"), ("objective", "float"), ("iterations", "int"), ("gate", "str"),
    ),
    ExperimentKind.RATE_CHECK: (
        ("trial", "int"), ("seed", "int"), ("layers", "int"), ("method", "str"),
        ("status", "str"), ("slope", "float"), ("final_t_residual", "float"),
        ("peak_t_residual", "float"), ("bounded", "bool"), ("residual_final", "float"),
        ("gate", "str"),
    ),
    ExperimentKind.CONVERGENCE_COMPARE: (
        ("trial", "int"), ("seed", "int"), ("method", "str"), ("status", "str"),
        ("iterations", "int"), ("objective", "float"), ("dual_violation", "float"),
    ),
}

ATTACHMENT_COLUMNS: Dict[str, Tuple[Tuple[str, str], ...]] = {
    "curves": (("trial", "int"), ("method", "str"), ("iter", "int"), ("objective", "float")),
    "trajectory": (
        ("trial", "int"), ("layers", "int"), ("method", "str"), ("iter", "int"),
        ("time", "float"), ("residual_yplus_sq", "float"), ("t_residual", "float"),
        ("bregman", "float"),
    ),
    "support": (("trial", "int"), ("seed", "int"), ("indices", "str"), ("values", "str")),
}


def _run_trials(spec: ExperimentSpec, runner: Callable[[ExperimentSpec, int, int], _Trial],
                threads: int, log: RunLog) -> List[_Trial]:
    def one(trial: int) -> _Trial:
        seed = spec.master_seed + trial
        result = runner(spec, trial, seed)
        failures = sum(1 for row in result.rows if row.get("status", OK) != OK)
        log.log("TRIAL_DONE", kind=spec.kind.value, trial=trial, seed=seed,
                rows=len(result.rows), failures=failures)
        return result

    trials = range(spec.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, trials))
    return [one(trial) for trial in trials]


def _assemble(kind: ExperimentKind, trials: List[_Trial]) -> ResultTable:
    if kind == ExperimentKind.LAYER_TRACE:
        names = list(trials[0].rows[0].keys()) if trials and trials[0].rows else ["trial", "iter"]
        specs = [(name, "int" if name in ("trial", "iter") else "float") for name in names]
    else:
        specs = list(COLUMNS[kind])
    table = ResultTable.with_columns(*specs)
    attachments: Dict[str, ResultTable] = {}
    for result in trials:
        for row in result.rows:
            table.add_row(**row)
        for name, rows in result.attachments.items():
            if name not in attachments:
                attachments[name] = ResultTable.with_columns(*ATTACHMENT_COLUMNS[name])
            for row in rows:
                attachments[name].add_row(**row)
    table.attachments = attachments
    return table


def _median_table(table: ResultTable, group: Tuple[str, ...], value: str,
                  name: str, penalize: bool = False) -> ResultTable:
    """Per-group medians of ``value``; failed runs count as +inf when penalized."""
    specs = [(column.name, column.kind) for column in table.columns if column.name in group]
    medians = ResultTable.with_columns(*specs, ("runs", "int"), ("succeeded", "int"), (name, "float"))
    keys: List[Tuple[Any, ...]] = []
    for row in table.rows:
        key = tuple(row[g] for g in group)
        if key not in keys:
            keys.append(key)
    for key in keys:
        rows = [row for row in table.rows if tuple(row[g] for g in group) == key]
        good = [float(row[value]) for row in rows if row["status"] == OK]
        samples = good + ([float("inf")] * (len(rows) - len(good)) if penalize else [])
        median = float(np.median(samples)) if samples else float("nan")
        medians.add_row(**dict(zip(group, key)), runs=len(rows), succeeded=len(good), **{name: median})
    return medians


def run_init_sweep(spec: ExperimentSpec, threads: int = 1, log: Optional[RunLog] = None) -> ResultTable:
    """l1 norm of the GD limit per initialization scale and depth."""
    return _run_kind(spec, ExperimentKind.INIT_SWEEP, threads, log)


def run_layer_trace(spec: ExperimentSpec, threads: int = 1, log: Optional[RunLog] = None) -> ResultTable:
    """Absolute error of every ground-truth support entry along GD-2L / GD-3L runs."""
    return _run_kind(spec, ExperimentKind.LAYER_TRACE, threads, log)


def run_stepsize_race(spec: ExperimentSpec, threads: int = 1, log: Optional[RunLog] = None) -> ResultTable:
    """Iterations to reach the residual precision, per method, with medians."""
    table = _run_kind(spec, ExperimentKind.STEPSIZE_RACE, threads, log)
    table.attachments["medians"] = _median_table(table, ("method",), "iterations",
                                                 "median_iterations", penalize=True)
    return table


def run_stability(spec: ExperimentSpec, threads: int = 1, log: Optional[RunLog] = None) -> ResultTable:
    """Distance to x_plus per method under negative corruption level q."""
    table = _run_kind(spec, ExperimentKind.STABILITY, threads, log)
    table.attachments["medians"] = _median_table(table, ("q", "method"), "error", "median_error")
    return table


def run_rate_check(spec: ExperimentSpec, threads: int = 1, log: Optional[RunLog] = None) -> ResultTable:
    """Decay of ||A x(t) - y+||^2 along the flow and along discrete GD."""
    return _run_kind(spec, ExperimentKind.RATE_CHECK, threads, log)


def run_convergence_compare(spec: ExperimentSpec, threads: int = 1,
                            log: Optional[RunLog] = None) -> ResultTable:
    """Objective curves of the factorized methods against PGD on a dense instance."""
    return _run_kind(spec, ExperimentKind.CONVERGENCE_COMPARE, threads, log)


def _run_kind(spec: ExperimentSpec, kind: ExperimentKind, threads: int,
              log: Optional[RunLog]) -> ResultTable:
    if spec.kind != kind:
        raise ValidationError([f"expected a {kind.value} spec, got {spec.kind.value}"], "Experiment spec")
    spec.validate_strict()
    trials = _run_trials(spec, TRIAL_RUNNERS[kind], threads, log or RunLog())
    return _assemble(kind, trials)


def run_timing(spec: ExperimentSpec, threads: int = 1, log: Optional[RunLog] = None) -> ResultTable:
    """Wall-clock cost of a fixed iteration budget with precomputed Gram matrices.

    Runs sequentially whatever ``threads`` says, so timings do not compete.
    """
    if spec.kind != ExperimentKind.TIMING:
        raise ValidationError([f"expected a Timing spec, got {spec.kind.value}"], "Experiment spec")
    spec.validate_strict()
    log = log or RunLog()
    table = ResultTable.with_columns(
        ("size", "int"), ("method", "str"), ("status", "str"), ("iterations", "int"),
        ("seconds", "float"), ("seconds_per_iter", "float"), ("ratio_to_pgd", "float"),
        ("gate", "str"),
    )
    for size in spec.sizes:
        per_iter: Dict[str, float] = {}
        rows = []
        for method in spec.methods:
            seconds, iterations, status = [], 0, OK
            for trial in range(spec.trials):
                seed = spec.master_seed + trial
                problem = _problem(spec, seed, m=size, n=size, s=max(1, size // 32))
                outcome = run_method(method, problem, spec, seed, early_stopping=False,
                                     precompute_gram=True)
                if not outcome.ok:
                    status = outcome.status
                    continue
                seconds.append(outcome.seconds)
                iterations = outcome.report.iterations
            mean = float(np.mean(seconds)) if seconds else float("nan")
            per_iter[method] = mean / iterations if iterations else float("nan")
            rows.append(dict(size=size, method=method, status=status, iterations=iterations,
                             seconds=mean, seconds_per_iter=per_iter[method]))
            log.log("TIMING_DONE", size=size, method=method, seconds=mean)

        baseline = per_iter.get("pgd", float("nan"))
        for row in rows:
            ratio = row["seconds_per_iter"] / baseline if baseline > 0 else float("nan")
            gate = "-"
            if row["method"] == "gd-2l" and math.isfinite(ratio):
                gate = "pass" if ratio <= TIMING_RATIO_LIMIT else "fail"
            table.add_row(**row, ratio_to_pgd=ratio, gate=gate)
    return table


RUNNERS = {
    ExperimentKind.INIT_SWEEP: run_init_sweep,
    ExperimentKind.LAYER_TRACE: run_layer_trace,
    ExperimentKind.STEPSIZE_RACE: run_stepsize_race,
    ExperimentKind.STABILITY: run_stability,
    ExperimentKind.RATE_CHECK: run_rate_check,
    ExperimentKind.TIMING: run_timing,
    ExperimentKind.CONVERGENCE_COMPARE: run_convergence_compare,
}

NOTES = {
    ExperimentKind.INIT_SWEEP: "ground-truth l1 norm stands in for the basis-pursuit baseline",
    ExperimentKind.STEPSIZE_RACE: "status budget-exhausted marks runs that missed the precision",
    ExperimentKind.STABILITY: "error is ||x_hat - x_plus||_2",
    ExperimentKind.RATE_CHECK: "residual is ||A x(t) - y_plus||^2 with y_plus from Lawson-Hanson",
    ExperimentKind.TIMING: "absolute seconds are machine-specific",
}


def run_experiment(spec: ExperimentSpec, threads: int = 1, timings: bool = False,
                   log: Optional[RunLog] = None) -> ResultTable:
    """Run any experiment and stamp the table with its spec, version and hash.

    Wall time is only recorded with ``timings``, so repeated runs produce
    identical tables.
    """
    if threads < 1:
        raise ValidationError([f"threads must be positive, got {threads}"], "Experiment")
    log = log or RunLog()
    log.log("EXPERIMENT_START", spec=spec.to_dict(), threads=threads)
    started = time.perf_counter()
    table = RUNNERS[spec.kind](spec, threads, log)
    elapsed = time.perf_counter() - started

    table.metadata.update({
        "experiment": spec.kind.value,
        "spec": spec.to_dict(),
        "spec_hash": spec.spec_hash(),
        "version": __version__,
    })
    if spec.kind in NOTES:
        table.metadata["notes"] = NOTES[spec.kind]
    if timings:
        table.metadata["wall_seconds"] = round(elapsed, 6)
    failures = sum(1 for row in table.rows if row.get("status", OK) != OK)
    log.log("EXPERIMENT_DONE", kind=spec.kind.value, rows=len(table.rows), failures=failures,
            seconds=elapsed)
    return table
