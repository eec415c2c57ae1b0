#!/usr/bin/env python3
"""
hnnls - non-negative least squares by overparametrized gradient descent.
CLI interface for generating problems, solving them, checking solutions and
running experiments.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np
import yaml

from . import __version__
from .active_set import solve_lawson_hanson
from .audit import RunLog
from .config import DEFAULT_ALPHA, DEFAULT_LAYERS, DEFAULT_MAX_ITERS, SolverConfig
from .errors import DivergenceError, DomainError, NnlsError, ParseError, ValidationError
from .experiments import ExperimentSpec, run_experiment
from .objective import kkt_check, weighted_init
from .problems import SIGNALS, dump_exact, load_problem, make_problem, save_problem
from .reports import SolveReport
from .solvers import DEFAULT_PGD_MAX_ITERS, DEFAULT_PGD_TOL, solve_gd, solve_pgd, solve_sgd
from .stepsize import ConstantStep, parse_step_rule
from .tables import emit_table

SEED_ENV = "NNLS_SEED"


def _check_layers(ctx, param, value):
    if value is not None and value < 2:
        raise click.BadParameter("layers must be ≥ 2")
    return value


def _check_step(ctx, param, value):
    if value is None:
        return None
    try:
        return parse_step_rule(value)
    except DomainError as e:
        raise click.BadParameter(str(e))


def _resolve_seed(seed: int) -> int:
    """NNLS_SEED, when set, wins over the --seed flag."""
    override = os.environ.get(SEED_ENV)
    if override is None or override == "":
        return seed
    try:
        value = int(override)
    except ValueError:
        raise click.UsageError(f"{SEED_ENV} must be an integer, got '{override}'")
    if value < 0 or value >= 2 ** 64:
        raise click.UsageError(f"{SEED_ENV} must be an unsigned 64-bit integer, got {value}")
    return value


def _echo_config(title: str, data: Dict[str, Any]):
    click.echo(f"🔧 {title}")
    for line in yaml.safe_dump(data, sort_keys=False, default_flow_style=None).splitlines():
        click.echo(f"   {line}")


def _read_vector(path: Path, keys=("x_final", "x")) -> np.ndarray:
    """Read a vector from a YAML list, or from a mapping under one of ``keys``."""
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ParseError(f"malformed file {path}", line=mark.line + 1 if mark else None)
    if isinstance(data, dict):
        for key in keys:
            if key in data:
                data = data[key]
                break
        else:
            raise ParseError(f"expected one of {', '.join(keys)} in {path}")
    if not isinstance(data, list):
        raise ParseError(f"expected a list of numbers in {path}")
    try:
        return np.array([float(v) for v in data], dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(f"non-numeric entry in {path}")


def _log(ctx) -> RunLog:
    return ctx.obj.get("log") or RunLog()


def _fail(message: str):
    click.echo(f"❌ {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(version=__version__, prog_name="hnnls")
@click.option('--log-file', type=click.Path(dir_okay=False), default=None,
              help='Append a JSON-lines run log to this file')
@click.option('-v', '--verbose', count=True, help='Show solver diagnostics (-vv for debug)')
@click.pass_context
def cli(ctx, log_file: Optional[str], verbose: int):
    """hnnls - non-negative least squares toolkit

    Solve NNLS problems by vanilla gradient descent on a Hadamard
    factorization, compare against Lawson-Hanson and projected gradient
    descent, and run the accompanying experiments.
    """
    ctx.ensure_object(dict)
    ctx.obj["log"] = RunLog(log_file)
    if verbose:
        logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option('--m', 'm', type=int, required=True, help='Number of measurements (rows of A)')
@click.option('--n', 'n', type=int, required=True, help='Number of unknowns (columns of A)')
@click.option('--sparsity', type=int, default=3, show_default=True,
              help='Support size of the sparse ground truth')
@click.option('--q', 'q', type=click.FloatRange(0.0, 1.0), default=None,
              help='Negative corruption level; splits the truth into x_plus - x_minus')
@click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True,
              help=f'Generator seed (overridden by ${SEED_ENV})')
@click.option('--signal', type=click.Choice(SIGNALS), default='sparse', show_default=True,
              help='Ground-truth family')
@click.option('--normalize', is_flag=True, help='Scale the columns of A to unit norm')
@click.option('--unit-norm', is_flag=True, help='Scale the ground truth to unit norm')
@click.option('--noise', type=click.FloatRange(min=0.0), default=0.0, show_default=True,
              help='Standard deviation of additive measurement noise')
@click.option('--out', type=click.Path(dir_okay=False), required=True, help='Problem file to write')
@click.pass_context
def generate(ctx, m: int, n: int, sparsity: int, q: Optional[float], seed: int, signal: str,
             normalize: bool, unit_norm: bool, noise: float, out: str):
    """Generate a seeded Gaussian NNLS problem."""
    seed = _resolve_seed(seed)
    settings = dict(m=m, n=n, s=sparsity, seed=seed, q=q, signal=signal, normalize=normalize,
                    unit_norm=unit_norm, noise=noise)
    _echo_config("Resolved configuration:", dict(command="generate", out=out, **settings))
    log = _log(ctx)
    log.log("COMMAND_START", command="generate", **settings)

    try:
        problem = make_problem(**settings)
        save_problem(problem, Path(out))
    except NnlsError as e:
        log.log("COMMAND_ERROR", command="generate", error=str(e))
        _fail(f"Error generating problem: {e}")

    click.echo(f"✅ Wrote {problem.label} ({problem.m}x{problem.n}) to {out}")


@cli.command()
@click.option('--input', 'input_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Problem file')
@click.option('--method', type=click.Choice(['gd', 'sgd', 'pgd', 'lh']), default='gd',
              show_default=True, help='Solver')
@click.option('--layers', type=int, default=DEFAULT_LAYERS, show_default=True,
              callback=_check_layers, help='Number of factors L (gd, sgd)')
@click.option('--alpha', type=float, default=DEFAULT_ALPHA, show_default=True,
              help='Initialization scale x0 = alpha * 1 (gd, sgd)')
@click.option('--step', callback=_check_step, default=None,
              show_default='const:0.01 for gd/sgd, 1/||A^T A|| for pgd',
              help='Step rule: const:η, bb, bb:η0, lipschitz:k[:η0] or nesterov:η')
@click.option('--max-iters', type=click.IntRange(min=1), default=None,
              show_default='1000000 for gd/sgd, 100000 for pgd, 3N for lh',
              help='Iteration budget')
@click.option('--tol', type=click.FloatRange(min=0.0, min_open=True), default=None,
              show_default='1e-10', help='Gradient tolerance (gd, sgd), step tolerance (pgd), '
                                         'dual tolerance (lh)')
@click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True,
              help=f'Batch sampling seed for sgd (overridden by ${SEED_ENV})')
@click.option('--batch-size', type=click.IntRange(min=1), default=None,
              show_default='ceil(M/10)', help='Rows per sgd step')
@click.option('--trace-every', type=click.IntRange(min=1), default=100, show_default=True,
              help='Record a trace point every k iterations')
@click.option('--weights', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Weight vector w in (0,1]^N; starts from exp(-(1 + θw)/2)')
@click.option('--theta', type=click.FloatRange(min=0.0, min_open=True), default=1.0,
              show_default=True, help='Weight scale θ used with --weights')
@click.option('--out-report', type=click.Path(dir_okay=False), default=None,
              help='Write the solve report as YAML')
@click.option('--out-trace', type=click.Path(dir_okay=False), default=None,
              help='Write the iteration trace as CSV')
@click.option('--timings', is_flag=True, help='Keep wall-clock columns in the trace')
@click.pass_context
def solve(ctx, input_path: str, method: str, layers: int, alpha: float, step, max_iters: Optional[int],
          tol: Optional[float], seed: int, batch_size: Optional[int], trace_every: int,
          weights: Optional[str], theta: float, out_report: Optional[str], out_trace: Optional[str],
          timings: bool):
    """Solve an NNLS problem."""
    seed = _resolve_seed(seed)
    log = _log(ctx)

    try:
        problem = load_problem(Path(input_path))
    except NnlsError as e:
        _fail(f"Error loading problem: {e}")

    resolved: Dict[str, Any] = {"command": "solve", "input": input_path, "method": method,
                                "problem": problem.label}
    if method in ("gd", "sgd"):
        init = None
        if weights:
            try:
                init = weighted_init(_read_vector(Path(weights), ("w", "weights")), theta)
            except NnlsError as e:
                raise click.BadParameter(str(e), param_hint="'--weights'")
        config = SolverConfig(
            layers=layers, init=init, alpha=alpha, step_rule=step or ConstantStep(),
            max_iters=max_iters or DEFAULT_MAX_ITERS, trace_every=trace_every, seed=seed,
            batch_size=batch_size,
        )
        if tol is not None:
            config.grad_tol = tol
        try:
            config.validate_strict()
        except ValidationError as e:
            raise click.UsageError(str(e))
        resolved["config"] = config.to_dict()
        resolved["config_hash"] = config.config_hash()
    elif method == "pgd":
        resolved.update(step=step.spec() if step else "const:1/||A^T A||",
                        max_iters=max_iters or DEFAULT_PGD_MAX_ITERS, tol=tol or DEFAULT_PGD_TOL,
                        trace_every=trace_every)
    else:
        resolved.update(tol=tol or 1e-10, max_iters=max_iters or 3 * problem.n)

    _echo_config("Resolved configuration:", resolved)
    log.log("COMMAND_START", **resolved)

    try:
        if method == "gd":
            report = solve_gd(problem, config)
        elif method == "sgd":
            report = solve_sgd(problem, config)
        elif method == "pgd":
            report = solve_pgd(problem, step, max_iters=resolved["max_iters"], tol=resolved["tol"],
                               trace_every=trace_every)
        else:
            report = solve_lawson_hanson(problem, resolved["tol"], resolved["max_iters"])
    except DivergenceError as e:
        log.log("SOLVE_DIVERGED", method=method, iteration=e.iteration)
        click.echo(f"❌ Solver diverged: {e}", err=True)
        if e.last_point is not None:
            point = e.last_point
            click.echo(f"📉 Last finite trace point: iter={point.iter} objective={point.objective:.6e} "
                       f"stepsize={point.stepsize:.6g}", err=True)
        sys.exit(1)
    except NnlsError as e:
        log.log("COMMAND_ERROR", command="solve", error=str(e))
        _fail(f"Error during solve: {e}")

    click.echo(report.render())
    log.log("SOLVE_DONE", method=report.method, stop_reason=report.stop_reason,
            iterations=report.iterations, objective=report.objective_final,
            kkt_optimal=report.kkt.optimal)
    _write_outputs(report, resolved, out_report, out_trace, timings)


def _write_outputs(report: SolveReport, resolved: Dict[str, Any], out_report: Optional[str],
                   out_trace: Optional[str], timings: bool):
    try:
        if out_report:
            path = Path(out_report)
            path.parent.mkdir(parents=True, exist_ok=True)
            data = report.to_dict()
            data["resolved"] = resolved
            path.write_text(dump_exact(data), encoding="utf-8")
            click.echo(f"📝 Report written to {out_report}")
        if out_trace:
            emit_table(report.trace_table(timings), Path(out_trace))
            click.echo(f"📈 Trace written to {out_trace}")
    except (OSError, NnlsError) as e:
        _fail(f"Error writing output: {e}")


@cli.command()
@click.option('--input', 'input_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Problem file')
@click.option('--solution', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Solve report, or a YAML list / {x: [...]} with the candidate')
@click.option('--tol', type=click.FloatRange(min=0.0, min_open=True), default=1e-8,
              show_default=True, help='KKT tolerance')
@click.pass_context
def check(ctx, input_path: str, solution: str, tol: float):
    """Check the KKT conditions of a candidate solution."""
    _echo_config("Resolved configuration:",
                 dict(command="check", input=input_path, solution=solution, tol=tol))
    try:
        problem = load_problem(Path(input_path))
        x = _read_vector(Path(solution))
        report = kkt_check(problem.A, problem.y, x, tol)
    except NnlsError as e:
        _fail(f"Error during check: {e}")

    click.echo(f"Primal violation:  {report.primal_violation:.3e}")
    click.echo(f"Dual violation:    {report.dual_violation:.3e}")
    click.echo(f"Complementarity:   {report.complementarity:.3e}")
    _log(ctx).log("CHECK_DONE", input=input_path, **report.to_dict())
    if report.optimal:
        click.echo(f"✅ KKT conditions hold within {tol:g}")
    else:
        click.echo(f"❌ KKT conditions violated beyond {tol:g}")
        sys.exit(1)


@cli.command()
@click.option('--spec', 'spec_path', type=click.Path(exists=True, dir_okay=False), required=True,
              help='Experiment spec (YAML)')
@click.option('--out', type=click.Path(dir_okay=False), required=True,
              help='Result table; attachments are written next to it')
@click.option('--format', 'output_format', type=click.Choice(['csv', 'text']), default='csv',
              show_default=True, help='Output format')
@click.option('--threads', type=click.IntRange(min=1), default=1, show_default=True,
              help='Trials run in parallel')
@click.option('--timings', is_flag=True, help='Record wall time in the table metadata')
@click.pass_context
def experiment(ctx, spec_path: str, out: str, output_format: str, threads: int, timings: bool):
    """Run an experiment described by a spec file."""
    try:
        spec = ExperimentSpec.from_file(Path(spec_path))
        spec.validate_strict()
    except NnlsError as e:
        _fail(f"Error loading spec: {e}")

    _echo_config("Resolved configuration:",
                 dict(command="experiment", spec=spec.to_dict(), threads=threads, out=out))
    click.echo(f"🧪 Running {spec.kind.value} ({spec.trials} trial(s))...")
    try:
        table = run_experiment(spec, threads=threads, timings=timings, log=_log(ctx))
        written = emit_table(table, Path(out), output_format)
    except NnlsError as e:
        _fail(f"Error during experiment: {e}")

    failures = [row for row in table.rows if row.get("status", "ok") != "ok"]
    if failures:
        click.echo(f"⚠️  {len(failures)} run(s) failed or exhausted their budget")
    click.echo(f"✅ {len(table.rows)} row(s) written")
    for path in written:
        click.echo(f"  • {path}")


if __name__ == '__main__':
    cli()
