"""
Reproducible NNLS problem instances: generation, q-level perturbation and
persistence.

Every random draw comes from a counter-based Philox generator keyed by
(seed, stream), so each generator is a pure function of its arguments and
independent draws never share a stream.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from .errors import DomainError, OutputError, ParseError, ValidationError
from .linalg import DenseMatrix, Vector, as_matrix, as_vector

logger = logging.getLogger(__name__)

MATRIX_STREAM = 0
SUPPORT_STREAM = 1
VALUES_STREAM = 2
NEGATIVE_STREAM = 3
NOISE_STREAM = 4
BATCH_STREAM = 5

SIGNALS = ("sparse", "gaussian", "dense", "smooth")
Q_LEVEL_TOL = 1e-10

PROBLEM_FIELDS = ("m", "n", "a", "y", "x_true", "x_plus", "x_minus", "q", "seed", "label")
OPTIONAL_VECTORS = ("x_true", "x_plus", "x_minus")


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Independent deterministic generator for (seed, stream)."""
    seed = int(seed)
    if seed < 0 or seed >= 2 ** 64:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed + (int(stream) << 64)))


def _same(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and np.array_equal(a, b)


@dataclass(eq=False)
class NnlsProblem:
    """Measurement operator and data, with optional ground-truth decomposition."""

    A: DenseMatrix
    y: Vector
    x_true: Optional[Vector] = None
    x_plus: Optional[Vector] = None
    x_minus: Optional[Vector] = None
    q: Optional[float] = None
    seed: Optional[int] = None
    label: str = ""

    def __post_init__(self):
        self.A = as_matrix(self.A)
        self.y = as_vector(self.y, "y")
        if self.y.shape[0] != self.A.rows:
            raise ValidationError(
                [f"y has length {self.y.shape[0]} but A has {self.A.rows} rows"], "Problem"
            )
        for name in OPTIONAL_VECTORS:
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, as_vector(value, name))
        if self.q is not None:
            self.q = float(self.q)
        if self.seed is not None:
            self.seed = int(self.seed)

    @property
    def m(self) -> int:
        return self.A.rows

    @property
    def n(self) -> int:
        return self.A.cols

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, NnlsProblem):
            return NotImplemented
        return (
            self.A == other.A
            and _same(self.y, other.y)
            and all(_same(getattr(self, name), getattr(other, name)) for name in OPTIONAL_VECTORS)
            and self.q == other.q
            and self.seed == other.seed
            and self.label == other.label
        )


class ProblemValidator:
    """Validates NnlsProblem invariants."""

    def __init__(self, problem: NnlsProblem):
        self.problem = problem

    def validate(self) -> List[str]:
        """Validate the problem and return a list of issues."""
        p = self.problem
        issues = []
        for name in OPTIONAL_VECTORS:
            value = getattr(p, name)
            if value is not None and value.shape[0] != p.n:
                issues.append(f"{name} has length {value.shape[0]}, expected {p.n}")
        if issues:
            return issues

        if p.q is not None and not 0.0 <= p.q <= 1.0:
            issues.append(f"q must lie in [0, 1], got {p.q}")
        if p.x_plus is not None and np.any(p.x_plus < 0):
            issues.append("x_plus has negative entries")
        if p.x_minus is not None and np.any(p.x_minus < 0):
            issues.append("x_minus has negative entries")
        if p.x_plus is not None and p.x_minus is not None:
            if np.any((p.x_plus > 0) & (p.x_minus > 0)):
                issues.append("x_plus and x_minus supports overlap")
            if p.q is not None:
                plus_sq = float(p.x_plus @ p.x_plus)
                minus_sq = float(p.x_minus @ p.x_minus)
                if abs(plus_sq - (1.0 - p.q)) > Q_LEVEL_TOL:
                    issues.append(f"||x_plus||^2 = {plus_sq!r}, expected 1 - q = {1.0 - p.q!r}")
                if abs(minus_sq - p.q) > Q_LEVEL_TOL:
                    issues.append(f"||x_minus||^2 = {minus_sq!r}, expected q = {p.q!r}")
        if p.seed is not None and not 0 <= p.seed < 2 ** 64:
            issues.append(f"seed must be an unsigned 64-bit integer, got {p.seed}")
        return issues

    def validate_strict(self):
        issues = self.validate()
        if issues:
            raise ValidationError(issues, "Problem")


def gen_gaussian_matrix(M: int, N: int, seed: int, normalize: bool = False) -> DenseMatrix:
    """M x N matrix of i.i.d. standard normals; optionally unit-norm columns."""
    if M < 1 or N < 1:
        raise DomainError(f"matrix dimensions must be positive, got {M}x{N}")
    data = rng_stream(seed, MATRIX_STREAM).standard_normal((M, N))
    if normalize:
        norms = np.linalg.norm(data, axis=0)
        norms[norms == 0.0] = 1.0
        data = data / norms
    return DenseMatrix(data)


def gen_sparse_nonneg(N: int, s: int, seed: int) -> Vector:
    """s-sparse vector with uniform support and |N(0,1)| entries."""
    if s < 1 or s > N:
        raise DomainError(f"sparsity must satisfy 1 <= s <= N, got s={s}, N={N}")
    support = rng_stream(seed, SUPPORT_STREAM).choice(N, size=s, replace=False)
    values = np.abs(rng_stream(seed, VALUES_STREAM).standard_normal(s))
    x = np.zeros(N)
    x[support] = values
    return x


def gen_gaussian_vector(N: int, seed: int) -> Vector:
    """Signed dense standard-normal vector."""
    if N < 1:
        raise DomainError(f"length must be positive, got {N}")
    return rng_stream(seed, VALUES_STREAM).standard_normal(N)


def gen_dense_nonneg(N: int, seed: int) -> Vector:
    return np.abs(gen_gaussian_vector(N, seed))


def gen_smooth_nonneg(N: int, seed: int, bumps: int = 3) -> Vector:
    """Image-like non-negative signal: a few Gaussian bumps, small values cut to 0."""
    if N < 1:
        raise DomainError(f"length must be positive, got {N}")
    rng = rng_stream(seed, VALUES_STREAM)
    grid = np.arange(N, dtype=np.float64)
    centers = rng.uniform(0.0, N, size=bumps)
    widths = rng.uniform(N / 20.0, N / 8.0, size=bumps) + 1.0
    heights = rng.uniform(0.5, 1.5, size=bumps)
    x = np.zeros(N)
    for center, width, height in zip(centers, widths, heights):
        x += height * np.exp(-0.5 * ((grid - center) / width) ** 2)
    x[x < 0.05 * np.max(x)] = 0.0
    return x


def make_q_perturbed(x_plus_raw, q: float, seed: int) -> Tuple[Vector, Vector, Vector]:
    """Split a ground truth into x_true = x_plus - x_minus at corruption level q.

    x_plus keeps the support of ``x_plus_raw`` with ||x_plus||^2 = 1 - q;
    x_minus has |N(0,1)| entries off that support with ||x_minus||^2 = q.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    raw = as_vector(x_plus_raw, "x_plus_raw")
    if np.any(raw < 0):
        raise DomainError("x_plus_raw must be non-negative")
    support = raw > 0

    x_plus = np.zeros_like(raw)
    if q < 1.0:
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:
            raise DomainError("x_plus_raw is zero but q < 1")
        x_plus = raw * (np.sqrt(1.0 - q) / norm)

    x_minus = np.zeros_like(raw)
    if q > 0.0:
        if np.all(support):
            raise DomainError("x_plus_raw has no zero entries to carry the negative part")
        draws = np.abs(rng_stream(seed, NEGATIVE_STREAM).standard_normal(raw.shape[0]))
        x_minus = np.where(support, 0.0, draws)
        x_minus *= np.sqrt(q) / float(np.linalg.norm(x_minus))

    return x_plus - x_minus, x_plus, x_minus


def _raw_signal(signal: str, n: int, s: int, seed: int) -> Vector:
    if signal == "sparse":
        return gen_sparse_nonneg(n, s, seed)
    if signal == "gaussian":
        return gen_gaussian_vector(n, seed)
    if signal == "dense":
        return gen_dense_nonneg(n, seed)
    if signal == "smooth":
        return gen_smooth_nonneg(n, seed)
    raise DomainError(f"unknown signal '{signal}' (expected one of {', '.join(SIGNALS)})")


def make_problem(m: int, n: int, s: int = 3, seed: int = 0, q: Optional[float] = None,
                 signal: str = "sparse", normalize: bool = False, unit_norm: bool = False,
                 noise: float = 0.0, label: Optional[str] = None) -> NnlsProblem:
    """Compose a seeded Gaussian instance.

    With ``q`` set the ground truth is split into x_plus and x_minus;
    ``noise`` adds noise * N(0, I) to y, which pushes y off the range of A.
    """
    if noise < 0:
        raise DomainError(f"noise must be non-negative, got {noise}")
    A = gen_gaussian_matrix(m, n, seed, normalize)
    raw = _raw_signal(signal, n, s, seed)

    x_plus = x_minus = None
    if q is not None:
        if signal == "gaussian":
            raise DomainError("q-level perturbation needs a non-negative signal")
        x_true, x_plus, x_minus = make_q_perturbed(raw, q, seed)
    else:
        x_true = raw
        if unit_norm:
            norm = float(np.linalg.norm(x_true))
            if norm > 0:
                x_true = x_true / norm

    y = A.data @ x_true
    if noise > 0:
        y = y + noise * rng_stream(seed, NOISE_STREAM).standard_normal(m)

    if label is None:
        parts = [f"gaussian-{m}x{n}", signal if signal != "sparse" else f"s{s}"]
        if q is not None:
            parts.append(f"q{q:g}")
        if normalize:
            parts.append("normalized")
        if unit_norm and q is None:
            parts.append("unit")
        if noise > 0:
            parts.append(f"noise{noise:g}")
        parts.append(f"seed{seed}")
        label = "-".join(parts)

    problem = NnlsProblem(A=A, y=y, x_true=x_true, x_plus=x_plus, x_minus=x_minus,
                          q=q, seed=seed, label=label)
    logger.debug("generated problem %s", label)
    return problem


class _ExactDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper: yaml.SafeDumper, value: float):
    text = format(value, ".17g")
    if text in ("nan", "inf", "-inf"):
        text = {"nan": ".nan", "inf": ".inf", "-inf": "-.inf"}[text]
    elif "." not in text:
        mantissa, sep, exponent = text.partition("e")
        text = f"{mantissa}.0{sep}{exponent}"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_ExactDumper.add_representer(float, _represent_float)


def dump_exact(data: Dict[str, Any]) -> str:
    """YAML with floats at 17 significant digits, so values read back bit-exactly."""
    return yaml.dump(data, Dumper=_ExactDumper, sort_keys=False, default_flow_style=None, width=100)


def save_problem(problem: NnlsProblem, path: Union[str, Path]) -> Path:
    """Write a problem as a single YAML document."""
    data: Dict[str, Any] = {
        "m": problem.m,
        "n": problem.n,
        "a": [float(v) for v in problem.A.flat()],
        "y": [float(v) for v in problem.y],
    }
    for name in OPTIONAL_VECTORS:
        value = getattr(problem, name)
        if value is not None:
            data[name] = [float(v) for v in value]
    if problem.q is not None:
        data["q"] = float(problem.q)
    if problem.seed is not None:
        data["seed"] = int(problem.seed)
    data["label"] = problem.label

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_exact(data), encoding="utf-8")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}")
    return path


def _key_lines(text: str) -> Dict[str, int]:
    """1-based line of every top-level key."""
    node = yaml.compose(text, Loader=yaml.SafeLoader)
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {key.value: key.start_mark.line + 1 for key, _ in node.value}


def _numbers(data: Dict[str, Any], key: str, lines: Dict[str, int]) -> np.ndarray:
    value = data[key]
    if not isinstance(value, list):
        raise ParseError("expected a list of numbers", line=lines.get(key), field=key)
    try:
        array = np.array([float(v) for v in value], dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError("non-numeric entry", line=lines.get(key), field=key)
    if not np.all(np.isfinite(array)):
        raise ParseError("non-finite entry", line=lines.get(key), field=key)
    return array


def _integer(data: Dict[str, Any], key: str, lines: Dict[str, int]) -> int:
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"expected an integer, got {value!r}", line=lines.get(key), field=key)
    return value


def load_problem(path: Union[str, Path]) -> NnlsProblem:
    """Read a problem written by ``save_problem``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")

    try:
        lines = _key_lines(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ParseError(f"malformed problem file: {getattr(e, 'problem', e)}",
                         line=mark.line + 1 if mark else None)
    if not isinstance(data, dict):
        raise ParseError("expected a mapping of problem fields", line=1)

    for key in data:
        if key not in PROBLEM_FIELDS:
            raise ParseError("unknown field", line=lines.get(key), field=str(key))
    for key in ("m", "n", "a", "y"):
        if key not in data:
            raise ParseError("required field missing", field=key)

    m = _integer(data, "m", lines)
    n = _integer(data, "n", lines)
    if m < 1 or n < 1:
        raise ValidationError([f"dimensions must be positive, got {m}x{n}"], "Problem")
    a = _numbers(data, "a", lines)
    if a.shape[0] != m * n:
        raise ValidationError([f"a has {a.shape[0]} entries, expected m*n = {m * n}"], "Problem")
    y = _numbers(data, "y", lines)

    fields: Dict[str, Any] = {}
    for name in OPTIONAL_VECTORS:
        if data.get(name) is not None:
            fields[name] = _numbers(data, name, lines)
    if data.get("q") is not None:
        if not isinstance(data["q"], (int, float)) or isinstance(data["q"], bool):
            raise ParseError("expected a number", line=lines.get("q"), field="q")
        fields["q"] = float(data["q"])
    if data.get("seed") is not None:
        fields["seed"] = _integer(data, "seed", lines)

    problem = NnlsProblem(
        A=DenseMatrix(a.reshape(m, n)),
        y=y,
        label=str(data.get("label") or ""),
        **fields,
    )
    ProblemValidator(problem).validate_strict()
    return problem
