"""
Solver configuration.
Handles defaults, validation and YAML persistence of SolverConfig.
"""

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from .errors import DomainError, ParseError, ValidationError
from .stepsize import ConstantStep, StepRule, parse_step_rule

DEFAULT_LAYERS = 3
DEFAULT_ALPHA = 1e-2
DEFAULT_MAX_ITERS = 1_000_000


@dataclass
class SolverConfig:
    """Configuration of a factorized gradient run (GD-nL / SGD-nL).

    ``init`` is the starting factor x0; when omitted the run starts from
    ``alpha * 1``. ``batch_size`` only matters for SGD and defaults to
    ceil(M / 10) once the problem size is known.
    """

    layers: int = DEFAULT_LAYERS
    init: Optional[np.ndarray] = None
    alpha: float = DEFAULT_ALPHA
    step_rule: StepRule = field(default_factory=ConstantStep)
    max_iters: int = DEFAULT_MAX_ITERS
    grad_tol: float = 1e-10
    objective_tol: float = 1e-12
    trace_every: int = 100
    seed: int = 0
    batch_size: Optional[int] = None
    target_residual: Optional[float] = None
    precompute_gram: bool = False
    stop_on_sign_flip: bool = False
    early_stopping: bool = True
    kkt_tol: float = 1e-8

    def __post_init__(self):
        if isinstance(self.step_rule, str):
            self.step_rule = parse_step_rule(self.step_rule)
        if self.init is not None:
            self.init = np.array(self.init, dtype=np.float64).reshape(-1)

    def initial_point(self, n: int) -> np.ndarray:
        """Starting factor of length n."""
        if self.init is None:
            return np.full(n, float(self.alpha))
        if self.init.shape[0] != n:
            raise DomainError(f"init has length {self.init.shape[0]}, problem has {n} unknowns")
        return self.init.copy()

    def resolve_batch_size(self, m: int) -> int:
        """Batch size for an M-row problem; ceil(M/10) unless set explicitly."""
        batch = self.batch_size if self.batch_size is not None else math.ceil(m / 10)
        if batch > m:
            raise DomainError(f"batch_size {batch} exceeds the number of rows {m}")
        return max(int(batch), 1)

    def validate(self) -> List[str]:
        """Validate the configuration and return a list of issues."""
        issues = []
        if int(self.layers) != self.layers or self.layers < 2:
            issues.append(f"layers must be an integer >= 2, got {self.layers}")
        if self.init is not None:
            if not np.all(np.isfinite(self.init)):
                issues.append("init has non-finite entries")
            elif np.any(self.init <= 0):
                issues.append("init must be strictly positive")
        elif not self.alpha > 0:
            issues.append(f"alpha must be positive, got {self.alpha}")
        if self.max_iters < 1:
            issues.append(f"max_iters must be positive, got {self.max_iters}")
        for name in ("grad_tol", "objective_tol", "kkt_tol"):
            if not getattr(self, name) > 0:
                issues.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.trace_every < 1:
            issues.append(f"trace_every must be positive, got {self.trace_every}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            issues.append(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.batch_size is not None and self.batch_size < 1:
            issues.append(f"batch_size must be positive, got {self.batch_size}")
        if self.target_residual is not None and not self.target_residual > 0:
            issues.append(f"target_residual must be positive, got {self.target_residual}")
        return issues

    def validate_strict(self):
        """Validate and raise on the first batch of issues."""
        issues = self.validate()
        if issues:
            raise ValidationError(issues, "Solver configuration")

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to a dictionary for YAML serialization."""
        return {
            "layers": int(self.layers),
            "init": None if self.init is None else [float(v) for v in self.init],
            "alpha": float(self.alpha),
            "step_rule": self.step_rule.spec(),
            "max_iters": int(self.max_iters),
            "grad_tol": float(self.grad_tol),
            "objective_tol": float(self.objective_tol),
            "trace_every": int(self.trace_every),
            "seed": int(self.seed),
            "batch_size": self.batch_size,
            "target_residual": self.target_residual,
            "precompute_gram": bool(self.precompute_gram),
            "stop_on_sign_flip": bool(self.stop_on_sign_flip),
            "early_stopping": bool(self.early_stopping),
            "kkt_tol": float(self.kkt_tol),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SolverConfig':
        """Create configuration from a dictionary; unknown keys are rejected."""
        known = set(cls().to_dict())
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError([f"unknown key '{key}'" for key in unknown], "Solver configuration")
        return cls(**data)

    @classmethod
    def from_file(cls, config_file: Union[str, Path]) -> 'SolverConfig':
        """Load configuration from a YAML file."""
        config_file = Path(config_file)
        if not config_file.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_file}")
        try:
            with open(config_file, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ParseError(str(e), line=mark.line + 1 if mark else None)
        if not isinstance(data, dict):
            raise ParseError("expected a mapping at the top level", line=1)
        return cls.from_dict(data)

    def save(self, config_file: Union[str, Path]):
        """Save configuration to a YAML file."""
        config_file = Path(config_file)
        config_file.parent.mkdir(parents=True, exist_ok=True)
        with open(config_file, 'w', encoding='utf-8') as f:
            f.write(yaml.safe_dump(self.to_dict(), default_flow_style=False, sort_keys=False))

    def config_hash(self) -> str:
        """Short hash of the configuration, echoed next to results."""
        config_str = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.md5(config_str.encode()).hexdigest()[:8]
