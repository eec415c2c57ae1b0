"""
Step-size rules for the gradient solvers.
"""

import logging

import numpy as np

from .errors import DomainError, FallbackSignal
from .linalg import (DEFAULT_POWER_MAX_ITER, DEFAULT_POWER_TOL, as_matrix,
                     as_vector, symmetric_spectral_norm)
from .objective import reduced_hessian

logger = logging.getLogger(__name__)

BB_DENOMINATOR_FLOOR = 1e-30
DEFAULT_ETA0 = 1e-2


class StepRule:
    """Base class for step-size rules.

    Subclasses describe themselves with a compact spec string
    (``const:0.01``, ``bb:0.01``, ``lipschitz:1000``, ``nesterov:0.01``)
    that ``parse_step_rule`` turns back into the same rule.
    """

    kind = "base"

    def initial(self) -> float:
        raise NotImplementedError()

    def spec(self) -> str:
        raise NotImplementedError()

    def __eq__(self, other):
        return type(self) is type(other) and self.spec() == other.spec()

    def __repr__(self):
        return f"{type(self).__name__}('{self.spec()}')"


class ConstantStep(StepRule):
    """Fixed step eta."""

    kind = "const"

    def __init__(self, eta: float = DEFAULT_ETA0):
        if not eta > 0:
            raise DomainError(f"step size must be positive, got {eta}")
        self.eta = float(eta)

    def initial(self) -> float:
        return self.eta

    def spec(self) -> str:
        return f"const:{self.eta!r}"


class BarzilaiBorweinStep(StepRule):
    """||Δx||² / ||A Δx||², starting from (and falling back to) eta0."""

    kind = "bb"

    def __init__(self, eta0: float = DEFAULT_ETA0):
        if not eta0 > 0:
            raise DomainError(f"eta0 must be positive, got {eta0}")
        self.eta0 = float(eta0)

    def initial(self) -> float:
        return self.eta0

    def spec(self) -> str:
        return f"bb:{self.eta0!r}"


class LipschitzOracleStep(StepRule):
    """1 / ||∇²L(x)||_2, refreshed every ``refresh_every`` iterations."""

    kind = "lipschitz"

    def __init__(self, refresh_every: int = 1000, eta0: float = DEFAULT_ETA0):
        if int(refresh_every) != refresh_every or refresh_every < 1:
            raise DomainError(f"refresh_every must be a positive integer, got {refresh_every}")
        if not eta0 > 0:
            raise DomainError(f"eta0 must be positive, got {eta0}")
        self.refresh_every = int(refresh_every)
        self.eta0 = float(eta0)

    def initial(self) -> float:
        return self.eta0

    def due(self, iteration: int) -> bool:
        """Whether the step is recomputed before ``iteration`` (1-based)."""
        return (iteration - 1) % self.refresh_every == 0

    def spec(self) -> str:
        if self.eta0 == DEFAULT_ETA0:
            return f"lipschitz:{self.refresh_every}"
        return f"lipschitz:{self.refresh_every}:{self.eta0!r}"


class NesterovStep(StepRule):
    """Constant step with look-ahead momentum β_t = (t-1)/(t+2)."""

    kind = "nesterov"

    def __init__(self, eta: float = DEFAULT_ETA0):
        if not eta > 0:
            raise DomainError(f"step size must be positive, got {eta}")
        self.eta = float(eta)

    def initial(self) -> float:
        return self.eta

    def momentum(self, t: int) -> float:
        return (t - 1.0) / (t + 2.0)

    def spec(self) -> str:
        return f"nesterov:{self.eta!r}"


def parse_step_rule(text: str) -> StepRule:
    """Parse ``const:η``, ``bb``, ``bb:η0``, ``lipschitz:k[:η0]`` or ``nesterov:η``."""
    name, _, argument = str(text).strip().partition(":")
    name = name.lower()
    try:
        if name == "const":
            return ConstantStep(float(argument)) if argument else ConstantStep()
        if name == "bb":
            return BarzilaiBorweinStep(float(argument)) if argument else BarzilaiBorweinStep()
        if name == "lipschitz":
            if not argument:
                return LipschitzOracleStep()
            refresh, _, eta0 = argument.partition(":")
            return LipschitzOracleStep(int(refresh), float(eta0)) if eta0 else LipschitzOracleStep(int(refresh))
        if name == "nesterov":
            return NesterovStep(float(argument)) if argument else NesterovStep()
    except ValueError:
        raise DomainError(f"malformed step rule '{text}'")
    raise DomainError(
        f"unknown step rule '{text}' (expected const:η, bb, bb:η0, lipschitz:k[:η0] or nesterov:η)"
    )


def bb_stepsize(x_t, x_prev, A) -> float:
    """Barzilai-Borwein step ||x_t - x_prev||² / ||A(x_t - x_prev)||².

    Raises FallbackSignal when the difference vanishes or the denominator
    underflows.
    """
    A = as_matrix(A)
    d = as_vector(x_t, "x_t") - as_vector(x_prev, "x_prev")
    numerator = float(d @ d)
    if numerator == 0.0:
        raise FallbackSignal("iterates coincide")
    Ad = A.data @ d
    denominator = float(Ad @ Ad)
    if denominator < BB_DENOMINATOR_FLOOR:
        raise FallbackSignal(f"denominator {denominator:.3g} underflows")
    return numerator / denominator


def lipschitz_stepsize(A, y, x, L: int, eta0: float = DEFAULT_ETA0,
                       gram: np.ndarray = None, tol: float = DEFAULT_POWER_TOL,
                       max_iter: int = DEFAULT_POWER_MAX_ITER) -> float:
    """1 / ||∇²L(x)||_2 via power iteration, eta0 when the Hessian vanishes."""
    if eta0 is None or not eta0 > 0:
        raise DomainError(f"eta0 must be positive, got {eta0}")
    H = reduced_hessian(A, y, x, L, gram=gram)
    norm = symmetric_spectral_norm(H, tol, max_iter).value
    if norm == 0.0:
        logger.debug("Hessian vanishes at the current iterate; using eta0=%g", eta0)
        return float(eta0)
    return 1.0 / norm
