"""Exception types raised by SupplyWise.

Every error derives from :class:`SupplyWiseError` and from the builtin
exception it specializes, so ``except ValueError`` keeps working for callers
that do not care about the finer distinction.
"""

from __future__ import annotations

from typing import Any, List, Optional


class SupplyWiseError(Exception):
    """Base class for all SupplyWise errors."""


class UnknownScenarioError(SupplyWiseError, KeyError):
    """Raised when a scenario name is not in the catalog."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message instead
        return str(self.args[0]) if self.args else "unknown scenario"


class ConfigurationError(SupplyWiseError, ValueError):
    """Raised when a chain configuration or scenario is invalid."""

    def __init__(self, message: str, violations: Optional[List[str]] = None) -> None:
        super().__init__(message)
        self.violations = list(violations or [])


class ContractViolationError(SupplyWiseError, ValueError):
    """Raised when an action or input breaks a documented precondition."""


class EncodingError(SupplyWiseError, ValueError):
    """Raised when physical quantities cannot be encoded as agent actions."""


class LpBuildError(SupplyWiseError, ValueError):
    """Raised when an LP instance cannot be built from its inputs."""


class SolverError(SupplyWiseError, RuntimeError):
    """Raised when the LP solver fails numerically."""


class NonOptimalSolutionError(SupplyWiseError, ValueError):
    """Raised when an operation requires an optimal LP solution."""


class CorruptedBundleError(SupplyWiseError, RuntimeError):
    """Raised when a policy bundle holds non-finite or unreadable state."""


class TrainingDivergenceError(SupplyWiseError, RuntimeError):
    """Raised when PPO training produces a non-finite loss.

    Attributes:
        best: Snapshot of the best bundle seen before divergence, if any.
        curve: Learning-curve records collected before divergence.
    """

    def __init__(self, message: str, best: Any = None, curve: Optional[list] = None) -> None:
        super().__init__(message)
        self.best = best
        self.curve = list(curve or [])


class EpisodeMismatchError(SupplyWiseError, ValueError):
    """Raised when reports to be compared cover different episodes."""
