"""Exception hierarchy for the arqpc package."""

from __future__ import annotations


class ArqpcError(Exception):
    """Base class for all arqpc errors."""


class InvalidArgumentError(ArqpcError, ValueError):
    """An argument violates a documented precondition."""


class DimensionMismatchError(InvalidArgumentError):
    """Vector or tensor dimensions are inconsistent."""


class SingularPointError(ArqpcError):
    """Derivative of the regularizer requested at its non-smooth origin."""


class InfeasiblePointError(ArqpcError):
    """Objective evaluation requested at a point outside the feasible set."""


class OracleError(ArqpcError):
    """A user-supplied derivative oracle failed."""


class EmptyDomainError(ArqpcError):
    """The ball/feasible-set intersection handed to the inner minimizer is empty."""


class DegenerateDenominatorError(ArqpcError):
    """Predicted decrease underflowed; the acceptance ratio is undefined."""


class BudgetExhaustedError(ArqpcError):
    """A search budget (radius shrink ladder, iteration cap) ran out."""


class UnknownProblemError(ArqpcError, KeyError):
    """Requested name is not in the built-in problem registry."""


class ReplayMismatchError(ArqpcError):
    """A worst-case replay diverged from the prescribed trajectory.

    Attributes:
        k: first iteration index at which the divergence was detected.
        reason: short machine-readable tag for the failed check.
    """

    def __init__(self, k: int, reason: str):
        self.k = k
        self.reason = reason
        super().__init__(f"replay diverged at iteration {k}: {reason}")
