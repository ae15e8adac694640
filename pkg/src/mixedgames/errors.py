"""Exception taxonomy shared by all solver modules.

The CLI maps these onto exit codes: configuration / usage problems exit
with 2, solver and model failures with 3, internal invariant breaches
with 4.
"""


class MixedGamesError(Exception):
    """Base class for all package errors."""


class UsageError(MixedGamesError):
    """Caller violated a documented precondition."""


class ConfigError(UsageError):
    """Experiment configuration failed validation."""


class ModelError(MixedGamesError):
    """A game definition produced non-finite or malformed output."""


class SolverError(MixedGamesError):
    """A numerical solver failed to produce a certified result."""


class MatrixGameError(SolverError):
    """Matrix-game LP failure; carries the offending matrix."""

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class ConvergenceError(SolverError):
    """Mesh-refinement errors failed the monotone-decrease contract."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ContractViolationError(MixedGamesError):
    """A strategy or play broke a structural contract."""


class StrategyDelayError(ContractViolationError):
    """A strategy block read an opponent block it is not allowed to see."""


class InternalError(MixedGamesError):
    """An invariant that must hold by construction was violated."""
