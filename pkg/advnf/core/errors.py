"""Exception hierarchy shared by every service.

Services raise these; only the command line maps them to exit codes.
"""

from typing import Any, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class AdvNFError(Exception):
    exit_code: int = EXIT_RUNTIME


class ContractError(AdvNFError, ValueError):
    """A documented precondition was violated by the caller."""

    exit_code = EXIT_VALIDATION


class ShapeError(ContractError):
    pass


class ConfigError(AdvNFError, ValueError):
    exit_code = EXIT_VALIDATION


class CheckpointError(AdvNFError):
    exit_code = EXIT_VALIDATION


class DomainError(AdvNFError, ValueError):
    """Input outside the mathematical domain of an operation."""

    exit_code = EXIT_RUNTIME


class NumericError(AdvNFError, ArithmeticError):
    exit_code = EXIT_RUNTIME


class TrainingError(NumericError):
    def __init__(self, message: str, last_good_state: Optional[dict[str, Any]] = None):
        super().__init__(message)
        self.last_good_state = last_good_state
