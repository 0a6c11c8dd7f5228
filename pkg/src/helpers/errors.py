"""Exception hierarchy for the DCARP toolkit.

Every user-facing failure derives from ``DcarpError``, itself a ``ValueError`` so that the
``wrap_main`` handler reports it as a clean message. ``exit_code`` selects the process exit
status: 1 for usage problems, 2 for parse and feasibility problems.
"""

from typing import Optional


class DcarpError(ValueError):
    """Base class for toolkit errors."""

    exit_code = 2


class UsageError(DcarpError):
    """Invalid command-line or API usage."""

    exit_code = 1


class ConfigError(UsageError):
    """Invalid scenario configuration."""


class InstanceFormatError(DcarpError):
    """Malformed dcarp-text or egl input."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class InfeasibleError(DcarpError):
    """A route or construction cannot be realised on the current network."""


class SplitError(InfeasibleError):
    """No capacity-feasible split exists for a task sequence."""


class IntegrityError(InfeasibleError):
    """A solution or state violates a structural invariant."""


class SolverError(DcarpError):
    """A solver was called with unusable inputs."""


class ScenarioComplete(DcarpError):
    """Raised when a scenario step is requested on an instance without tasks."""

    exit_code = 0
