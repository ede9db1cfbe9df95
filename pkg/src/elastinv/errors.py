"""Error types shared across the package.

Two failure categories are distinguished so the command line tool can map
them to distinct exit codes: bad input (exit code 2) and numerical
breakdown (exit code 3).
"""


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalFailureError(RuntimeError):
    """Raised when a numerical routine cannot meet its accuracy contract.

    Carries a human readable message naming the pipeline stage that failed
    and, where possible, guidance on how to work around the failure.
    """


# Exit codes used by the CLI.
EXIT_OK = 0
EXIT_INVALID_ARGUMENT = 2
EXIT_NUMERICAL_FAILURE = 3
