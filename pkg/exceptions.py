"""Error types shared by every module.

Each error carries a ``detail`` message and the process exit code the
command line maps it to, the same way the API layer used to pair a status
code with a detail string.
"""

from typing import Any, Optional


class MorlError(Exception):
    exit_code = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class RejectedInput(MorlError, ValueError):
    """A precondition of an operation was violated by its caller."""

    exit_code = 2


class ConfigError(MorlError):
    """The experiment definition could not be parsed or validated."""

    exit_code = 2


class RunAborted(MorlError):
    """A training run stopped early; ``record`` holds what was completed."""

    exit_code = 3

    def __init__(self, detail: str, record: Any = None):
        super().__init__(detail)
        self.record = record


class OracleFailure(MorlError):
    exit_code = 4
