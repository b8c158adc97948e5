"""Exception hierarchy shared by the library and the CLI.

Each error carries a short machine-parsable ``code`` so the CLI can emit a
single ``code: message`` line and map the class to an exit status.
"""


class CasecastError(Exception):
    """Base class for all expected failures."""

    code = "error"
    exit_status = 1

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ShapeError(CasecastError):
    """Operand shapes do not conform. Message names the offending shapes."""

    code = "shape-error"
    exit_status = 2


class ConfigError(CasecastError):
    """Invalid configuration value or inconsistent hyperparameters."""

    code = "config-error"
    exit_status = 2


class InputError(CasecastError):
    """Problem with an input file: missing, malformed, or inconsistent."""

    code = "input-error"
    exit_status = 3


class NumericError(CasecastError):
    """Non-finite value where a finite one is required (divergence etc.)."""

    code = "numeric-error"
    exit_status = 4
