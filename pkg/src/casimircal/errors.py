"""Exception hierarchy.

Every error carries a short machine-readable ``code`` used by the CLI exit
status.
"""


class CasimirCalError(Exception):
    code = "error"
    exit_status = 1


class DomainError(CasimirCalError, ValueError):
    """Argument outside the validity domain of a formula."""

    code = "domain"
    exit_status = 4


class ContactError(DomainError):
    """Requested piezo voltage at or beyond surface contact."""

    code = "contact"


class FitError(CasimirCalError, RuntimeError):
    """A fit did not converge or its design matrix is degenerate.

    ``trace`` holds the optimizer iterates (or grid optimum) seen before the
    failure.
    """

    code = "fit"
    exit_status = 3

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class QuadratureError(CasimirCalError, RuntimeError):
    code = "quadrature"
    exit_status = 3


class ConfigError(CasimirCalError, ValueError):
    """Invalid scenario configuration; ``path`` is the dotted key path."""

    code = "config"
    exit_status = 2

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class DataFormatError(CasimirCalError, ValueError):
    """Unreadable or malformed dataset/table file."""

    code = "io"
    exit_status = 5
