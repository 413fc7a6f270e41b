"""Numerical-failure exceptions shared across solvers."""


class NumericsError(RuntimeError):
    """Base class for numerical failures (distinct from input validation)."""


class BracketError(NumericsError):
    """A root bracket could not be established; carries the scan diagnostics."""

    def __init__(self, message: str, node: int | None = None, scan=None):
        super().__init__(message)
        self.node = node
        self.scan = scan


class ConvergenceError(NumericsError):
    """An iteration cap was exhausted before reaching tolerance."""


class ExtractionError(NumericsError):
    """A level-set crossing could not be located inside the grid domain."""


class ConsistencyError(NumericsError):
    """Two independent constructions of the same object disagree."""
