"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class TransitOptError(Exception):
    """Base class for all toolkit errors."""


class FormatError(TransitOptError):
    """A file could not be parsed; carries the path and 1-based line number."""

    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class SchemaError(TransitOptError):
    """Input does not match a declared feature or column schema."""


class StructureError(TransitOptError):
    """A reference to an unknown node, arc, trip, or path id."""


class InfeasibleError(TransitOptError):
    """A model (or instance) admits no feasible design; carries witnesses."""

    def __init__(self, message: str, witnesses: list | None = None):
        super().__init__(message)
        self.witnesses = witnesses or []


class TrainingError(TransitOptError):
    """A choice model could not be trained (e.g. single-class labels)."""
