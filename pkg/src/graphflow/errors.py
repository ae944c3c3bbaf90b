"""Exception hierarchy shared by all graphflow modules."""

from __future__ import annotations


class GraphFlowError(Exception):
    """Base class for every error raised by graphflow."""


class OffManifold(GraphFlowError):
    pass


class NotTangent(GraphFlowError):
    pass


class AntipodalPoints(GraphFlowError):
    pass


class DegenerateRetraction(GraphFlowError):
    pass


class BadMetric(GraphFlowError):
    pass


class BadTensor(GraphFlowError):
    pass


class NumericalFailure(GraphFlowError):
    pass


class DimensionTooSmall(GraphFlowError):
    pass


class UnsupportedDomain(GraphFlowError):
    pass


class DegenerateNeighborhood(GraphFlowError):
    pass


class DegenerateTriangle(GraphFlowError):
    pass


class StrictAreaDecreasingViolated(GraphFlowError):
    pass


class ConfigError(GraphFlowError):
    """Invalid configuration; ``lineno`` points at the offending line when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
