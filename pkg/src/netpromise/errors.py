"""Exception hierarchy.

``InvalidInput`` covers anything caused by a bad document, trace or
argument (CLI exit code 1).  ``SimulationError`` covers faults raised while a
valid run is executing (CLI exit code 2); these usually indicate a bug in a
scheduling policy rather than in the input.
"""

from __future__ import annotations


class NetPromiseError(Exception):
    """Base class for every error raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InvalidInput(NetPromiseError, ValueError):
    pass


class SimulationError(NetPromiseError, RuntimeError):
    pass


# topology
class MalformedDocument(InvalidInput):
    pass


class DanglingEndpoint(InvalidInput):
    pass


class DuplicateLink(InvalidInput):
    pass


class NonPositiveCapacity(InvalidInput):
    pass


class UnknownNode(InvalidInput, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class NoRoute(InvalidInput):
    pass


class InvalidPath(InvalidInput):
    pass


# endpoints
class NoFreeSlot(SimulationError):
    pass


class RateExceedsLimit(InvalidInput):
    pass


class PathMismatch(InvalidInput):
    pass


class AlreadyReleased(SimulationError):
    pass


# scheduler
class DuplicateRequestId(InvalidInput):
    pass


class UnknownSite(InvalidInput):
    pass


class UnknownRequest(InvalidInput, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class NonPositiveRate(InvalidInput):
    pass


class PolicyViolation(SimulationError):
    """A policy proposal would break a reservation or endpoint limit."""


# flowsim
class InfeasibleProvisions(SimulationError):
    pass


class MalformedTrace(InvalidInput):
    pass


# accounting
class UnorderedSamples(InvalidInput):
    pass


class ZeroPromised(InvalidInput):
    pass


# interface
class MalformedRecord(MalformedTrace):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsortedTrace(MalformedTrace):
    pass


class DuplicateId(MalformedTrace):
    pass


class SinkUnwritable(SimulationError):
    pass
