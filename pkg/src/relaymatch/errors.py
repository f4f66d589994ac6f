"""Exception hierarchy shared across the package."""

from __future__ import annotations


class RelayMatchError(Exception):
    """Base class for all package errors."""


class DegenerateGeometryError(RelayMatchError):
    """Raised for zero/negative distances or coincident positions."""


class InvalidDemandError(RelayMatchError):
    """Raised when a demanded rate is not strictly positive."""


class ConfigurationError(RelayMatchError):
    """Raised for invalid run parameters (missing destination, bad horizon...)."""


class MatchingValidationError(RelayMatchError):
    """Raised when a matching is inconsistent with its market."""


class TerminationCapError(RelayMatchError):
    """Local search exceeded its iteration cap.

    Carries the best matching found so far in ``best``.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class InstanceTooLargeError(RelayMatchError):
    """Exhaustive enumeration would exceed the configured cap."""


class ScenarioError(RelayMatchError):
    """Base class for scenario-file problems."""


class ScenarioParseError(ScenarioError):
    """Scenario file could not be parsed at all."""


class ScenarioValidationError(ScenarioError):
    """Scenario parsed but violates the schema; lists every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n" + "\n".join(f"  - {v}" for v in self.violations))
