"""Exception types shared by the solvers."""

from __future__ import annotations


class SwarmError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SwarmError, ValueError):
    """A parameter is outside its admissible range."""


class RegimeError(SwarmError):
    """A quantity was requested outside the temperature regime where it exists."""


class StabilityError(SwarmError):
    """A time step violates the explicit stability restriction of a scheme."""


class VacuumError(SwarmError):
    """Density reached zero (or went negative) in a fluid solver."""


class BlowupError(SwarmError):
    """Non-finite values appeared during time integration."""
