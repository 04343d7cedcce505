"""Simulation and verification suite for a self-propelled Cucker-Smale swarm hierarchy."""

from __future__ import annotations

from .coeffs import DerivedCoefficients, ModelParams, derive, kernel_moment

__all__ = ["ModelParams", "DerivedCoefficients", "derive", "kernel_moment"]
__version__ = "0.1.0"
