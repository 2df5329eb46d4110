"""Simulation and analysis toolkit for pulse-generator-driven qubit control."""

from __future__ import annotations

__version__ = "0.1.0"

from .constants import PHI0

__all__ = ["PHI0", "__version__"]
