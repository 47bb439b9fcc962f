"""Simulation and optimisation of the dissipative ring clock."""

from __future__ import annotations

__version__ = "0.1.0"
