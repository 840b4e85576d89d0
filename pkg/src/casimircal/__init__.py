"""Electrostatic calibration analysis for cylinder-plane Casimir experiments."""

__version__ = "0.1.0"
