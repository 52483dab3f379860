"""Simulation and fitting of Raman-heterodyne microwave-to-optical up-conversion in Er:YSO."""

__version__ = "0.1.0"
