"""Simulation, tomography and figures of merit for subset-parity measurements."""
__version__ = "0.1.0"
