"""Quantum-walk battery cells: Hamiltonians, ergotropy, discharge protocols, noise and chirality."""

__version__ = "0.1.0"
