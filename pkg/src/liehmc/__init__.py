"""Hamiltonian Monte Carlo on matrix Lie groups and homogeneous spaces."""

__version__ = "0.1.0"
