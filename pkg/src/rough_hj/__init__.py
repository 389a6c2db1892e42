"""Pathwise Hamilton-Jacobi equations with rough signals: solvers, effective Hamiltonians, experiments."""

__version__ = "0.1.0"
