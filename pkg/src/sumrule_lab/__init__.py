"""Sum rules, equilibrium measures and Jacobi-matrix tools for log-gas potentials."""

__version__ = "0.1.0"
