"""Path-integral Monte Carlo for the spin-boson ground state."""

__version__ = "0.1.0"
