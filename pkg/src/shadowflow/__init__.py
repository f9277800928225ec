"""Extended metric-plus-symplectic dynamics and its adiabatic limit."""

__version__ = "0.1.0"
