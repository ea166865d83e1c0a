"""Channel flow with a Tresca friction wall: simulator and attractor diagnostics."""

__version__ = "0.1.0"
