"""Numerical lab for calibrations of the Mumford-Shah functional with fidelity term."""

__version__ = "0.1.0"
