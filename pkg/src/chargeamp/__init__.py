"""Charge-amplifier gain/noise modeling and acoustic measurement analysis."""

__version__ = "0.1.0"
