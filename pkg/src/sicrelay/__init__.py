"""Outage simulator and analytic model for a two-source relay network with SIC at the relays."""

__version__ = "0.1.0"
