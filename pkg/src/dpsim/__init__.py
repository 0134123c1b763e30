"""Discrete-event simulator for networks of programmable match-action switches."""

__version__ = "0.1.0"
