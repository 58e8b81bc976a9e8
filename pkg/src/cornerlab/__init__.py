"""Desk-scale laboratory for the linearized gravitational IBVP on a corner domain."""

__version__ = "0.1.0"
