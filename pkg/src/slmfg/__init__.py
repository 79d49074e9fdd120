"""Toolkit for single-leader multi-follower games and their KKT reformulations."""

__version__ = "0.1.0"
