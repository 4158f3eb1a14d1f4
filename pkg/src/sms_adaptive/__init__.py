"""Adaptive control and simulation of a free-flying space manipulator."""

__version__ = "0.1.0"
