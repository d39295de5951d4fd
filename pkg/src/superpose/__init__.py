"""Compile sparse boolean circuits into superposed ReLU networks and check them."""

__version__ = "0.1.0"
