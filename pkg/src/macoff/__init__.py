"""Minimum-energy uplink resource allocation for multi-user edge offloading."""

__version__ = "0.1.0"
