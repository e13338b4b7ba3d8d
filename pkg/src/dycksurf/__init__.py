"""Geometry of the extremal nonpositively curved Dyck surface."""

__version__ = "0.1.0"
