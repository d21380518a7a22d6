"""Rough paths, Davie-scheme RDEs and Girsanov weak solutions."""

__version__ = "0.1.0"
