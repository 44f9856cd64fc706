"""Freeze LTL over quasi-ordered data words, nested counter systems, and
the reductions between them, with bounded-search oracles for desk-scale
experiments."""

__version__ = "0.1.0"
