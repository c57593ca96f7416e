"""Numerical lab for the hydrodynamic limit of weakly asymmetric exclusion on crystal lattices."""

__version__ = "0.1.0"
