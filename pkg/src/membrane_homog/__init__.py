"""Stochastic homogenization workbench for 2D conductivity problems with
membrane (jump-type) transmission conditions on randomly deformed periodic
media."""

__version__ = "0.1.0"
