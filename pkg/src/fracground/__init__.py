"""Numerical lab for ground states of the nearly critical fractional Schroedinger equation

    (-Delta)^s u + V(x) u = u^(2*_s - 1 - eps),   u > 0 in R^N,

on a periodic box, with diagnostics for their blow-up as eps -> 0.
"""
__version__ = "0.1.0"
