"""Exact Hessians of coupled DNN/PDE programs and trust-region optimization."""

__version__ = "0.1.0"
