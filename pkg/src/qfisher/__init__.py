"""Generalized Fisher information, q-entropies and q-Gaussians on grids."""

__version__ = "0.1.0"
