"""SPARKLING MRI

Variable-density non-Cartesian k-space trajectories optimized under gradient
hardware constraints, with the reconstruction and scoring pipeline used to
compare target densities.
"""
from ._version import __version__

__all__ = ["__version__"]
