"""Hybrid rigid-body + learned-residual identification of robot dynamics."""

from ._accel import backend

__version__ = "0.1.0"
__all__ = ["backend", "__version__"]
