"""Tensor-input and Tucker-decomposed extreme learning machines for
multi-antenna channel interpolation."""
from .kernels import BACKEND

__version__ = "0.1.0"
