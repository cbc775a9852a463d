"""Spike-driven space-time attention workbench."""
from svf.errors import (ConfigError, DivergenceError, DomainError, EmptyMemory, GraphError,
                        NonBinaryInput, ShapeMismatch, SVFError, VariantWeightMismatch, ZeroVector)
from svf.kernels import BACKEND
from svf.tensor import SpikeTensor, pack, unpack

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "DivergenceError", "DomainError", "EmptyMemory", "GraphError",
    "NonBinaryInput", "SVFError", "ShapeMismatch", "SpikeTensor", "VariantWeightMismatch",
    "ZeroVector", "pack", "unpack",
]
