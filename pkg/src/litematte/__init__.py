"""Trimap-free image matting on plain NumPy.

Octave-convolution blocks, efficient non-local attention, cross-level fusion,
the two-stage matting network, losses, metrics and an exact FLOPs ledger.
"""

from .costmodel import flops_ena, flops_ena_min, flops_nonlocal, ledger, optimal_k
from .network import NetConfig, build_params, model_forward

__version__ = "0.1.0"

__all__ = [
    "NetConfig", "build_params", "flops_ena", "flops_ena_min", "flops_nonlocal", "ledger",
    "model_forward", "optimal_k",
]
