"""Smoothness regularization of first-layer weights for small numpy networks."""

from .conv_core import RelKernel, conv_same, get_kernel, laplacian
from .visloss import grad_vl1, grad_vl2, vl1, vl2, vl_model
from .tikhonov import SparseMat, build_gamma, gamma_for

__version__ = "0.1.0"
