"""pinnscape: loss-landscape laboratory for Deep Ritz and PINN objectives."""

from . import autodiff, landscape, network, optimize, problems, runio

__version__ = "0.1.0"
