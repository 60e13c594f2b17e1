"""loadshift: evolutionary-game demand-response simulator.

Synthesizes household load profiles as calibrated Markov chains, evolves
electricity valuations and program willingness over a small-world
influence network, and lets a finite population of (household, device)
agents revise discrete duty-cycle strategies under a pairwise-logit
protocol, with optional financial or preference-shifting (social)
incentives. A companion analysis module validates the long-run behavior
against closed-form stationary distributions on small instances.
"""
from .kernels import ACTIVE as kernel_backend
from .kernels import have_compiled

__version__ = "0.1.0"

__all__ = ["kernel_backend", "have_compiled", "__version__"]
