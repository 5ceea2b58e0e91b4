"""Gaussian process regression and kernel adaptive filtering.

Batch and recursive GP inference with a composite RBF+linear kernel,
forgetting-based tracking (KRLS-T), classical adaptive-filter baselines and
a Rayleigh-fading channel simulation harness.
"""

__version__ = "0.1.0"

__all__ = [
    "kernels",
    "gp_batch",
    "gp_online",
    "baselines",
    "channel_sim",
    "experiments",
    "checks",
    "cli",
]
