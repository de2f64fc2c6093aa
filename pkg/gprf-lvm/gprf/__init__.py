"""
GPRF-LVM

Gaussian process random field approximations for latent-location fitting
with full-GP and local-GP baselines.
"""

__version__ = "1.0.0"
__description__ = "Gaussian process random field surrogate likelihoods for GP latent variable models"
