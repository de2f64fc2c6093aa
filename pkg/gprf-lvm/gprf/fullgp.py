"""
Exact full-GP likelihood, gradient and prediction for desk-scale problems,
plus Ornstein-Uhlenbeck chain fixtures whose precision is block-tridiagonal.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .blocks import EdgeSet, Partition, PartitionKind
from .errors import DimensionError, SizeGuardError
from .gaussian import GaussianFactor, factorize, mvn_grad_wrt_cov, mvn_logpdf
from .kernels import (
    Hyperparams, KernelFamily, KernelSpec, contract_hyper_gradient, contract_input_gradient, cov_matrix
)
from .objective import GprfModel, ObjectiveReport

logger = logging.getLogger(__name__)

# Largest n for which dense factorization or sampling is attempted.
MAX_DENSE_POINTS = 20000

OU_JITTER = 1e-10
OU_NOISE_FLOOR = 1e-12


def check_dense_size(n: int, what: str = "dense factorization"):
    """Raise SizeGuardError when n exceeds MAX_DENSE_POINTS."""
    if n > MAX_DENSE_POINTS:
        raise SizeGuardError(f"{what} refused for n={n} (limit {MAX_DENSE_POINTS})")


@dataclass(frozen=True, eq=False)
class FullGp:
    """Inputs, outputs and the factor of the noisy covariance K_y."""

    kernel: KernelSpec
    X: np.ndarray
    Y: np.ndarray
    factor: GaussianFactor

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class Prediction:
    """Posterior mean (one column per output) and covariance of noise-free f*."""

    mean: np.ndarray
    cov: np.ndarray


def build_full_gp(kernel: KernelSpec, X: np.ndarray, Y: np.ndarray) -> FullGp:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    check_dense_size(X.shape[0])
    factor = factorize(cov_matrix(kernel, X, add_noise=True), label="full GP")
    return FullGp(kernel=kernel, X=X, Y=Y, factor=factor)


def full_loglik(gp: FullGp) -> float:
    """Exact marginal log-likelihood, constants included."""
    return mvn_logpdf(gp.factor, gp.Y)


def full_gradient(gp: FullGp) -> ObjectiveReport:
    """Exact gradient w.r.t. X and log-hyperparameters via the trace identity."""
    G = mvn_grad_wrt_cov(gp.factor, gp.Y)
    return ObjectiveReport(
        value=full_loglik(gp),
        grad_X=contract_input_gradient(gp.kernel, gp.X, G),
        grad_theta=contract_hyper_gradient(gp.kernel, gp.X, G),
        term_count={'nodes': 1, 'edges': 0},
    )


def full_predict(gp: FullGp, Xstar: np.ndarray) -> Prediction:
    """
    Posterior of noise-free f* at Xstar.

    Returns:
        Prediction with mean K*^T K_y^{-1} Y and covariance
        K** - K*^T K_y^{-1} K*
    """
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None]
    if Xstar.shape[0] == 0:
        raise DimensionError("Need at least one test point")
    check_dense_size(gp.n + Xstar.shape[0], "dense prediction")
    K_cross = cov_matrix(gp.kernel, gp.X, Xstar)
    K_test = cov_matrix(gp.kernel, Xstar)
    mean = K_cross.T @ gp.factor.solve(gp.Y)
    V = solve_triangular(gp.factor.chol, K_cross, lower=True)
    cov = K_test - V.T @ V
    return Prediction(mean=mean, cov=0.5 * (cov + cov.T))


@dataclass(frozen=True, eq=False)
class OuChainFixture:
    """Sorted 1-D exponential-kernel GP split into contiguous blocks joined in a chain."""

    gp: FullGp
    partition: Partition
    edges: EdgeSet

    def model(self, edges: Optional[EdgeSet] = None) -> GprfModel:
        return GprfModel(kernel=self.gp.kernel, partition=self.partition,
                         edges=self.edges if edges is None else edges, X=self.gp.X, Y=self.gp.Y)


def ou_chain_fixture(n: int, block_size: int, ell: float, sigma_n: float = 0.0,
                     D: int = 1, seed: int = 0, spacing: Optional[float] = None) -> OuChainFixture:
    """
    Build a block-chain fixture.

    Without noise the precision of the exponential kernel on sorted 1-D
    points is tridiagonal, so contiguous blocks joined by (b, b+1) edges form
    a tree and the chain GPRF equals the full GP.

    Args:
        n: Number of points; a multiple of block_size
        block_size: Points per block
        ell: Lengthscale
        sigma_n: Observation noise standard deviation; 0 for exactness tests
        D: Output columns sampled from the GP
        seed: Seed for the point locations and outputs
        spacing: Equal spacing between points; None draws sorted uniform
            points on [0, n * ell / 2]
    """
    if n < 1 or block_size < 1 or n % block_size:
        raise DimensionError(f"block_size {block_size} must divide n={n}")
    check_dense_size(n)
    rng = np.random.Generator(np.random.PCG64(seed))
    if spacing is None:
        x = np.sort(rng.uniform(0.0, n * ell / 2.0, size=n))
    else:
        x = np.arange(n) * float(spacing)

    kernel = KernelSpec(
        KernelFamily.EXPONENTIAL,
        Hyperparams(1.0, (ell,), max(sigma_n ** 2, OU_NOISE_FLOOR)),
        jitter=OU_JITTER,
    )
    X = x[:, None]
    factor = factorize(cov_matrix(kernel, X, add_noise=True), label="full GP")
    Y = factor.chol @ rng.standard_normal((n, D))
    gp = FullGp(kernel=kernel, X=X, Y=Y, factor=factor)

    num_blocks = n // block_size
    partition = Partition.from_blocks(
        [np.arange(b * block_size, (b + 1) * block_size) for b in range(num_blocks)],
        kind=PartitionKind.EXPLICIT, max_block_size=block_size,
    )
    edges = EdgeSet.from_pairs([(b, b + 1) for b in range(num_blocks - 1)], num_blocks)
    logger.debug(f"OU chain fixture: n={n}, {num_blocks} blocks, noise {kernel.hyperparams.noise_variance:.3g}")
    return OuChainFixture(gp=gp, partition=partition, edges=edges)
