"""
Zero-mean multivariate Gaussian building blocks.

This module handles:
- Cholesky factorization with a fixed jitter escalation ladder
- Multi-output log-density (columns of Y share one covariance)
- Sensitivity of the log-density to the covariance matrix
- KL divergence between zero-mean Gaussians
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)

# Multiples of the mean diagonal tried after a failed plain factorization.
JITTER_LADDER = (1e-8, 1e-6, 1e-4)


@dataclass(frozen=True, eq=False)
class GaussianFactor:
    """Lower Cholesky factor of a covariance K and its log-determinant."""

    dim: int
    chol: np.ndarray
    logdet: float
    jitter: float = 0.0

    def solve(self, B: np.ndarray) -> np.ndarray:
        """Return K^{-1} B."""
        return cho_solve((self.chol, True), B)

    def inverse(self) -> np.ndarray:
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)

    def covariance(self) -> np.ndarray:
        return self.chol @ self.chol.T


def _cholesky(K: np.ndarray) -> Optional[np.ndarray]:
    try:
        return cholesky(K, lower=True)
    except (LinAlgError, ValueError):
        return None


def factorize(K: np.ndarray, label: Optional[str] = None) -> GaussianFactor:
    """
    Factor a symmetric covariance matrix.

    If K is not numerically positive definite, jitter of 1e-8, 1e-6 and then
    1e-4 times the mean diagonal is added before giving up.

    Args:
        K: Symmetric matrix, shape (n, n)
        label: Name of the term being factored, used in errors and logs

    Returns:
        GaussianFactor of K (plus any jitter that was needed)
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError(f"Covariance must be square, got shape {K.shape}")
    n = K.shape[0]

    chol = _cholesky(K)
    jitter = 0.0
    if chol is None:
        if not np.all(np.isfinite(K)):
            raise NumericalError("covariance contains non-finite entries", label)
        scale = float(np.mean(np.diag(K))) if n else 1.0
        if scale <= 0:
            scale = 1.0
        for ratio in JITTER_LADDER:
            jitter = ratio * scale
            chol = _cholesky(K + jitter * np.eye(n))
            if chol is not None:
                logger.warning(f"{label or 'covariance'} needed jitter {jitter:.3g} to factor")
                break
        else:
            raise NumericalError(
                f"matrix of size {n} is not positive definite after jitter up to {jitter:.3g}", label
            )

    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return GaussianFactor(dim=n, chol=chol, logdet=logdet, jitter=jitter)


def _as_columns(factor: GaussianFactor, Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != factor.dim:
        raise DimensionError(f"Outputs of shape {Y.shape} do not match covariance of size {factor.dim}")
    return Y


def mvn_logpdf(factor: GaussianFactor, Y: np.ndarray) -> float:
    """
    Log-density of the D columns of Y under N(0, K), normalizing constant included:
    -(D/2) log|K| - (1/2) sum_d y_d^T K^{-1} y_d - (nD/2) log(2 pi).
    """
    Y = _as_columns(factor, Y)
    n, D = Y.shape
    Z = solve_triangular(factor.chol, Y, lower=True)
    return float(-0.5 * D * factor.logdet - 0.5 * np.sum(Z * Z) - 0.5 * n * D * LOG_2PI)


def mvn_grad_wrt_cov(factor: GaussianFactor, Y: np.ndarray) -> np.ndarray:
    """
    Sensitivity G = (1/2)(sum_d a_d a_d^T - D K^{-1}), a_d = K^{-1} y_d, so that
    d logpdf = sum_pq G_pq dK_pq.
    """
    Y = _as_columns(factor, Y)
    A = factor.solve(Y)
    return 0.5 * (A @ A.T - Y.shape[1] * factor.inverse())


def gaussian_kl(factor_b: GaussianFactor, factor_p: GaussianFactor) -> float:
    """KL[N(0, K_b) || N(0, K_p)] = (1/2)(tr(K_p^{-1} K_b) - n + log|K_p| - log|K_b|)."""
    if factor_b.dim != factor_p.dim:
        raise DimensionError(f"KL between dimensions {factor_b.dim} and {factor_p.dim}")
    if factor_b is factor_p:
        return 0.0
    M = solve_triangular(factor_p.chol, factor_b.chol, lower=True)
    trace = float(np.sum(M * M))
    return 0.5 * (trace - factor_b.dim + factor_p.logdet - factor_b.logdet)
