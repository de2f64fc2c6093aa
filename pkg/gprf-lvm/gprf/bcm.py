"""
Bayesian Committee Machine prediction.

Each block acts as an expert predicting noise-free f* from its own noisy
observations; experts are combined in precision space with a (1 - M) prior
correction. The same prediction is obtained as the GPRF conditional of a
test block appended to the model with edges to every training block, which
gprf_conditional_predict computes from the assembled precision.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky

from .blocks import EdgeSet
from .errors import DimensionError, NumericalError
from .fullgp import Prediction, build_full_gp, full_predict
from .gaussian import factorize
from .kernels import cov_matrix
from .objective import GprfModel, assemble_block_precision, map_ordered, resolve_workers

logger = logging.getLogger(__name__)


@dataclass
class BcmPrediction:
    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray
    per_expert: List[Prediction] = field(default_factory=list)


def _as_test_points(model: GprfModel, Xstar: np.ndarray) -> np.ndarray:
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None]
    if Xstar.ndim != 2 or Xstar.shape[0] == 0:
        raise DimensionError("Need a nonempty 2-D array of test points")
    if Xstar.shape[1] != model.X.shape[1]:
        raise DimensionError(f"Test points have {Xstar.shape[1]} coordinates, training points {model.X.shape[1]}")
    return Xstar


def _moments_from_precision(precision: np.ndarray, shift: np.ndarray, label: str):
    """Return (Lambda^{-1} shift, Lambda^{-1}), refusing indefinite Lambda."""
    precision = 0.5 * (precision + precision.T)
    eigenvalues = np.linalg.eigvalsh(precision)
    if eigenvalues[0] <= 0:
        raise NumericalError(
            f"combined precision is indefinite (eigenvalues {eigenvalues[0]:.3g} to {eigenvalues[-1]:.3g})", label
        )
    try:
        chol = cholesky(precision, lower=True)
    except LinAlgError as e:
        raise NumericalError(f"combined precision could not be factored: {e}", label)
    cov = cho_solve((chol, True), np.eye(precision.shape[0]))
    cov = 0.5 * (cov + cov.T)
    return cov @ shift, cov


def bcm_predict(model: GprfModel, Xstar: np.ndarray, workers: int = 1) -> BcmPrediction:
    """
    BCM prediction of f* at Xstar.

    Args:
        model: Trained model; each partition block is one expert
        Xstar: Test points, shape (s, d)
        workers: Threads computing expert predictions

    Returns:
        Combined mean Lambda^{-1} eta and covariance Lambda^{-1}, with
        Lambda = (1 - M) K**^{-1} + sum_i Lambda_i and eta = sum_i Lambda_i mu_i
    """
    Xstar = _as_test_points(model, Xstar)
    blocks = model.partition.blocks

    def expert(block):
        return full_predict(build_full_gp(model.kernel, model.X[block], model.Y[block]), Xstar)

    experts = map_ordered(expert, blocks, resolve_workers(workers))

    prior = factorize(cov_matrix(model.kernel, Xstar), label="test prior")
    precision = (1 - len(blocks)) * prior.inverse()
    shift = np.zeros((Xstar.shape[0], model.num_outputs))
    for i, prediction in enumerate(experts):
        factor = factorize(prediction.cov, label=f"expert {i}")
        precision += factor.inverse()
        shift += factor.solve(prediction.mean)

    mean, cov = _moments_from_precision(precision, shift, "BCM")
    return BcmPrediction(mean=mean, cov=cov, precision=0.5 * (precision + precision.T), per_expert=experts)


def gprf_conditional_predict(model: GprfModel, Xstar: np.ndarray) -> Prediction:
    """
    Predict f* as the conditional of the GPRF over the training blocks plus
    one noise-free test block connected to every training block.
    """
    Xstar = _as_test_points(model, Xstar)
    n, M = model.n, model.partition.num_blocks
    test = np.arange(n, n + Xstar.shape[0])
    blocks = (*model.partition.blocks, test)
    pairs = list(model.edges.edges) + [(i, M) for i in range(M)]
    report = assemble_block_precision(
        model.kernel, np.vstack([model.X, Xstar]), blocks, EdgeSet.from_pairs(pairs, M + 1), noiseless_blocks=(M,)
    )
    J_test = report.precision[np.ix_(test, test)]
    J_cross = report.precision[test, :n]
    mean, cov = _moments_from_precision(J_test, -J_cross @ model.Y, "GPRF conditional")
    return Prediction(mean=mean, cov=cov)
