"""
The GPRF surrogate log-likelihood and its analysis.

This module implements:
- GprfModel: kernel, partition, edge set, latent inputs and outputs
- gprf_value / gprf_gradient: sum of weighted local Gaussian log-densities,
  log q = sum_i (1 - |E_i|) log p(y_i) + sum_(i,j) log p(y_i, y_j)
- assemble_precision: the implicit precision matrix of log q and its
  constant offset
- bethe_check: Bethe free energy of beliefs taken from the joint GP

Node and edge terms are independent and may run on a thread pool; results
are always reduced in canonical order (nodes by block id, then edges
lexicographically), so the worker count never changes the result.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .blocks import EdgeSet, Partition
from .errors import DimensionError
from .gaussian import (
    LOG_2PI, GaussianFactor, factorize, gaussian_kl, mvn_grad_wrt_cov, mvn_logpdf
)
from .kernels import KernelSpec, contract_hyper_gradient, contract_input_gradient, cov_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GprfModel:
    """The unit on which the objective and its gradients are evaluated."""

    kernel: KernelSpec
    partition: Partition
    edges: EdgeSet
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        if X.shape[0] != Y.shape[0] or X.shape[0] != self.partition.n:
            raise DimensionError(
                f"Partition of {self.partition.n} points does not match X {X.shape} and Y {Y.shape}"
            )
        if self.edges.num_blocks != self.partition.num_blocks:
            raise DimensionError(
                f"Edge set over {self.edges.num_blocks} blocks for a partition of {self.partition.num_blocks}"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.Y.shape[1]

    def with_X(self, X: np.ndarray) -> "GprfModel":
        return replace(self, X=X)

    def with_kernel(self, kernel: KernelSpec) -> "GprfModel":
        return replace(self, kernel=kernel)

    def with_edges(self, edges: EdgeSet) -> "GprfModel":
        return replace(self, edges=edges)


@dataclass
class ObjectiveReport:
    """Objective value with gradients w.r.t. X and the log-hyperparameters."""

    value: float
    grad_X: np.ndarray
    grad_theta: np.ndarray
    term_count: Dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class LocalPrecision:
    """Blocks of the inverse of the joint covariance of a block pair."""

    block_pair: Tuple[int, int]
    Q11: np.ndarray
    Q12: np.ndarray
    Q22: np.ndarray


@dataclass
class PrecisionReport:
    """
    Implicit precision of log q and its constant: for every output column y,
    log q contributes -1/2 y^T precision y + constant.
    """

    precision: np.ndarray
    constant: float
    positive_definite: bool
    local_precisions: List[LocalPrecision]


@dataclass
class BetheReport:
    free_energy: float
    kl_terms: List[Tuple[str, float]]


@dataclass(frozen=True)
class _Term:
    label: str
    weight: float
    indices: np.ndarray


@dataclass
class _TermResult:
    value: float
    grad_X: Optional[np.ndarray] = None
    grad_theta: Optional[np.ndarray] = None


def resolve_workers(workers: Optional[int]) -> int:
    """0 or None means one worker per core."""
    if not workers:
        return os.cpu_count() or 1
    return max(1, int(workers))


def map_ordered(fn: Callable, items: Sequence, workers: int) -> List:
    """Apply fn to every item, possibly on threads; results keep item order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _terms(partition: Partition, edges: EdgeSet) -> List[_Term]:
    degree = edges.degree
    terms = []
    for b, block in enumerate(partition.blocks):
        weight = float(1 - degree[b])
        if weight != 0.0:
            terms.append(_Term(f"node {b}", weight, block))
    for i, j in edges.edges:
        terms.append(_Term(f"edge ({i}, {j})", 1.0,
                           np.concatenate([partition.blocks[i], partition.blocks[j]])))
    return terms


def term_covariance(kernel: KernelSpec, X: np.ndarray, noisy: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Self-covariance of a term's points with noise on the diagonal entries
    flagged by noisy (all of them when noisy is None).
    """
    K = cov_matrix(kernel, X)
    diagonal = np.diag_indices_from(K)
    if noisy is None:
        K[diagonal] += kernel.noise_diagonal
    else:
        rows = diagonal[0][noisy]
        K[rows, rows] += kernel.noise_diagonal
    return K


def _lognorm(factor: GaussianFactor) -> float:
    return -0.5 * factor.logdet - 0.5 * factor.dim * LOG_2PI


def _evaluate_term(model: GprfModel, term: _Term, with_gradient: bool) -> _TermResult:
    X = model.X[term.indices]
    Y = model.Y[term.indices]
    factor = factorize(term_covariance(model.kernel, X), label=term.label)
    result = _TermResult(value=mvn_logpdf(factor, Y))
    if with_gradient:
        G = mvn_grad_wrt_cov(factor, Y)
        result.grad_X = contract_input_gradient(model.kernel, X, G)
        result.grad_theta = contract_hyper_gradient(model.kernel, X, G)
    return result


def _term_counts(model: GprfModel) -> Dict[str, int]:
    return {'nodes': model.partition.num_blocks, 'edges': len(model.edges)}


def gprf_value(model: GprfModel, workers: int = 1) -> float:
    """
    GPRF log-likelihood log q_GPRF(Y; X, theta), normalizers included.

    Args:
        model: Model to evaluate
        workers: Threads evaluating terms; does not affect the result

    Returns:
        Scalar objective
    """
    terms = _terms(model.partition, model.edges)
    results = map_ordered(lambda t: _evaluate_term(model, t, False), terms, resolve_workers(workers))
    value = 0.0
    for term, result in zip(terms, results):
        value += term.weight * result.value
    return value


def gprf_gradient(model: GprfModel, workers: int = 1) -> ObjectiveReport:
    """Objective plus its gradient w.r.t. X and the log-hyperparameters."""
    terms = _terms(model.partition, model.edges)
    results = map_ordered(lambda t: _evaluate_term(model, t, True), terms, resolve_workers(workers))
    value = 0.0
    grad_X = np.zeros_like(model.X)
    grad_theta = np.zeros(model.kernel.num_hyperparams)
    for term, result in zip(terms, results):
        value += term.weight * result.value
        grad_X[term.indices] += term.weight * result.grad_X
        grad_theta += term.weight * result.grad_theta
    return ObjectiveReport(value=value, grad_X=grad_X, grad_theta=grad_theta, term_count=_term_counts(model))


def assemble_block_precision(kernel: KernelSpec, X: np.ndarray, blocks: Sequence[np.ndarray],
                             edges: EdgeSet, noiseless_blocks: Sequence[int] = ()) -> PrecisionReport:
    """
    Implicit precision for an arbitrary block structure.

    Blocks listed in noiseless_blocks hold latent function values, so their
    diagonal carries neither noise nor jitter.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    noisy_points = np.ones(n, dtype=bool)
    for b in noiseless_blocks:
        noisy_points[blocks[b]] = False

    precision = np.zeros((n, n))
    constant = 0.0
    degree = edges.degree
    for b, block in enumerate(blocks):
        weight = float(1 - degree[b])
        if weight == 0.0:
            continue
        factor = factorize(term_covariance(kernel, X[block], noisy_points[block]), label=f"node {b}")
        precision[np.ix_(block, block)] += weight * factor.inverse()
        constant += weight * _lognorm(factor)

    local_precisions = []
    for i, j in edges.edges:
        bi, bj = blocks[i], blocks[j]
        joined = np.concatenate([bi, bj])
        factor = factorize(term_covariance(kernel, X[joined], noisy_points[joined]), label=f"edge ({i}, {j})")
        Q = factor.inverse()
        m = bi.size
        local = LocalPrecision((i, j), Q[:m, :m], Q[:m, m:], Q[m:, m:])
        precision[np.ix_(bi, bi)] += local.Q11
        precision[np.ix_(bj, bj)] += local.Q22
        precision[np.ix_(bi, bj)] = local.Q12
        precision[np.ix_(bj, bi)] = local.Q12.T
        constant += _lognorm(factor)
        local_precisions.append(local)

    precision = 0.5 * (precision + precision.T)
    positive_definite = bool(np.linalg.eigvalsh(precision)[0] > 0)
    if not positive_definite:
        logger.info("Approximate precision is not positive definite")
    return PrecisionReport(precision, constant, positive_definite, local_precisions)


def assemble_precision(model: GprfModel) -> PrecisionReport:
    """
    Approximate precision J and constant c with
    gprf_value = sum_d (-1/2 y_d^T J y_d) + D c.

    J_ii = K_ii^{-1} + sum_{j in E_i} (Q11^(ij) - K_ii^{-1}); J_ij = Q12^(ij)
    on edges and zero elsewhere.
    """
    return assemble_block_precision(model.kernel, model.X, model.partition.blocks, model.edges)


def bethe_check(model: GprfModel, node_scale: float = 1.0, edge_scale: float = 1.0) -> BetheReport:
    """
    Bethe free energy F_B = sum_i KL[b_i || p_i] + sum_(i,j) KL[b_ij || p_ij].

    Beliefs are built from the joint GP covariance: node beliefs are its
    diagonal blocks and edge beliefs join two of them with the
    cross-covariance, so they satisfy the marginalization constraints. Their
    covariances are scaled by node_scale / edge_scale and factored apart
    from the local terms p; at scale 1 they coincide and F_B is zero up to
    rounding.
    """
    blocks = model.partition.blocks
    marginals = [term_covariance(model.kernel, model.X[block]) for block in blocks]
    kl_terms = []
    for b, block in enumerate(blocks):
        label = f"node {b}"
        true = factorize(term_covariance(model.kernel, model.X[block]), label=label)
        belief = factorize(node_scale * marginals[b], label=f"{label} belief")
        kl_terms.append((label, gaussian_kl(belief, true)))
    for i, j in model.edges.edges:
        label = f"edge ({i}, {j})"
        joined = np.concatenate([blocks[i], blocks[j]])
        true = factorize(term_covariance(model.kernel, model.X[joined]), label=label)
        cross = cov_matrix(model.kernel, model.X[blocks[i]], model.X[blocks[j]])
        joint = np.block([[marginals[i], cross], [cross.T, marginals[j]]])
        belief = factorize(edge_scale * joint, label=f"{label} belief")
        kl_terms.append((label, gaussian_kl(belief, true)))

    free_energy = 0.0
    for _, kl in kl_terms:
        free_energy += kl
    return BetheReport(free_energy=free_energy, kl_terms=kl_terms)
