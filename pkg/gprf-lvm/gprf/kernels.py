"""
Covariance functions for the GPRF toolkit.

This module provides:
- Hyperparams / KernelSpec value types (log-space hyperparameter vectors)
- Covariance matrices for the stationary kernel families
- Analytic derivatives with respect to log-hyperparameters and input points
- Contractions of a likelihood sensitivity dK against those derivatives,
  used by every gradient in the package

Distances may be anisotropic across coordinate groups: with groups
((0, 1), (2,)) and lengthscales (l_s, l_d) the scaled squared distance is
u = (r_surface / l_s)^2 + (r_depth / l_d)^2.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DimensionError, InvalidHyperparameterError

logger = logging.getLogger(__name__)

# Surface (x, y in km) and depth (km) groups for event-location data.
SURFACE_DEPTH_GROUPS: Tuple[Tuple[int, ...], ...] = ((0, 1), (2,))

DEFAULT_JITTER_RATIO = 1e-8


class KernelFamily(Enum):
    """Supported covariance families, as functions of scaled distance s = r / l."""
    SE_HALF = "se_half"  # sf2 * exp(-s^2 / 2)
    SE_PLAIN = "se_plain"  # sf2 * exp(-s^2)
    MATERN32 = "matern32"  # sf2 * (1 + sqrt(3) s) exp(-sqrt(3) s)
    EXPONENTIAL = "exponential"  # sf2 * exp(-s), block-chain fixtures only


@dataclass(frozen=True)
class Hyperparams:
    """Signal variance, lengthscales (one per coordinate group) and noise variance."""

    signal_variance: float
    lengthscales: Tuple[float, ...]
    noise_variance: float

    def __post_init__(self):
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in np.atleast_1d(self.lengthscales)))
        values = [self.signal_variance, *self.lengthscales, self.noise_variance]
        if not self.lengthscales:
            raise InvalidHyperparameterError("At least one lengthscale is required")
        for value in values:
            if not np.isfinite(value) or value <= 0:
                raise InvalidHyperparameterError(f"Hyperparameters must be finite and positive, got {values}")

    def log_vector(self) -> np.ndarray:
        """Return [log sf2, log l_1, ..., log l_G, log sn2]."""
        return np.log(np.array([self.signal_variance, *self.lengthscales, self.noise_variance]))

    @classmethod
    def from_log_vector(cls, values: Sequence[float]) -> "Hyperparams":
        """Inverse of log_vector."""
        values = np.exp(np.asarray(values, dtype=float))
        return cls(float(values[0]), tuple(values[1:-1]), float(values[-1]))


@dataclass(frozen=True)
class KernelSpec:
    """
    Covariance family plus hyperparameters.

    Args:
        family: Kernel family
        hyperparams: Hyperparameters
        jitter: Diagonal stabilizer for noisy self-covariances; None means
            1e-8 * signal_variance, tracking the signal variance
        coordinate_groups: Coordinates sharing each lengthscale; None means
            one isotropic group over all coordinates
    """

    family: KernelFamily
    hyperparams: Hyperparams
    jitter: Optional[float] = None
    coordinate_groups: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self):
        if self.jitter is not None and self.jitter < 0:
            raise InvalidHyperparameterError(f"Jitter must be nonnegative, got {self.jitter}")
        n_scales = len(self.hyperparams.lengthscales)
        if self.coordinate_groups is None:
            if n_scales != 1:
                raise InvalidHyperparameterError(
                    f"{n_scales} lengthscales given without coordinate groups"
                )
        else:
            groups = tuple(tuple(int(c) for c in group) for group in self.coordinate_groups)
            object.__setattr__(self, "coordinate_groups", groups)
            if n_scales not in (1, len(groups)):
                raise InvalidHyperparameterError(
                    f"{n_scales} lengthscales do not match {len(groups)} coordinate groups"
                )
            flat = sorted(c for group in groups for c in group)
            if flat != list(range(len(flat))):
                raise InvalidHyperparameterError(f"Coordinate groups {groups} must cover 0..d-1 exactly once")

    @property
    def effective_jitter(self) -> float:
        if self.jitter is None:
            return DEFAULT_JITTER_RATIO * self.hyperparams.signal_variance
        return self.jitter

    @property
    def noise_diagonal(self) -> float:
        """Value added to the diagonal of a noisy self-covariance."""
        return self.hyperparams.noise_variance + self.effective_jitter

    @property
    def num_hyperparams(self) -> int:
        return len(self.hyperparams.lengthscales) + 2

    def hyperparam_names(self) -> List[str]:
        scales = [f"log_lengthscale_{g}" for g in range(len(self.hyperparams.lengthscales))]
        return ["log_signal_variance", *scales, "log_noise_variance"]

    def log_hyperparams(self) -> np.ndarray:
        return self.hyperparams.log_vector()

    def with_log_hyperparams(self, values: Sequence[float]) -> "KernelSpec":
        return replace(self, hyperparams=Hyperparams.from_log_vector(values))

    def with_hyperparams(self, hyperparams: Hyperparams) -> "KernelSpec":
        return replace(self, hyperparams=hyperparams)

    def groups_for(self, d: int) -> Tuple[Tuple[int, ...], ...]:
        """Coordinate groups for d-dimensional inputs, one per lengthscale."""
        if self.coordinate_groups is None:
            return (tuple(range(d)),)
        n_coords = sum(len(group) for group in self.coordinate_groups)
        if n_coords != d:
            raise DimensionError(f"Coordinate groups cover {n_coords} coordinates but inputs have {d}")
        if len(self.hyperparams.lengthscales) == 1:
            return (tuple(range(d)),)
        return self.coordinate_groups

    def coordinate_lengthscales(self, d: int) -> np.ndarray:
        """Lengthscale applying to each of the d coordinates."""
        scales = np.empty(d)
        for group, ell in zip(self.groups_for(d), self.hyperparams.lengthscales):
            scales[list(group)] = ell
        return scales


def _as_points(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"Points must be a 2-D array, got shape {X.shape}")
    return X


def _sqdist(A: np.ndarray, B: Optional[np.ndarray]) -> np.ndarray:
    if B is None:
        if A.shape[0] < 2:
            return np.zeros((A.shape[0], A.shape[0]))
        return squareform(pdist(A, "sqeuclidean"))
    return cdist(A, B, "sqeuclidean")


def _scaled_sqdist(spec: KernelSpec, Xa: np.ndarray, Xb: Optional[np.ndarray]) -> np.ndarray:
    scales = spec.coordinate_lengthscales(Xa.shape[1])
    return _sqdist(Xa / scales, None if Xb is None else Xb / scales)


def _profile(family: KernelFamily, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-variance kernel value and its derivative with respect to u = s^2."""
    if family is KernelFamily.SE_HALF:
        k = np.exp(-0.5 * u)
        return k, -0.5 * k
    if family is KernelFamily.SE_PLAIN:
        k = np.exp(-u)
        return k, -k
    if family is KernelFamily.MATERN32:
        a = np.sqrt(3.0 * u)
        e = np.exp(-a)
        return (1.0 + a) * e, -1.5 * e
    if family is KernelFamily.EXPONENTIAL:
        s = np.sqrt(u)
        k = np.exp(-s)
        with np.errstate(divide="ignore", invalid="ignore"):
            dk = np.where(s > 0, -k / (2.0 * s), 0.0)
        return k, dk
    raise InvalidHyperparameterError(f"Unknown kernel family: {family}")


def cov_matrix(spec: KernelSpec, Xa: np.ndarray, Xb: Optional[np.ndarray] = None,
               add_noise: bool = False) -> np.ndarray:
    """
    Covariance between two point sets.

    Args:
        spec: Kernel specification
        Xa: Points, shape (n_a, d)
        Xb: Points, shape (n_b, d); None means Xa itself
        add_noise: Add noise variance plus jitter to the diagonal; only
            allowed for a self-covariance

    Returns:
        Matrix of shape (n_a, n_b)
    """
    Xa = _as_points(Xa)
    same = Xb is None or Xb is Xa
    if not same:
        Xb = _as_points(Xb)
        if Xb.shape[1] != Xa.shape[1]:
            raise DimensionError(f"Point dimensions differ: {Xa.shape[1]} vs {Xb.shape[1]}")
        if add_noise:
            if Xb.shape != Xa.shape or not np.array_equal(Xa, Xb):
                raise DimensionError("add_noise is only permitted for a self-covariance")
            same = True

    u = _scaled_sqdist(spec, Xa, None if same else Xb)
    k, _ = _profile(spec.family, u)
    K = spec.hyperparams.signal_variance * k
    if add_noise:
        K[np.diag_indices_from(K)] += spec.noise_diagonal
    return K


def cov_grad_hyper(spec: KernelSpec, X: np.ndarray) -> List[np.ndarray]:
    """
    Derivatives of the noisy self-covariance with respect to each
    log-hyperparameter, ordered as KernelSpec.log_hyperparams().
    """
    X = _as_points(X)
    n, d = X.shape
    if n == 0:
        raise DimensionError("Cannot differentiate an empty covariance")
    sf2 = spec.hyperparams.signal_variance
    k, dk = _profile(spec.family, _scaled_sqdist(spec, X, None))

    d_signal = sf2 * k
    if spec.jitter is None:
        d_signal[np.diag_indices(n)] += spec.effective_jitter
    grads = [d_signal]

    groups = spec.groups_for(d)
    for group, ell in zip(groups, spec.hyperparams.lengthscales):
        u_group = _sqdist(X[:, list(group)] / ell, None)
        grads.append(sf2 * dk * (-2.0 * u_group))

    grads.append(spec.hyperparams.noise_variance * np.eye(n))
    return grads


def cov_grad_input(spec: KernelSpec, X: np.ndarray, i: int, c: int) -> np.ndarray:
    """
    Derivative of the self-covariance with respect to coordinate c of point i.

    Nonzero only in row i and column i; the diagonal is zero because every
    family is stationary.
    """
    X = _as_points(X)
    n, d = X.shape
    if not (0 <= i < n and 0 <= c < d):
        raise DimensionError(f"Index ({i}, {c}) out of range for {n} points in {d} dimensions")
    _, dk = _profile(spec.family, _scaled_sqdist(spec, X, None))
    ell = spec.coordinate_lengthscales(d)[c]
    row = spec.hyperparams.signal_variance * dk[i] * 2.0 * (X[i, c] - X[:, c]) / ell ** 2
    row[i] = 0.0
    dK = np.zeros((n, n))
    dK[i, :] = row
    dK[:, i] = row
    return dK


def contract_input_gradient(spec: KernelSpec, X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """
    Return sum_pq G_pq dK_pq / dX as an (n, d) array without materializing
    the n*d derivative matrices.
    """
    X = _as_points(X)
    G = 0.5 * (G + G.T)
    _, dk = _profile(spec.family, _scaled_sqdist(spec, X, None))
    W = G * (spec.hyperparams.signal_variance * dk)
    scale = 4.0 / spec.coordinate_lengthscales(X.shape[1]) ** 2
    return scale * (W.sum(axis=1)[:, None] * X - W @ X)


def contract_hyper_gradient(spec: KernelSpec, X: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Return sum_pq G_pq dK_pq / dlog(theta_h) for each log-hyperparameter."""
    return np.array([np.sum(G * dK) for dK in cov_grad_hyper(spec, X)])
