"""
MAP estimation of latent locations and hyperparameters.

The driver maximizes a likelihood (GPRF by default, or the full GP) plus a
Gaussian prior on the locations with limited-memory BFGS and a strong-Wolfe
line search. It knows nothing about the block structure: local GPs, GPRFs
and full GPs only differ in the model or likelihood passed in.
"""

import logging
import time
import warnings
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import line_search
from scipy.special import expit

from .blocks import edges_empty
from .errors import ConfigError, DimensionError, InvalidHyperparameterError, NumericalError
from .fullgp import build_full_gp, full_gradient
from .kernels import KernelSpec
from .objective import GprfModel, ObjectiveReport, gprf_gradient

logger = logging.getLogger(__name__)

Likelihood = Callable[[GprfModel, int], ObjectiveReport]

TRAJECTORY_COLUMNS = ['step', 'wall_time_s', 'objective', 'grad_norm', 'mean_location_error']

# Smallest depth accepted when mapping an initial depth through the inverse softplus.
MIN_INITIAL_DEPTH = 1e-3

CURVATURE_EPS = 1e-10

# Warm-up iterations of the local stage of fit_hybrid when hybrid_local_iters is unset.
DEFAULT_HYBRID_LOCAL_ITERS = 10


@dataclass(frozen=True, eq=False)
class LocationPrior:
    """Independent Gaussian prior X ~ N(X_obs, diag(sigma_obs^2)) per point."""

    X_obs: np.ndarray
    sigma_obs: np.ndarray

    def __post_init__(self):
        X_obs = np.asarray(self.X_obs, dtype=float)
        if X_obs.ndim == 1:
            X_obs = X_obs[:, None]
        try:
            sigma = np.broadcast_to(np.asarray(self.sigma_obs, dtype=float), (X_obs.shape[1],)).copy()
        except ValueError:
            raise DimensionError(f"sigma_obs {self.sigma_obs} does not fit {X_obs.shape[1]} coordinates")
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise InvalidHyperparameterError(f"sigma_obs must be finite and positive, got {sigma}")
        object.__setattr__(self, "X_obs", X_obs)
        object.__setattr__(self, "sigma_obs", sigma)

    def log_density(self, X: np.ndarray) -> Tuple[float, np.ndarray]:
        """Prior log-density (normalized) and its gradient w.r.t. X."""
        if X.shape != self.X_obs.shape:
            raise DimensionError(f"Locations {X.shape} do not match observed locations {self.X_obs.shape}")
        residual = (X - self.X_obs) / self.sigma_obs
        value = float(-0.5 * np.sum(residual ** 2)
                      - X.shape[0] * np.sum(np.log(self.sigma_obs * np.sqrt(2.0 * np.pi))))
        return value, -residual / self.sigma_obs


@dataclass
class FitConfig:
    """
    Optimizer settings.

    Args:
        optimize_x: Optimize the latent locations
        optimize_theta: Optimize the log-hyperparameters jointly with X
        max_iters: Maximum number of quasi-Newton steps
        grad_tol: Stop when the infinity norm of the gradient falls below this
        wall_clock_budget_s: Stop once this much time has elapsed
        trajectory_stride: Record every this many steps
        memory: Number of curvature pairs kept
        c1, c2: Wolfe constants
        workers: Threads per likelihood evaluation
        depth_coordinate: Coordinate kept nonnegative through a softplus map
        free_points: Indices of points whose locations move; None means all
        record_wall_time: Write elapsed time into the trajectory; when off
            the column is 0.0 so repeated runs give identical files
        max_failures: Consecutive failed steps tolerated before aborting
        hybrid_local_iters: Iterations of the local (E empty) stage in
            fit_hybrid; None means
            min(DEFAULT_HYBRID_LOCAL_ITERS, max_iters)
    """

    optimize_x: bool = True
    optimize_theta: bool = False
    max_iters: int = 200
    grad_tol: float = 1e-4
    wall_clock_budget_s: float = float('inf')
    trajectory_stride: int = 1
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    workers: int = 1
    depth_coordinate: Optional[int] = None
    free_points: Optional[np.ndarray] = None
    record_wall_time: bool = True
    max_failures: int = 5
    hybrid_local_iters: Optional[int] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.trajectory_stride < 1:
            raise ConfigError(f"trajectory_stride must be at least 1, got {self.trajectory_stride}")
        if self.memory < 1 or self.max_failures < 1:
            raise ConfigError("memory and max_failures must be positive")
        if not (0 < self.c1 < self.c2 < 1):
            raise ConfigError(f"Wolfe constants need 0 < c1 < c2 < 1, got {self.c1}, {self.c2}")
        if not (self.optimize_x or self.optimize_theta):
            raise ConfigError("Nothing to optimize: enable optimize_x or optimize_theta")
        if self.hybrid_local_iters is not None and self.hybrid_local_iters < 1:
            raise ConfigError(f"hybrid_local_iters must be at least 1, got {self.hybrid_local_iters}")


@dataclass
class TrajectoryRecord:
    step: int
    wall_time_s: float
    objective: float
    grad_norm: float
    mean_location_error: float = float('nan')


@dataclass
class Trajectory:
    records: List[TrajectoryRecord] = field(default_factory=list)

    def append(self, record: TrajectoryRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last(self) -> Optional[TrajectoryRecord]:
        return self.records[-1] if self.records else None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=TRAJECTORY_COLUMNS)


@dataclass
class FitResult:
    X_hat: np.ndarray
    kernel: KernelSpec
    trajectory: Trajectory
    iterations: int
    objective: float
    grad_norm: float
    stop_reason: str
    evaluations: int = 0

    @property
    def theta_hat(self):
        return self.kernel.hyperparams

    @property
    def converged(self) -> bool:
        return self.stop_reason == 'grad_tol'

    @property
    def budget_exhausted(self) -> bool:
        return self.stop_reason in ('max_iters', 'wall_clock_budget')

    @property
    def aborted(self) -> bool:
        return self.stop_reason == 'aborted'


def mean_location_error(X_hat: np.ndarray, X_true: np.ndarray) -> float:
    """Average Euclidean distance between estimated and true locations."""
    X_hat = np.asarray(X_hat, dtype=float)
    X_true = np.asarray(X_true, dtype=float)
    if X_hat.shape != X_true.shape:
        raise DimensionError(f"Shapes differ: {X_hat.shape} vs {X_true.shape}")
    if X_hat.ndim == 1:
        return float(np.mean(np.abs(X_hat - X_true)))
    return float(np.mean(np.linalg.norm(X_hat - X_true, axis=1)))


def full_gp_likelihood(model: GprfModel, workers: int = 1) -> ObjectiveReport:
    """Exact GP log-likelihood with the same signature as gprf_gradient; ignores the partition."""
    return full_gradient(build_full_gp(model.kernel, model.X, model.Y))


def map_objective(model: GprfModel, prior: LocationPrior, config: Optional[FitConfig] = None,
                  likelihood: Likelihood = gprf_gradient) -> ObjectiveReport:
    """Likelihood plus location prior, with gradients."""
    workers = config.workers if config is not None else 1
    report = likelihood(model, workers)
    prior_value, prior_grad = prior.log_density(model.X)
    return ObjectiveReport(
        value=report.value + prior_value,
        grad_X=report.grad_X + prior_grad,
        grad_theta=report.grad_theta,
        term_count=report.term_count,
    )


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _softplus_inverse(x: np.ndarray) -> np.ndarray:
    x = np.maximum(x, MIN_INITIAL_DEPTH)
    return x + np.log(-np.expm1(-x))


class _Parameterization:
    """Maps (X, kernel) to the optimizer's flat vector: free rows of X row-major, then log-theta."""

    def __init__(self, model: GprfModel, config: FitConfig):
        n, d = model.X.shape
        self.base_X = model.X.copy()
        self.base_kernel = model.kernel
        self.d = d
        self.optimize_x = config.optimize_x
        self.optimize_theta = config.optimize_theta
        if config.free_points is None:
            self.free = np.arange(n)
        else:
            self.free = np.unique(np.asarray(config.free_points, dtype=np.int64))
            if self.free.size == 0 or self.free.min() < 0 or self.free.max() >= n:
                raise DimensionError(f"free_points must be nonempty indices below {n}")
        self.depth = config.depth_coordinate
        if self.depth is not None:
            if not (0 <= self.depth < d):
                raise DimensionError(f"depth_coordinate {self.depth} outside {d} coordinates")
            shallow = int(np.sum(self.base_X[self.free, self.depth] < MIN_INITIAL_DEPTH))
            if shallow:
                logger.warning(f"{shallow} initial depths raised to {MIN_INITIAL_DEPTH}")

    @property
    def num_location_vars(self) -> int:
        return self.free.size * self.d if self.optimize_x else 0

    def pack(self, X: np.ndarray, kernel: KernelSpec) -> np.ndarray:
        parts = []
        if self.optimize_x:
            Z = X[self.free].copy()
            if self.depth is not None:
                Z[:, self.depth] = _softplus_inverse(Z[:, self.depth])
            parts.append(Z.ravel())
        if self.optimize_theta:
            parts.append(kernel.log_hyperparams())
        return np.ascontiguousarray(np.concatenate(parts))

    def _free_block(self, v: np.ndarray) -> np.ndarray:
        return v[:self.num_location_vars].reshape(self.free.size, self.d)

    def unpack(self, v: np.ndarray) -> Tuple[np.ndarray, KernelSpec]:
        X = self.base_X.copy()
        kernel = self.base_kernel
        if self.optimize_x:
            Z = self._free_block(v).copy()
            if self.depth is not None:
                Z[:, self.depth] = _softplus(Z[:, self.depth])
            X[self.free] = Z
        if self.optimize_theta:
            kernel = self.base_kernel.with_log_hyperparams(v[self.num_location_vars:])
        return X, kernel

    def gradient(self, v: np.ndarray, report: ObjectiveReport) -> np.ndarray:
        parts = []
        if self.optimize_x:
            G = report.grad_X[self.free].copy()
            if self.depth is not None:
                G[:, self.depth] *= expit(self._free_block(v)[:, self.depth])
            parts.append(G.ravel())
        if self.optimize_theta:
            parts.append(report.grad_theta)
        return np.concatenate(parts)


class _EvaluationFailed(Exception):
    pass


class _Evaluator:
    """Negative MAP objective and gradient, caching the most recent point."""

    def __init__(self, model: GprfModel, prior: LocationPrior, config: FitConfig,
                 likelihood: Likelihood, param: _Parameterization):
        self.model = model
        self.prior = prior
        self.config = config
        self.likelihood = likelihood
        self.param = param
        self.evaluations = 0
        self._key = None
        self._report = None
        self._grad = None

    def report(self, v: np.ndarray) -> ObjectiveReport:
        v = np.ascontiguousarray(v, dtype=float)
        key = v.tobytes()
        if key != self._key:
            self.evaluations += 1
            try:
                X, kernel = self.param.unpack(v)
                report = map_objective(self.model.with_X(X).with_kernel(kernel), self.prior,
                                       self.config, self.likelihood)
            except (NumericalError, InvalidHyperparameterError) as e:
                raise _EvaluationFailed(str(e)) from e
            grad = self.param.gradient(v, report)
            if not np.isfinite(report.value) or not np.all(np.isfinite(grad)):
                raise _EvaluationFailed("objective or gradient is not finite")
            self._key, self._report, self._grad = key, report, grad
        return self._report

    def f(self, v: np.ndarray) -> float:
        return -self.report(v).value

    def fprime(self, v: np.ndarray) -> np.ndarray:
        self.report(v)
        return -self._grad


def _two_loop(g: np.ndarray, s_list: deque, y_list: deque) -> np.ndarray:
    """Apply the L-BFGS inverse Hessian approximation to g."""
    q = g.copy()
    history = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / np.dot(y, s)
        alpha = rho * np.dot(s, q)
        q -= alpha * y
        history.append((rho, alpha))
    if s_list:
        q *= np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1])
    for (s, y), (rho, alpha) in zip(zip(s_list, y_list), reversed(history)):
        beta = rho * np.dot(y, q)
        q += s * (alpha - beta)
    return q


def _backtrack(evaluator: _Evaluator, v: np.ndarray, fval: float, g: np.ndarray,
               c1: float, attempt: int) -> Optional[np.ndarray]:
    """Armijo backtracking along steepest descent; None if no trial step decreases f."""
    g_norm2 = float(np.dot(g, g))
    step = min(1.0, 1.0 / np.sqrt(g_norm2)) * 0.5 ** attempt
    for _ in range(40):
        trial = v - step * g
        try:
            if evaluator.f(trial) <= fval - c1 * step * g_norm2:
                return trial
        except _EvaluationFailed:
            pass
        step *= 0.5
    return None


def fit(model: GprfModel, prior: LocationPrior, config: Optional[FitConfig] = None,
        X_true: Optional[np.ndarray] = None, likelihood: Likelihood = gprf_gradient,
        clock_start: Optional[float] = None, step_offset: int = 0) -> FitResult:
    """
    Maximize likelihood + location prior with L-BFGS.

    Args:
        model: Starting model; its X and kernel are the initial iterate
        prior: Location prior
        config: Optimizer settings
        X_true: True locations, for the trajectory's mean_location_error
        likelihood: gprf_gradient or full_gp_likelihood
        clock_start: time.perf_counter() value that wall_time_s counts from
        step_offset: Added to recorded step numbers

    Returns:
        FitResult with the last accepted iterate
    """
    config = config or FitConfig()
    start = time.perf_counter() if clock_start is None else clock_start
    param = _Parameterization(model, config)
    evaluator = _Evaluator(model, prior, config, likelihood, param)
    trajectory = Trajectory()

    v = param.pack(model.X, model.kernel)
    try:
        fval = evaluator.f(v)
    except _EvaluationFailed as e:
        raise e.__cause__ or NumericalError(str(e), "initial point")
    g = evaluator.fprime(v)

    def record(step: int):
        X, _ = param.unpack(v)
        error = mean_location_error(X, X_true) if X_true is not None else float('nan')
        elapsed = time.perf_counter() - start if config.record_wall_time else 0.0
        trajectory.append(TrajectoryRecord(step_offset + step, elapsed, -fval, float(np.max(np.abs(g))), error))

    logger.info(f"Fit started: {v.size} variables, objective {-fval:.6g}")
    record(0)
    s_list = deque(maxlen=config.memory)
    y_list = deque(maxlen=config.memory)
    old_old_fval = fval + np.linalg.norm(g) / 2
    failures = 0
    step = 0
    while True:
        if np.max(np.abs(g)) <= config.grad_tol:
            stop_reason = 'grad_tol'
            break
        if step >= config.max_iters:
            stop_reason = 'max_iters'
            break
        if time.perf_counter() - start >= config.wall_clock_budget_s:
            stop_reason = 'wall_clock_budget'
            break

        direction = -_two_loop(g, s_list, y_list)
        if np.dot(direction, g) >= 0:
            s_list.clear()
            y_list.clear()
            direction = -g
        try:
            with warnings.catch_warnings():
                warnings.filterwarnings("ignore", message="The line search algorithm")
                alpha, _, _, new_fval, _, _ = line_search(
                    evaluator.f, evaluator.fprime, v, direction, g, fval, old_old_fval, c1=config.c1, c2=config.c2
                )
        except _EvaluationFailed:
            alpha = None

        if alpha is None:
            logger.warning(f"Line search failed at step {step}; backing off along the gradient")
            s_list.clear()
            y_list.clear()
            v_new = _backtrack(evaluator, v, fval, g, config.c1, failures)
            if v_new is None:
                failures += 1
                if failures >= config.max_failures:
                    logger.error(f"Fit aborted after {failures} consecutive failed steps")
                    stop_reason = 'aborted'
                    break
                continue
            new_fval = evaluator.f(v_new)
        else:
            v_new = v + alpha * direction
        failures = 0

        g_new = evaluator.fprime(v_new)
        s = v_new - v
        y = g_new - g
        if np.dot(y, s) > CURVATURE_EPS:
            s_list.append(s)
            y_list.append(y)
        old_old_fval, fval = fval, float(new_fval)
        v, g = v_new, g_new
        step += 1
        if step % config.trajectory_stride == 0:
            record(step)

    if trajectory.last.step != step_offset + step:
        record(step)
    X_hat, kernel = param.unpack(v)
    grad_norm = float(np.max(np.abs(g)))
    logger.info(f"Fit finished after {step} steps ({stop_reason}): objective {-fval:.6g}, gradient {grad_norm:.3g}")
    return FitResult(X_hat=X_hat, kernel=kernel, trajectory=trajectory, iterations=step, objective=-fval,
                     grad_norm=grad_norm, stop_reason=stop_reason, evaluations=evaluator.evaluations)


def fit_hybrid(model: GprfModel, prior: LocationPrior, config: Optional[FitConfig] = None,
               X_true: Optional[np.ndarray] = None, clock_start: Optional[float] = None) -> FitResult:
    """
    Two-stage fit: a short warm-up with independent local GPs (no edges),
    then the model's own edge set starting from the warm-up solution.
    """
    config = config or FitConfig()
    start = time.perf_counter() if clock_start is None else clock_start
    local_iters = config.hybrid_local_iters or min(DEFAULT_HYBRID_LOCAL_ITERS, config.max_iters)
    local_config = replace(config, max_iters=local_iters)
    local_model = model.with_edges(edges_empty(model.partition.num_blocks))
    logger.info("Hybrid fit: local stage")
    local = fit(local_model, prior, local_config, X_true=X_true, clock_start=start)

    logger.info("Hybrid fit: GPRF stage")
    staged = model.with_X(local.X_hat).with_kernel(local.kernel)
    result = fit(staged, prior, config, X_true=X_true, clock_start=start, step_offset=local.iterations)

    trajectory = Trajectory(local.trajectory.records + result.trajectory.records[1:])
    return replace(result, trajectory=trajectory, iterations=local.iterations + result.iterations,
                   evaluations=local.evaluations + result.evaluations)
