"""
Reproducible synthetic datasets.

Two generators are provided:
- uniform: n points uniform on a square of side sqrt(n), SE outputs
- events: clustered event locations (x, y in km, depth in km) with
  Matern-3/2 outputs, standing in for a real event catalog

Randomness comes from numpy's PCG64 generator. SeedSequence(seed) is spawned
into independent streams: one for the locations, one for the observation
noise, and one per output column.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import DimensionError
from .fullgp import check_dense_size
from .gaussian import factorize
from .kernels import SURFACE_DEPTH_GROUPS, Hyperparams, KernelFamily, KernelSpec, cov_matrix

logger = logging.getLogger(__name__)

GENERATOR_ID = "numpy-PCG64/SeedSequence.spawn(locations,noise,y1..yD)"

UNIFORM = "uniform"
EVENTS = "events"
GENERATORS = (UNIFORM, EVENTS)


@dataclass(frozen=True)
class EventGeometry:
    """
    Clustered event layout: elongated fault-like clusters inside a square
    region, plus uniformly scattered background events.
    """

    region_km: float = 1000.0
    num_clusters: int = 12
    cluster_length_km: float = 150.0
    cluster_thickness_km: float = 15.0
    max_depth_km: float = 100.0
    depth_spread_km: float = 10.0
    background_fraction: float = 0.1


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    D: int
    kernel: KernelSpec
    sigma_obs: float
    seed: int = 0
    generator: str = UNIFORM
    geometry: EventGeometry = field(default_factory=EventGeometry)

    def __post_init__(self):
        if self.n < 1 or self.D < 1 or self.d < 1:
            raise DimensionError(f"n, d and D must be positive, got n={self.n}, d={self.d}, D={self.D}")
        if self.generator not in GENERATORS:
            raise DimensionError(f"Unknown generator '{self.generator}', expected one of {GENERATORS}")
        if self.generator == EVENTS and self.d not in (2, 3):
            raise DimensionError(f"Event locations are 2-D or 3-D, got d={self.d}")
        if not self.sigma_obs > 0:
            raise DimensionError(f"sigma_obs must be positive, got {self.sigma_obs}")


@dataclass(frozen=True, eq=False)
class Dataset:
    X_true: np.ndarray
    X_obs: np.ndarray
    Y: np.ndarray
    spec: SyntheticSpec

    @property
    def n(self) -> int:
        return self.X_true.shape[0]

    def metadata(self) -> Dict[str, Any]:
        """Sidecar fields describing how the dataset was generated."""
        hyper = self.spec.kernel.hyperparams
        return {
            'n': self.n,
            'd': self.X_true.shape[1],
            'D': self.Y.shape[1],
            'generator': self.spec.generator,
            'kernel': self.spec.kernel.family.value,
            'signal_variance': hyper.signal_variance,
            'lengthscales': ",".join(repr(v) for v in hyper.lengthscales),
            'noise_variance': hyper.noise_variance,
            'sigma_obs': self.spec.sigma_obs,
            'seed': self.spec.seed,
            'rng': GENERATOR_ID,
        }


def uniform_spec(n: int, D: int = 50, seed: int = 0, sigma_obs: float = 2.0, lengthscale: float = 6.0,
                 noise_std: float = 0.1, signal_variance: float = 1.0, d: int = 2,
                 family: KernelFamily = KernelFamily.SE_PLAIN) -> SyntheticSpec:
    """Uniform-square task defaults: SE kernel exp(-(r/6)^2), noise std 0.1, sigma_obs 2."""
    kernel = KernelSpec(family, Hyperparams(signal_variance, (lengthscale,), noise_std ** 2))
    return SyntheticSpec(n=n, d=d, D=D, kernel=kernel, sigma_obs=sigma_obs, seed=seed, generator=UNIFORM)


def events_spec(n: int, D: int = 50, seed: int = 0, sigma_obs: float = 20.0, lengthscale: float = 40.0,
                noise_std: float = 0.1, signal_variance: float = 1.0, d: int = 3,
                geometry: Optional[EventGeometry] = None) -> SyntheticSpec:
    """Event task defaults: Matern-3/2 with 40 km lengthscales and 20 km location noise."""
    if d == 3:
        kernel = KernelSpec(KernelFamily.MATERN32,
                            Hyperparams(signal_variance, (lengthscale, lengthscale), noise_std ** 2),
                            coordinate_groups=SURFACE_DEPTH_GROUPS)
    else:
        kernel = KernelSpec(KernelFamily.MATERN32, Hyperparams(signal_variance, (lengthscale,), noise_std ** 2))
    return SyntheticSpec(n=n, d=d, D=D, kernel=kernel, sigma_obs=sigma_obs, seed=seed, generator=EVENTS,
                         geometry=geometry or EventGeometry())


def _streams(spec: SyntheticSpec) -> Tuple[np.random.Generator, np.random.Generator, List[np.random.Generator]]:
    children = np.random.SeedSequence(spec.seed).spawn(2 + spec.D)
    generators = [np.random.Generator(np.random.PCG64(child)) for child in children]
    return generators[0], generators[1], generators[2:]


def _sample(X_true: np.ndarray, spec: SyntheticSpec, noise_rng: np.random.Generator,
            output_rngs: List[np.random.Generator]) -> Dataset:
    n = X_true.shape[0]
    factor = factorize(cov_matrix(spec.kernel, X_true, add_noise=True), label="dataset covariance")
    Y = np.empty((n, spec.D))
    for column, rng in enumerate(output_rngs):
        Y[:, column] = factor.chol @ rng.standard_normal(n)
    X_obs = X_true + noise_rng.normal(0.0, spec.sigma_obs, size=X_true.shape)
    return Dataset(X_true=X_true, X_obs=X_obs, Y=Y, spec=spec)


def gen_uniform(spec: SyntheticSpec) -> Dataset:
    """Points uniform on [0, sqrt(n)]^d with GP outputs and Gaussian location noise."""
    check_dense_size(spec.n, "dense sampling")
    location_rng, noise_rng, output_rngs = _streams(spec)
    X_true = location_rng.uniform(0.0, np.sqrt(spec.n), size=(spec.n, spec.d))
    logger.info(f"Sampling uniform dataset: n={spec.n}, d={spec.d}, D={spec.D}, seed={spec.seed}")
    return _sample(X_true, spec, noise_rng, output_rngs)


def _event_locations(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    geo = spec.geometry
    n = spec.n
    centers = rng.uniform(0.0, geo.region_km, size=(geo.num_clusters, 2))
    angles = rng.uniform(0.0, np.pi, size=geo.num_clusters)
    center_depths = rng.uniform(0.0, geo.max_depth_km, size=geo.num_clusters)
    weights = rng.dirichlet(np.ones(geo.num_clusters))

    background = rng.random(n) < geo.background_fraction
    cluster = rng.choice(geo.num_clusters, size=n, p=weights)
    along = rng.uniform(-0.5, 0.5, size=n) * geo.cluster_length_km
    across = rng.normal(0.0, geo.cluster_thickness_km, size=n)
    cos_a, sin_a = np.cos(angles[cluster]), np.sin(angles[cluster])
    surface = centers[cluster] + np.column_stack([along * cos_a - across * sin_a, along * sin_a + across * cos_a])
    surface[background] = rng.uniform(0.0, geo.region_km, size=(int(background.sum()), 2))

    if spec.d == 2:
        return surface
    depth = center_depths[cluster] + rng.normal(0.0, geo.depth_spread_km, size=n)
    depth[background] = rng.uniform(0.0, geo.max_depth_km, size=int(background.sum()))
    # truncated at the surface
    return np.column_stack([surface, np.maximum(depth, 0.0)])


def gen_events(spec: SyntheticSpec) -> Dataset:
    """Clustered event locations with Matern outputs and per-coordinate location noise."""
    check_dense_size(spec.n, "dense sampling")
    location_rng, noise_rng, output_rngs = _streams(spec)
    X_true = _event_locations(spec, location_rng)
    logger.info(f"Sampling event dataset: n={spec.n}, d={spec.d}, D={spec.D}, seed={spec.seed}")
    return _sample(X_true, spec, noise_rng, output_rngs)


def gen_events_at(locations: np.ndarray, spec: SyntheticSpec) -> Dataset:
    """
    Sample outputs and noisy observed locations at given true locations,
    e.g. an imported catalog. spec.n and spec.d must match the locations.
    """
    X_true = np.asarray(locations, dtype=float)
    if X_true.ndim != 2 or X_true.shape != (spec.n, spec.d):
        raise DimensionError(f"Locations of shape {X_true.shape} do not match n={spec.n}, d={spec.d}")
    check_dense_size(spec.n, "dense sampling")
    _, noise_rng, output_rngs = _streams(spec)
    return _sample(X_true.copy(), spec, noise_rng, output_rngs)


def generate(spec: SyntheticSpec) -> Dataset:
    if spec.generator == EVENTS:
        return gen_events(spec)
    return gen_uniform(spec)
