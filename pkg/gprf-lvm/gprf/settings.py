"""
Experiment configuration using QSettings.

Configs, dataset sidecars and run manifests are flat key=value files read
and written through QSettings in INI format. ExperimentSettings wraps a
config file with typed properties, rejects unknown keys and resolves paths
relative to the file's directory.
"""

import logging
import os
from typing import Any, Dict, Mapping, Optional, Tuple

from PyQt6.QtCore import QSettings

from .datagen import EVENTS, GENERATORS, SyntheticSpec, events_spec, uniform_spec
from .errors import ConfigError
from .kernels import SURFACE_DEPTH_GROUPS, Hyperparams, KernelFamily, KernelSpec
from .mapfit import FitConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

METHODS = ('full_gp', 'local', 'gprf', 'hybrid')
PARTITIONS = ('grid', 'pa_tree')
KERNELS = ('se_plain', 'se_half', 'matern32')
TRUE_WORDS = ('true', '1', 'yes', 'on')
FALSE_WORDS = ('false', '0', 'no', 'off')

# Every accepted key with its default; None means unset. Unset kernel keys and
# sigma_obs take the generator's defaults.
DEFAULTS: Dict[str, Optional[str]] = {
    # data
    'dataset': None,
    'generator': 'uniform',
    'n': '2000',
    'd': '2',
    'outputs': '50',
    'seed': '0',
    'sigma_obs': None,
    'catalog': None,
    # kernel
    'kernel': None,
    'signal_variance': None,
    'lengthscales': None,
    'noise_variance': None,
    'jitter': None,
    # model
    'method': 'gprf',
    'partition': 'grid',
    'block_size': '100',
    'cells_per_side': None,
    'edge_rule': 'grid8',
    # fit
    'optimize_x': 'true',
    'optimize_theta': 'false',
    'max_iters': '200',
    'grad_tol': '1e-4',
    'wall_clock_budget_s': 'inf',
    'trajectory_stride': '1',
    'hybrid_local_iters': None,
    'depth_bounded': 'false',
    'record_wall_time': 'true',
    # run
    'workers': '0',
    'output_dir': 'results',
    'log_level': 'INFO',
}

PATH_KEYS = ('dataset', 'catalog', 'output_dir')

# Written into manifests next to the config keys; ignored when a manifest is read back.
MANIFEST_KEYS = ('gprf_version', 'command')


def _text(value: Any) -> str:
    # QSettings splits unquoted comma-separated values into lists
    if isinstance(value, (list, tuple)):
        return ",".join(str(v).strip() for v in value)
    return str(value).strip()


def read_key_value_file(path: str) -> Dict[str, str]:
    """
    Read a flat key=value file.

    Args:
        path: File to read; lines starting with ';' are comments

    Returns:
        Dictionary of key to string value
    """
    if not os.path.isfile(path):
        raise ConfigError(f"File not found: {path}")
    settings = QSettings(path, QSettings.Format.IniFormat)
    if settings.status() != QSettings.Status.NoError:
        raise ConfigError(f"Could not parse {path}: status {settings.status()}")
    return {key: _text(settings.value(key)) for key in settings.allKeys()}


def write_key_value_file(path: str, values: Mapping[str, Any]) -> None:
    """Write values as key=value lines; None values are skipped."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if os.path.exists(path):
        os.remove(path)
    settings = QSettings(path, QSettings.Format.IniFormat)
    for key, value in values.items():
        if value is not None:
            settings.setValue(key, _text(value))
    settings.sync()
    if settings.status() != QSettings.Status.NoError:
        raise ConfigError(f"Could not write {path}: status {settings.status()}")
    logger.debug(f"Wrote {len(values)} keys to {path}")


def configure_logging(level: str = 'INFO') -> None:
    """Configure root logging once for command-line runs."""
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level: {level}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT)
    logging.getLogger().setLevel(numeric)


class ExperimentSettings:
    """Typed view of an experiment config file."""

    def __init__(self, path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None):
        """
        Args:
            path: Config file; None uses defaults only
            overrides: Values taking precedence over the file
        """
        self.path = os.path.abspath(path) if path else None
        self.base_dir = os.path.dirname(self.path) if self.path else os.getcwd()
        values = read_key_value_file(self.path) if self.path else {}
        values.update({key: _text(value) for key, value in (overrides or {}).items() if value is not None})
        for key in MANIFEST_KEYS:
            values.pop(key, None)
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        self._values = values

    def is_set(self, key: str) -> bool:
        """True if the file or overrides give key a value."""
        return self._values.get(key) not in (None, '')

    def _raw(self, key: str) -> Optional[str]:
        value = self._values.get(key, DEFAULTS[key])
        return value if value not in (None, '') else None

    def _float(self, key: str) -> Optional[float]:
        raw = self._raw(key)
        if raw is None:
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got '{raw}'")

    def _int(self, key: str) -> Optional[int]:
        raw = self._raw(key)
        if raw is None:
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got '{raw}'")

    def _bool(self, key: str) -> bool:
        raw = (self._raw(key) or '').lower()
        if raw in TRUE_WORDS:
            return True
        if raw in FALSE_WORDS:
            return False
        raise ConfigError(f"{key} must be true or false, got '{raw}'")

    def _choice(self, key: str, choices: Tuple[str, ...]) -> str:
        raw = self._raw(key)
        if raw not in choices:
            raise ConfigError(f"{key} must be one of {', '.join(choices)}, got '{raw}'")
        return raw

    def _path(self, key: str) -> Optional[str]:
        raw = self._raw(key)
        if raw is None:
            return None
        return os.path.normpath(os.path.join(self.base_dir, os.path.expanduser(raw)))

    # data

    @property
    def dataset(self) -> Optional[str]:
        return self._path('dataset')

    @property
    def generator(self) -> str:
        return self._choice('generator', GENERATORS)

    @property
    def n(self) -> int:
        return self._int('n')

    @property
    def d(self) -> int:
        return self._int('d')

    @property
    def outputs(self) -> int:
        return self._int('outputs')

    @property
    def seed(self) -> int:
        return self._int('seed')

    @property
    def sigma_obs(self) -> Optional[float]:
        return self._float('sigma_obs')

    @property
    def catalog(self) -> Optional[str]:
        return self._path('catalog')

    # kernel

    @property
    def kernel_family(self) -> Optional[KernelFamily]:
        return KernelFamily(self._choice('kernel', KERNELS)) if self.is_set('kernel') else None

    @property
    def signal_variance(self) -> Optional[float]:
        return self._float('signal_variance')

    @property
    def lengthscales(self) -> Optional[Tuple[float, ...]]:
        raw = self._raw('lengthscales')
        if raw is None:
            return None
        try:
            values = tuple(float(v) for v in raw.split(',') if v.strip())
        except ValueError:
            raise ConfigError(f"lengthscales must be a comma-separated list of numbers, got '{raw}'")
        if not values:
            raise ConfigError("lengthscales must not be empty")
        return values

    @property
    def noise_variance(self) -> Optional[float]:
        return self._float('noise_variance')

    @property
    def jitter(self) -> Optional[float]:
        return self._float('jitter')

    # model

    @property
    def method(self) -> str:
        return self._choice('method', METHODS)

    @property
    def partition(self) -> str:
        return self._choice('partition', PARTITIONS)

    @property
    def block_size(self) -> int:
        size = self._int('block_size')
        if size < 1:
            raise ConfigError(f"block_size must be positive, got {size}")
        return size

    @property
    def cells_per_side(self) -> Optional[int]:
        return self._int('cells_per_side')

    @property
    def edge_rule(self) -> Tuple[str, Optional[float]]:
        """(rule, tau); tau is only set for dist:<tau>."""
        raw = self._raw('edge_rule') or ''
        if raw in ('empty', 'complete', 'grid8'):
            return raw, None
        if raw.startswith('dist:'):
            try:
                tau = float(raw[len('dist:'):])
            except ValueError:
                raise ConfigError(f"edge_rule dist:<tau> needs a number, got '{raw}'")
            if tau < 0:
                raise ConfigError(f"edge_rule distance must be nonnegative, got {tau}")
            return 'dist', tau
        raise ConfigError(f"edge_rule must be empty, complete, grid8 or dist:<tau>, got '{raw}'")

    # fit

    @property
    def optimize_x(self) -> bool:
        return self._bool('optimize_x')

    @property
    def optimize_theta(self) -> bool:
        return self._bool('optimize_theta')

    @property
    def max_iters(self) -> int:
        return self._int('max_iters')

    @property
    def grad_tol(self) -> float:
        return self._float('grad_tol')

    @property
    def wall_clock_budget_s(self) -> float:
        return self._float('wall_clock_budget_s')

    @property
    def trajectory_stride(self) -> int:
        return self._int('trajectory_stride')

    @property
    def hybrid_local_iters(self) -> Optional[int]:
        return self._int('hybrid_local_iters')

    @property
    def depth_bounded(self) -> bool:
        return self._bool('depth_bounded')

    @property
    def record_wall_time(self) -> bool:
        return self._bool('record_wall_time')

    # run

    @property
    def workers(self) -> int:
        workers = self._int('workers')
        if workers < 0:
            raise ConfigError(f"workers must be nonnegative, got {workers}")
        return workers

    @property
    def output_dir(self) -> str:
        return self._path('output_dir')

    @property
    def log_level(self) -> str:
        return (self._raw('log_level') or 'INFO').upper()

    # derived objects

    def _generator_defaults(self, d: int) -> SyntheticSpec:
        make_spec = events_spec if self.generator == EVENTS else uniform_spec
        sigma_obs = {} if self.sigma_obs is None else {'sigma_obs': self.sigma_obs}
        return make_spec(self.n, D=self.outputs, seed=self.seed, d=d, **sigma_obs)

    def kernel_spec(self, d: int) -> KernelSpec:
        """
        Kernel for d-dimensional inputs.

        Kernel keys left unset fall back to the generator's own defaults.
        Two lengthscales on 3-D inputs split surface and depth.
        """
        base = self._generator_defaults(d).kernel
        family = self.kernel_family or base.family
        defaults = base.hyperparams
        signal_variance = defaults.signal_variance if self.signal_variance is None else self.signal_variance
        noise_variance = defaults.noise_variance if self.noise_variance is None else self.noise_variance
        lengthscales = self.lengthscales or defaults.lengthscales
        groups = None
        if len(lengthscales) == 2 and d == 3:
            groups = SURFACE_DEPTH_GROUPS
        elif len(lengthscales) != 1:
            raise ConfigError(f"{len(lengthscales)} lengthscales given for {d}-D inputs")
        hyper = Hyperparams(signal_variance, lengthscales, noise_variance)
        return KernelSpec(family, hyper, jitter=self.jitter, coordinate_groups=groups)

    def synthetic_spec(self) -> SyntheticSpec:
        """Generator spec from the data and kernel keys."""
        d = self.d
        spec = self._generator_defaults(d)
        return SyntheticSpec(n=spec.n, d=spec.d, D=spec.D, kernel=self.kernel_spec(d), sigma_obs=spec.sigma_obs,
                             seed=spec.seed, generator=spec.generator, geometry=spec.geometry)

    def fit_config(self, d: int) -> FitConfig:
        if self.depth_bounded and d != 3:
            raise ConfigError(f"depth_bounded needs 3-D inputs with depth last, got d={d}")
        return FitConfig(
            optimize_x=self.optimize_x,
            optimize_theta=self.optimize_theta,
            max_iters=self.max_iters,
            grad_tol=self.grad_tol,
            wall_clock_budget_s=self.wall_clock_budget_s,
            trajectory_stride=self.trajectory_stride,
            workers=self.workers,
            depth_coordinate=d - 1 if self.depth_bounded else None,
            record_wall_time=self.record_wall_time,
            hybrid_local_iters=self.hybrid_local_iters,
        )

    def resolved(self) -> Dict[str, Optional[str]]:
        """Every key with its effective value; paths made absolute."""
        values = {}
        for key in DEFAULTS:
            values[key] = self._path(key) if key in PATH_KEYS else self._raw(key)
        return values

    def write_manifest(self, path: str, extra: Optional[Mapping[str, Any]] = None) -> None:
        """
        Write the resolved config so the run can be reproduced; extra
        entries (library version, command) are written alongside.
        """
        values: Dict[str, Any] = dict(self.resolved())
        values.update(extra or {})
        write_key_value_file(path, values)
        logger.info(f"Wrote manifest {path}")

