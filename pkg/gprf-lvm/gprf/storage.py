"""
CSV persistence for datasets, partitions, edge sets, locations and
trajectories.

All files are UTF-8 CSV with a header row. Floats are written with 17
significant digits so a save/load cycle reproduces every value exactly and
identical runs produce identical files. Datasets carry a key=value sidecar
describing how they were generated.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from .blocks import EdgeSet, Partition
from .datagen import Dataset
from .errors import ConfigError, StorageError
from .mapfit import TRAJECTORY_COLUMNS, Trajectory
from .settings import read_key_value_file, write_key_value_file

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
SIDECAR_SUFFIX = '.meta'


@dataclass(frozen=True, eq=False)
class StoredDataset:
    X_true: np.ndarray
    X_obs: np.ndarray
    Y: np.ndarray
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X_true.shape[0]

    @property
    def d(self) -> int:
        return self.X_true.shape[1]


def sidecar_path(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + SIDECAR_SUFFIX


def _write_frame(frame: pd.DataFrame, path: str, what: str) -> None:
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
    except OSError as e:
        raise StorageError(f"Failed to write {what} to {path}: {e}")
    logger.info(f"Exported {len(frame)} {what} rows to {path}")


def _read_frame(path: str, what: str, required: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, encoding='utf-8')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise StorageError(f"Failed to read {what} from {path}: {e}")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise StorageError(f"{path} is missing {what} columns: {', '.join(missing)}")
    return frame


def _numbered(prefix: str, count: int) -> List[str]:
    return [f"{prefix}{i}" for i in range(1, count + 1)]


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write x1..xd, xobs1..xobsd, y1..yD columns plus the sidecar."""
    d = dataset.X_true.shape[1]
    D = dataset.Y.shape[1]
    frame = pd.DataFrame(
        np.hstack([dataset.X_true, dataset.X_obs, dataset.Y]),
        columns=_numbered('x', d) + _numbered('xobs', d) + _numbered('y', D),
    )
    _write_frame(frame, path, 'dataset')
    try:
        write_key_value_file(sidecar_path(path), dataset.metadata())
    except ConfigError as e:
        raise StorageError(str(e))


def load_dataset(path: str) -> StoredDataset:
    """Read a dataset CSV and, when present, its sidecar."""
    frame = _read_frame(path, 'dataset', ['x1', 'xobs1', 'y1'])
    d = sum(1 for c in frame.columns if c.startswith('x') and c[1:].isdigit())
    D = sum(1 for c in frame.columns if c.startswith('y') and c[1:].isdigit())
    X_true = frame[_numbered('x', d)].to_numpy(dtype=float)
    try:
        X_obs = frame[_numbered('xobs', d)].to_numpy(dtype=float)
    except KeyError as e:
        raise StorageError(f"{path} has {d} true coordinates but not the matching observed ones: {e}")
    Y = frame[_numbered('y', D)].to_numpy(dtype=float)

    metadata = {}
    meta_path = sidecar_path(path)
    if os.path.exists(meta_path):
        try:
            metadata = read_key_value_file(meta_path)
        except ConfigError as e:
            raise StorageError(str(e))
        if 'n' in metadata and int(metadata['n']) != X_true.shape[0]:
            raise StorageError(f"Sidecar says n={metadata['n']} but {path} has {X_true.shape[0]} rows")
    else:
        logger.warning(f"No sidecar next to {path}")
    return StoredDataset(X_true=X_true, X_obs=X_obs, Y=Y, metadata=metadata)


def save_partition(partition: Partition, path: str) -> None:
    frame = pd.DataFrame({'point_index': np.arange(partition.n), 'block_id': partition.assignment})
    _write_frame(frame, path, 'partition')


def load_partition(path: str) -> Partition:
    frame = _read_frame(path, 'partition', ['point_index', 'block_id']).sort_values('point_index')
    if not np.array_equal(frame['point_index'].to_numpy(), np.arange(len(frame))):
        raise StorageError(f"{path} must list every point index 0..n-1 exactly once")
    return Partition.from_assignment(frame['block_id'].to_numpy(dtype=np.int64))


def save_edges(edges: EdgeSet, path: str) -> None:
    pairs = np.array(edges.edges, dtype=np.int64).reshape(-1, 2)
    _write_frame(pd.DataFrame(pairs, columns=['block_i', 'block_j']), path, 'edge')


def load_edges(path: str, num_blocks: int) -> EdgeSet:
    frame = _read_frame(path, 'edge', ['block_i', 'block_j'])
    return EdgeSet.from_pairs(zip(frame['block_i'].tolist(), frame['block_j'].tolist()), num_blocks)


def save_locations(X: np.ndarray, path: str) -> None:
    X = np.asarray(X, dtype=float)
    frame = pd.DataFrame(X, columns=_numbered('x', X.shape[1]))
    frame.insert(0, 'point_index', np.arange(X.shape[0]))
    _write_frame(frame, path, 'location')


def load_locations(path: str) -> np.ndarray:
    frame = _read_frame(path, 'location', ['point_index', 'x1']).sort_values('point_index')
    d = sum(1 for c in frame.columns if c.startswith('x') and c[1:].isdigit())
    return frame[_numbered('x', d)].to_numpy(dtype=float)


def save_trajectory(trajectory: Trajectory, path: str) -> None:
    _write_frame(trajectory.to_frame(), path, 'trajectory')


def load_trajectory(path: str) -> pd.DataFrame:
    return _read_frame(path, 'trajectory', TRAJECTORY_COLUMNS)


def load_catalog(path: str) -> np.ndarray:
    """Planar event locations in km: columns x, y and optionally depth."""
    frame = _read_frame(path, 'catalog', ['x', 'y'])
    columns = ['x', 'y', 'depth'] if 'depth' in frame.columns else ['x', 'y']
    locations = frame[columns].to_numpy(dtype=float)
    if not np.all(np.isfinite(locations)):
        raise StorageError(f"{path} has missing or non-numeric coordinates")
    return locations


def save_catalog(locations: np.ndarray, path: str) -> None:
    locations = np.asarray(locations, dtype=float)
    columns = ['x', 'y', 'depth'][:locations.shape[1]]
    _write_frame(pd.DataFrame(locations, columns=columns), path, 'catalog')
