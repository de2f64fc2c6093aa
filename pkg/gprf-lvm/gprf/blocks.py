"""
Partitions of the points into blocks, and edge sets over blocks.

This module implements:
- Grid partitions with empty cells removed (uniform spatial data)
- Principal-axis tree partitions (clustered event data)
- Complete, empty, 8-neighbor grid and distance-threshold edge sets
- Summary statistics used in fit reports

Partitions are computed once from observed or initial locations and are
never recomputed as latent locations move.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, PartitionKindError

logger = logging.getLogger(__name__)


class PartitionKind(Enum):
    GRID = "grid"
    PA_TREE = "pa_tree"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Assignment of n points to M nonempty, disjoint blocks.

    Grid partitions also record the (row, col) cell of every block so that
    neighboring cells can be connected.
    """

    assignment: np.ndarray
    blocks: Tuple[np.ndarray, ...]
    kind: PartitionKind = PartitionKind.EXPLICIT
    cells_per_side: Optional[int] = None
    cells: Optional[Tuple[Tuple[int, int], ...]] = None
    max_block_size: Optional[int] = None

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], kind: PartitionKind = PartitionKind.EXPLICIT,
                        **meta: Any) -> "Partition":
        """Build a partition from per-point labels; labels are compacted to 0..M-1 in sorted order."""
        labels = np.asarray(assignment)
        if labels.ndim != 1 or labels.size == 0:
            raise DimensionError("Assignment must be a nonempty 1-D array")
        _, compact = np.unique(labels, return_inverse=True)
        compact = compact.astype(np.int64).reshape(-1)
        return cls.from_blocks(_blocks_from_assignment(compact), kind=kind, **meta)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Sequence[int]], kind: PartitionKind = PartitionKind.EXPLICIT,
                    **meta: Any) -> "Partition":
        """Build a partition from index lists; each list becomes one block in the given order."""
        blocks = tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in blocks)
        if not blocks or any(b.size == 0 for b in blocks):
            raise DimensionError("Partitions need at least one block and no empty blocks")
        n = sum(b.size for b in blocks)
        assignment = np.full(n, -1, dtype=np.int64)
        for block_id, block in enumerate(blocks):
            if block.min() < 0 or block.max() >= n or np.any(assignment[block] != -1):
                raise DimensionError("Blocks must be disjoint and cover 0..n-1")
            assignment[block] = block_id
        return cls(assignment=assignment, blocks=blocks, kind=kind, **meta)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks])


@dataclass(frozen=True)
class EdgeSet:
    """Undirected pairs (i, j), i < j, of block ids, kept in lexicographic order."""

    edges: Tuple[Tuple[int, int], ...]
    num_blocks: int

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, int]], num_blocks: int) -> "EdgeSet":
        normalized = set()
        for i, j in pairs:
            i, j = int(i), int(j)
            if i == j:
                raise DimensionError(f"Self-edge on block {i}")
            if not (0 <= i < num_blocks and 0 <= j < num_blocks):
                raise DimensionError(f"Edge ({i}, {j}) outside {num_blocks} blocks")
            normalized.add((min(i, j), max(i, j)))
        return cls(edges=tuple(sorted(normalized)), num_blocks=num_blocks)

    @property
    def degree(self) -> np.ndarray:
        degree = np.zeros(self.num_blocks, dtype=np.int64)
        for i, j in self.edges:
            degree[i] += 1
            degree[j] += 1
        return degree

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, pair: Tuple[int, int]) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in set(self.edges)


def _blocks_from_assignment(assignment: np.ndarray) -> Tuple[np.ndarray, ...]:
    order = np.argsort(assignment, kind="stable")
    bounds = np.flatnonzero(np.diff(assignment[order])) + 1
    return tuple(np.split(order, bounds))


def grid_cells_for_block_size(n: int, block_size: int) -> int:
    """Cells per side so that a square grid holds about block_size points per cell."""
    return max(1, int(round(np.sqrt(n / max(block_size, 1)))))


def grid_partition(X: np.ndarray, cells_per_side: int,
                   bounds: Tuple[float, float, float, float]) -> Partition:
    """
    Assign 2-D points to the cells of a square grid.

    Args:
        X: Points, shape (n, 2)
        cells_per_side: Number of cells along each axis
        bounds: (xmin, ymin, xmax, ymax) of the gridded rectangle

    Returns:
        Grid partition; empty cells are dropped and block ids follow
        row-major cell order
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2:
        raise DimensionError(f"Grid partitions need 2-D points, got shape {X.shape}")
    if cells_per_side < 1:
        raise DimensionError(f"cells_per_side must be positive, got {cells_per_side}")
    xmin, ymin, xmax, ymax = bounds
    lower = np.array([xmin, ymin])
    width = np.array([xmax - xmin, ymax - ymin]) / cells_per_side
    if np.any(width < 0):
        raise DimensionError(f"Grid bounds must satisfy min <= max, got {bounds}")

    # A degenerate axis puts every point in its first cell.
    flat = width == 0
    raw = np.floor((X - lower) / np.where(flat, 1.0, width)).astype(np.int64)
    raw[:, flat] = 0
    outside = np.any((X < lower) | (X > np.array([xmax, ymax])), axis=1)
    if np.any(outside):
        logger.warning(f"{int(outside.sum())} points outside grid bounds were clamped to the nearest cell")
    cols, rows = np.clip(raw, 0, cells_per_side - 1).T
    cell_ids = rows * cells_per_side + cols

    occupied, assignment = np.unique(cell_ids, return_inverse=True)
    cells = tuple((int(c // cells_per_side), int(c % cells_per_side)) for c in occupied)
    partition = Partition(
        assignment=assignment.astype(np.int64).reshape(-1),
        blocks=_blocks_from_assignment(assignment.reshape(-1)),
        kind=PartitionKind.GRID,
        cells_per_side=cells_per_side,
        cells=cells,
    )
    logger.info(f"Grid partition: {partition.num_blocks} nonempty cells of {cells_per_side ** 2}")
    return partition


def _principal_axis(points: np.ndarray) -> np.ndarray:
    centered = points - points.mean(axis=0)
    _, vectors = np.linalg.eigh(centered.T @ centered)
    axis = vectors[:, -1]
    # eigenvectors are defined up to sign
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis


def pa_tree_partition(X: np.ndarray, max_block_size: int) -> Partition:
    """
    Recursively split the points at the median of their projection onto the
    principal axis until every leaf holds at most max_block_size points.

    Ties in the projection are broken by original point index; leaves are
    numbered left to right.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 1:
        raise DimensionError("Cannot partition an empty point set")
    if max_block_size < 1:
        raise DimensionError(f"max_block_size must be positive, got {max_block_size}")

    leaves = []
    stack = [np.arange(X.shape[0])]
    while stack:
        indices = stack.pop()
        if indices.size <= max_block_size:
            leaves.append(indices)
            continue
        projection = X[indices] @ _principal_axis(X[indices])
        order = indices[np.lexsort((indices, projection))]
        half = indices.size // 2
        # right pushed first so the left half is processed first
        stack.append(order[half:])
        stack.append(order[:half])

    partition = Partition.from_blocks(leaves, kind=PartitionKind.PA_TREE, max_block_size=max_block_size)
    logger.info(f"Principal-axis tree: {partition.num_blocks} blocks, sizes {partition.sizes.min()}-{partition.sizes.max()}")
    return partition


def edges_complete(num_blocks: int) -> EdgeSet:
    """All M(M-1)/2 pairs."""
    if num_blocks < 1:
        raise DimensionError(f"Need at least one block, got {num_blocks}")
    return EdgeSet(edges=tuple(combinations(range(num_blocks), 2)), num_blocks=num_blocks)


def edges_empty(num_blocks: int) -> EdgeSet:
    """No edges: independent local GPs."""
    if num_blocks < 1:
        raise DimensionError(f"Need at least one block, got {num_blocks}")
    return EdgeSet(edges=(), num_blocks=num_blocks)


def edges_grid_neighbors(partition: Partition) -> EdgeSet:
    """Connect each nonempty grid cell to its (up to) eight nonempty neighbors."""
    if partition.kind is not PartitionKind.GRID or partition.cells is None:
        raise PartitionKindError(f"8-neighbor edges need a grid partition, got {partition.kind.value}")
    block_of_cell = {cell: b for b, cell in enumerate(partition.cells)}
    pairs = []
    for b, (row, col) in enumerate(partition.cells):
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                neighbor = block_of_cell.get((row + dr, col + dc))
                if neighbor is not None and neighbor > b:
                    pairs.append((b, neighbor))
    return EdgeSet.from_pairs(pairs, partition.num_blocks)


def edges_distance_threshold(partition: Partition, X0: np.ndarray, tau: float) -> EdgeSet:
    """
    Connect blocks i and j iff some pair of their points lies within tau of
    each other at the locations X0.
    """
    X0 = np.asarray(X0, dtype=float)
    if X0.ndim == 1:
        X0 = X0[:, None]
    if X0.shape[0] != partition.n:
        raise DimensionError(f"{X0.shape[0]} locations for a partition of {partition.n} points")
    if np.isinf(tau):
        return edges_complete(partition.num_blocks)

    tree = cKDTree(X0)
    pairs = set()
    for b, block in enumerate(partition.blocks):
        hits = tree.query_ball_point(X0[block], r=tau)
        near = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits])
        for other in np.unique(partition.assignment[near]):
            if other > b:
                pairs.add((b, int(other)))
    return EdgeSet.from_pairs(pairs, partition.num_blocks)


def partition_stats(partition: Partition, edges: Optional[EdgeSet] = None) -> Dict[str, Any]:
    """Block and edge counts for reports."""
    sizes = partition.sizes
    stats = {
        'num_blocks': partition.num_blocks,
        'min_block_size': int(sizes.min()),
        'max_block_size': int(sizes.max()),
        'mean_block_size': float(sizes.mean()),
    }
    if edges is not None:
        degree = edges.degree
        stats['num_edges'] = len(edges)
        stats['max_degree'] = int(degree.max()) if degree.size else 0
    return stats
