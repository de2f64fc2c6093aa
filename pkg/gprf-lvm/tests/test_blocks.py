import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gprf.blocks import (
    EdgeSet, Partition, PartitionKind, edges_complete, edges_distance_threshold, edges_empty,
    edges_grid_neighbors, grid_cells_for_block_size, grid_partition, pa_tree_partition, partition_stats
)
from gprf.errors import DimensionError, PartitionKindError

UNIT = (0.0, 0.0, 1.0, 1.0)


def assert_valid_partition(partition, n):
    covered = np.sort(np.concatenate(partition.blocks))
    assert_array_equal(covered, np.arange(n))
    assert all(block.size > 0 for block in partition.blocks)
    for b, block in enumerate(partition.blocks):
        assert np.all(partition.assignment[block] == b)


class TestPartition:
    def test_from_assignment_compacts_labels(self):
        partition = Partition.from_assignment([7, 3, 7, 9])
        assert_array_equal(partition.assignment, [1, 0, 1, 2])
        assert [b.tolist() for b in partition.blocks] == [[1], [0, 2], [3]]

    def test_overlapping_blocks_rejected(self):
        with pytest.raises(DimensionError):
            Partition.from_blocks([[0, 1], [1, 2]])

    def test_empty_block_rejected(self):
        with pytest.raises(DimensionError):
            Partition.from_blocks([[0, 1], []])


class TestGridPartition:
    def test_one_point_per_quadrant(self):
        X = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
        partition = grid_partition(X, 2, UNIT)
        assert partition.num_blocks == 4
        assert_array_equal(partition.sizes, [1, 1, 1, 1])
        assert partition.cells == ((0, 0), (0, 1), (1, 0), (1, 1))

    def test_empty_cells_removed(self, rng):
        X = rng.uniform(0.0, 0.45, size=(20, 2))
        partition = grid_partition(X, 2, UNIT)
        assert partition.num_blocks == 1
        assert partition.kind is PartitionKind.GRID

    def test_max_boundary_goes_to_last_cell(self):
        partition = grid_partition(np.array([[1.0, 1.0], [0.1, 0.1]]), 2, UNIT)
        assert partition.cells == ((0, 0), (1, 1))

    def test_outside_points_clamped(self, caplog):
        X = np.array([[-0.5, 0.2], [1.5, 0.9]])
        partition = grid_partition(X, 2, UNIT)
        assert partition.cells == ((0, 0), (1, 1))
        assert "clamped" in caplog.text

    def test_uniform_cells_near_target_size(self):
        rng = np.random.default_rng(7)
        n = 10000
        X = rng.uniform(0.0, np.sqrt(n), size=(n, 2))
        cells = grid_cells_for_block_size(n, 100)
        partition = grid_partition(X, cells, (0.0, 0.0, np.sqrt(n), np.sqrt(n)))
        assert partition.num_blocks == 100
        assert np.all(np.abs(partition.sizes - 100) <= 40)
        assert_valid_partition(partition, n)

    def test_needs_planar_points(self):
        with pytest.raises(DimensionError):
            grid_partition(np.zeros((3, 3)), 2, UNIT)

    def test_degenerate_axis_uses_first_cell(self):
        X = np.array([[3.0, 0.1], [3.0, 0.4], [3.0, 0.6], [3.0, 0.9]])
        with np.errstate(all='raise'):
            partition = grid_partition(X, 2, (3.0, 0.0, 3.0, 1.0))
        assert partition.cells == ((0, 0), (1, 0))
        assert_array_equal(partition.sizes, [2, 2])

    def test_single_point_bounds(self):
        with np.errstate(all='raise'):
            partition = grid_partition(np.array([[2.0, 5.0]]), 3, (2.0, 5.0, 2.0, 5.0))
        assert partition.cells == ((0, 0),)

    def test_inverted_bounds_rejected(self):
        with pytest.raises(DimensionError):
            grid_partition(np.zeros((2, 2)), 2, (1.0, 0.0, 0.0, 1.0))


class TestPaTreePartition:
    def test_small_set_is_one_block(self, rng):
        partition = pa_tree_partition(rng.random((5, 2)), 10)
        assert partition.num_blocks == 1

    def test_collinear_points_split_contiguously(self):
        X = np.column_stack([np.arange(8.0), np.zeros(8)])
        partition = pa_tree_partition(X, 2)
        assert [b.tolist() for b in partition.blocks] == [[0, 1], [2, 3], [4, 5], [6, 7]]

    def test_gaussian_cloud_block_sizes(self, rng):
        X = rng.standard_normal((1000, 2)) * np.array([3.0, 1.0])
        partition = pa_tree_partition(X, 400)
        assert np.all(partition.sizes <= 400)
        assert np.all(partition.sizes >= 125)
        assert_valid_partition(partition, 1000)

    def test_deterministic_with_ties(self):
        X = np.repeat(np.array([[0.0, 0.0], [1.0, 1.0]]), 6, axis=0)
        first = pa_tree_partition(X, 3)
        second = pa_tree_partition(X.copy(), 3)
        assert_array_equal(first.assignment, second.assignment)
        assert np.all(first.sizes <= 3)


class TestEdges:
    def test_complete_and_empty(self):
        assert edges_complete(3).edges == ((0, 1), (0, 2), (1, 2))
        assert edges_empty(3).edges == ()
        assert len(edges_complete(10)) == 45

    def test_degree(self):
        edges = EdgeSet.from_pairs([(2, 0), (0, 1), (1, 0)], 4)
        assert edges.edges == ((0, 1), (0, 2))
        assert_array_equal(edges.degree, [2, 1, 1, 0])

    def test_self_edge_rejected(self):
        with pytest.raises(DimensionError):
            EdgeSet.from_pairs([(1, 1)], 3)

    def test_grid_neighbors_three_by_three(self):
        centers = np.array([[c + 0.5, r + 0.5] for r in range(3) for c in range(3)])
        partition = grid_partition(centers, 3, (0.0, 0.0, 3.0, 3.0))
        edges = edges_grid_neighbors(partition)
        assert len(edges) == 20
        assert edges.degree[4] == 8
        assert edges.degree[0] == 3
        assert edges.degree[1] == 5
        assert set(edges.edges) <= set(edges_complete(9).edges)

    def test_grid_neighbors_small_grids(self):
        single = grid_partition(np.array([[0.5, 0.5]]), 1, UNIT)
        assert len(edges_grid_neighbors(single)) == 0
        X = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
        assert len(edges_grid_neighbors(grid_partition(X, 2, UNIT))) == 6

    def test_grid_neighbors_need_grid(self, rng):
        with pytest.raises(PartitionKindError):
            edges_grid_neighbors(pa_tree_partition(rng.random((10, 2)), 3))

    def test_distance_threshold(self):
        X0 = np.array([[0.0], [1.0], [1.5], [2.5], [4.5], [5.5]])
        partition = Partition.from_blocks([[0, 1], [2, 3], [4, 5]])
        assert edges_distance_threshold(partition, X0, 1.0).edges == ((0, 1),)
        assert edges_distance_threshold(partition, X0, 0.4).edges == ()
        assert edges_distance_threshold(partition, X0, np.inf).edges == edges_complete(3).edges

    def test_shared_boundary_point(self):
        X0 = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        partition = Partition.from_blocks([[0, 1], [2, 3]])
        assert edges_distance_threshold(partition, X0, 0.0).edges == ((0, 1),)


class TestPartitionStats:
    def test_counts(self):
        partition = Partition.from_blocks([[0, 1, 2], [3], [4, 5]])
        stats = partition_stats(partition, edges_complete(3))
        assert stats['num_blocks'] == 3
        assert stats['min_block_size'] == 1
        assert stats['max_block_size'] == 3
        assert stats['mean_block_size'] == pytest.approx(2.0)
        assert stats['num_edges'] == 3
        assert stats['max_degree'] == 2
