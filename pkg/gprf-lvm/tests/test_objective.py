import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gprf import objective
from gprf.blocks import EdgeSet, Partition, edges_complete, edges_empty, edges_grid_neighbors, grid_partition
from gprf.errors import DimensionError, NumericalError
from gprf.fullgp import build_full_gp, full_gradient, full_loglik
from gprf.gaussian import gaussian_kl
from gprf.kernels import Hyperparams, KernelFamily, KernelSpec, cov_matrix
from gprf.objective import (
    GprfModel, assemble_precision, bethe_check, gprf_gradient, gprf_value, map_ordered, resolve_workers
)
from gprf.verify import central_difference, relative_error


def single_block(model):
    return GprfModel(model.kernel, Partition.from_blocks([np.arange(model.n)]), edges_empty(1), model.X, model.Y)


class TestGprfModel:
    def test_shape_mismatch_rejected(self, se_kernel, rng):
        partition = Partition.from_blocks([np.arange(5)])
        with pytest.raises(DimensionError):
            GprfModel(se_kernel, partition, edges_empty(1), rng.random((5, 2)), rng.random((4, 1)))

    def test_edge_set_must_match_blocks(self, se_kernel, rng):
        partition = Partition.from_blocks([np.arange(3), np.arange(3, 5)])
        with pytest.raises(DimensionError):
            GprfModel(se_kernel, partition, edges_empty(3), rng.random((5, 2)), rng.random((5, 1)))


class TestGprfValue:
    def test_single_block_equals_full_gp(self, small_model):
        model = single_block(small_model)
        gp = build_full_gp(model.kernel, model.X, model.Y)
        assert gprf_value(model) == pytest.approx(full_loglik(gp), abs=1e-9)

    def test_two_blocks_complete_equals_full_gp(self, two_block_model):
        gp = build_full_gp(two_block_model.kernel, two_block_model.X, two_block_model.Y)
        assert gprf_value(two_block_model) == pytest.approx(full_loglik(gp), abs=1e-9)

    def test_empty_edges_equal_local_sum(self, rng, se_kernel):
        X = rng.uniform(0.0, 6.0, size=(50, 2))
        Y = rng.standard_normal((50, 2))
        partition = Partition.from_blocks(np.array_split(np.arange(50), 5))
        model = GprfModel(se_kernel, partition, edges_empty(5), X, Y)
        local = 0.0
        for block in partition.blocks:
            local += full_loglik(build_full_gp(se_kernel, X[block], Y[block]))
        assert gprf_value(model) == local

    def test_repeat_evaluations_identical(self, small_model):
        assert gprf_value(small_model) == gprf_value(small_model)

    def test_worker_count_does_not_change_result(self, small_model):
        assert gprf_value(small_model, workers=4) == pytest.approx(gprf_value(small_model, workers=1), rel=1e-14)

    def test_coincident_points_factor_with_jitter(self, rng):
        kernel = KernelSpec(KernelFamily.SE_PLAIN, Hyperparams(1.0, (1.0,), 1e-300), jitter=0.0)
        model = GprfModel(kernel, Partition.from_blocks([[0, 1], [2, 3]]), edges_empty(2),
                          np.array([[0.0], [0.0], [5.0], [5.0]]), rng.standard_normal((4, 1)))
        assert np.isfinite(gprf_value(model))

    def test_failing_term_is_named(self, rng, se_kernel):
        model = GprfModel(se_kernel, Partition.from_blocks([[0, 1], [2, 3]]), edges_empty(2),
                          np.array([[0.0], [1.0], [np.nan], [5.0]]), rng.standard_normal((4, 1)))
        with pytest.raises(NumericalError, match="node 1"):
            gprf_value(model)


class TestGprfGradient:
    def test_single_block_equals_full_gradient(self, small_model):
        model = single_block(small_model)
        report = gprf_gradient(model)
        expected = full_gradient(build_full_gp(model.kernel, model.X, model.Y))
        assert_allclose(report.grad_X, expected.grad_X, rtol=1e-10, atol=1e-12)
        assert_allclose(report.grad_theta, expected.grad_theta, rtol=1e-10)

    def test_matches_finite_differences_on_grid_edges(self, rng, se_kernel):
        X = rng.uniform(0.0, 6.0, size=(40, 2))
        Y = rng.standard_normal((40, 2))
        partition = grid_partition(X, 2, (0.0, 0.0, 6.0, 6.0))
        model = GprfModel(se_kernel, partition, edges_grid_neighbors(partition), X, Y)
        report = gprf_gradient(model)
        fd_x = central_difference(lambda Z: gprf_value(model.with_X(Z)), X)
        fd_theta = central_difference(
            lambda t: gprf_value(model.with_kernel(se_kernel.with_log_hyperparams(t))), se_kernel.log_hyperparams())
        assert relative_error(report.grad_X, fd_x) < 1e-4
        assert relative_error(report.grad_theta, fd_theta) < 1e-4
        assert report.value == pytest.approx(gprf_value(model))

    def test_mirror_symmetry(self, rng, se_kernel):
        left = rng.uniform(0.5, 3.0, size=(8, 2))
        right = left * np.array([-1.0, 1.0])
        Y_half = rng.standard_normal((8, 2))
        X = np.vstack([left, right])
        Y = np.vstack([Y_half, Y_half])
        model = GprfModel(se_kernel, Partition.from_blocks([np.arange(8), np.arange(8, 16)]),
                          edges_complete(2), X, Y)
        grad = gprf_gradient(model).grad_X
        assert_allclose(grad[8:, 0], -grad[:8, 0], atol=1e-10)
        assert_allclose(grad[8:, 1], grad[:8, 1], atol=1e-10)

    def test_term_count(self, small_model):
        report = gprf_gradient(small_model)
        assert report.term_count == {'nodes': 4, 'edges': len(small_model.edges)}


class TestAssemblePrecision:
    def test_single_block_is_inverse_covariance(self, small_model):
        model = single_block(small_model)
        report = assemble_precision(model)
        K = cov_matrix(model.kernel, model.X, add_noise=True)
        assert_allclose(report.precision, np.linalg.inv(K), rtol=1e-8, atol=1e-10)
        assert report.positive_definite

    def test_two_blocks_complete_is_joint_precision(self, two_block_model):
        report = assemble_precision(two_block_model)
        K = cov_matrix(two_block_model.kernel, two_block_model.X, add_noise=True)
        assert_allclose(report.precision, np.linalg.inv(K), rtol=1e-8, atol=1e-10)

    def test_local_precision_inverts_joint_covariance(self, two_block_model):
        local = assemble_precision(two_block_model).local_precisions[0]
        Q = np.block([[local.Q11, local.Q12], [local.Q12.T, local.Q22]])
        K = cov_matrix(two_block_model.kernel, two_block_model.X, add_noise=True)
        assert relative_error(Q, np.linalg.inv(K)) <= 1e-8

    def test_quadratic_form_identity(self, small_model, rng):
        report = assemble_precision(small_model)
        for _ in range(10):
            Y = rng.standard_normal((small_model.n, 2))
            value = gprf_value(GprfModel(small_model.kernel, small_model.partition, small_model.edges,
                                         small_model.X, Y))
            quadratic = sum(-0.5 * Y[:, d] @ report.precision @ Y[:, d] for d in range(2)) + 2 * report.constant
            assert quadratic == pytest.approx(value, abs=1e-8 * max(1.0, abs(value)))

    def test_missing_edges_leave_zero_blocks(self, rng, se_kernel):
        X = rng.uniform(0.0, 6.0, size=(15, 2))
        partition = Partition.from_blocks([np.arange(5), np.arange(5, 10), np.arange(10, 15)])
        model = GprfModel(se_kernel, partition, EdgeSet.from_pairs([(0, 1)], 3), X, rng.random((15, 1)))
        precision = assemble_precision(model).precision
        assert_array_equal(precision[np.ix_(partition.blocks[0], partition.blocks[2])], 0.0)
        assert_array_equal(precision[np.ix_(partition.blocks[1], partition.blocks[2])], 0.0)


class TestBetheCheck:
    def test_true_marginals_give_zero(self, small_model):
        report = bethe_check(small_model)
        assert abs(report.free_energy) <= 1e-9
        assert all(abs(kl) <= 1e-10 for _, kl in report.kl_terms)
        assert len(report.kl_terms) == small_model.partition.num_blocks + len(small_model.edges)

    def test_scaled_node_beliefs_positive(self, small_model):
        assert bethe_check(small_model, node_scale=1.1).free_energy > 0

    def test_single_block(self, small_model):
        report = bethe_check(single_block(small_model))
        assert [label for label, _ in report.kl_terms] == ["node 0"]
        assert report.kl_terms[0][1] == pytest.approx(0.0, abs=1e-12)

    def test_beliefs_factored_apart_from_terms(self, small_model, monkeypatch):
        pairs = []

        def recording_kl(belief, true):
            pairs.append((belief, true))
            return gaussian_kl(belief, true)

        monkeypatch.setattr(objective, 'gaussian_kl', recording_kl)
        report = bethe_check(small_model)
        assert len(pairs) == len(report.kl_terms)
        assert all(belief is not true for belief, true in pairs)
        assert all(np.isfinite(kl) for _, kl in report.kl_terms)

    def test_scaled_edge_beliefs_leave_nodes_at_zero(self, small_model):
        report = bethe_check(small_model, edge_scale=1.1)
        num_blocks = small_model.partition.num_blocks
        assert all(abs(kl) <= 1e-10 for _, kl in report.kl_terms[:num_blocks])
        assert all(kl > 0 for _, kl in report.kl_terms[num_blocks:])


class TestWorkers:
    def test_resolve_workers(self):
        assert resolve_workers(0) == (os.cpu_count() or 1)
        assert resolve_workers(3) == 3

    def test_map_ordered_keeps_order(self):
        assert map_ordered(lambda x: x * x, list(range(10)), 4) == [x * x for x in range(10)]
