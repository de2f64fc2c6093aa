"""
Desk-scale end-to-end runs on the n=2000 uniform task.

These take tens of minutes; run with `pytest -m slow`.
"""

import time

import numpy as np
import pytest

from gprf.blocks import (
    Partition, edges_empty, edges_grid_neighbors, grid_cells_for_block_size, grid_partition
)
from gprf.cli import main
from gprf.datagen import generate, uniform_spec
from gprf.mapfit import FitConfig, LocationPrior, fit, fit_hybrid, full_gp_likelihood, mean_location_error
from gprf.objective import GprfModel, gprf_gradient
from gprf.verify import check_tree_exactness

pytestmark = pytest.mark.slow

N = 2000
BLOCK_SIZE = 100
MAX_ITERS = 150


def _grid_model(dataset, edges_rule='grid8'):
    X = dataset.X_obs
    cells = grid_cells_for_block_size(X.shape[0], BLOCK_SIZE)
    partition = grid_partition(X, cells, (X[:, 0].min(), X[:, 1].min(), X[:, 0].max(), X[:, 1].max()))
    edges = edges_grid_neighbors(partition) if edges_rule == 'grid8' else edges_empty(partition.num_blocks)
    return GprfModel(dataset.spec.kernel, partition, edges, X, dataset.Y)


def _run(dataset, method):
    prior = LocationPrior(dataset.X_obs, dataset.spec.sigma_obs)
    config = FitConfig(max_iters=MAX_ITERS, record_wall_time=False)
    if method == 'full_gp':
        n = dataset.n
        model = GprfModel(dataset.spec.kernel, Partition.from_blocks([np.arange(n)]), edges_empty(1),
                          dataset.X_obs, dataset.Y)
        result = fit(model, prior, config, likelihood=full_gp_likelihood)
    elif method == 'local':
        result = fit(_grid_model(dataset, 'empty'), prior, config)
    elif method == 'gprf':
        result = fit(_grid_model(dataset), prior, config)
    else:
        result = fit_hybrid(_grid_model(dataset), prior, config)
    return mean_location_error(result.X_hat, dataset.X_true)


@pytest.fixture(scope='module')
def uniform_task():
    return generate(uniform_spec(N, D=50, seed=0))


@pytest.fixture(scope='module')
def errors(uniform_task):
    return {method: _run(uniform_task, method) for method in ('full_gp', 'local', 'gprf', 'hybrid')}


def test_tree_exactness_is_fast():
    start = time.perf_counter()
    assert check_tree_exactness().passed
    assert time.perf_counter() - start < 5.0


def test_initial_error_matches_rayleigh_mean(uniform_task):
    initial = mean_location_error(uniform_task.X_obs, uniform_task.X_true)
    assert initial == pytest.approx(2.0 * np.sqrt(np.pi / 2.0), abs=0.15)


def test_full_gp_improves_on_observations(uniform_task, errors):
    assert errors['full_gp'] < mean_location_error(uniform_task.X_obs, uniform_task.X_true)


def test_gprf_close_to_full_gp(errors):
    assert errors['gprf'] <= 1.5 * errors['full_gp']


def test_hybrid_no_worse_than_gprf(errors):
    assert errors['hybrid'] <= 1.05 * errors['gprf']


def test_gprf_beats_local_over_seeds():
    margins = []
    for seed in (0, 1, 2):
        dataset = generate(uniform_spec(N, D=50, seed=seed))
        margins.append(_run(dataset, 'local') - _run(dataset, 'gprf'))
    assert np.median(margins) > 0


def _gradient_time(n, rng):
    # Two rows of cells holding BLOCK_SIZE points each on average; blocks and edges grow with n at fixed size.
    cell = np.sqrt(BLOCK_SIZE)
    cells = n // (2 * BLOCK_SIZE)
    X = np.column_stack([rng.uniform(0.0, cells * cell, n), rng.uniform(0.0, 2 * cell, n)])
    Y = rng.standard_normal((n, 50))
    partition = grid_partition(X, cells, (0.0, 0.0, cells * cell, cells * cell))
    assert partition.num_blocks == 2 * cells
    model = GprfModel(uniform_spec(n).kernel, partition, edges_grid_neighbors(partition), X, Y)
    timings = []
    for _ in range(3):
        start = time.perf_counter()
        gprf_gradient(model, workers=1)
        timings.append(time.perf_counter() - start)
    return min(timings)


def test_gradient_time_linear_in_n():
    rng = np.random.default_rng(0)
    timings = [_gradient_time(n, rng) for n in (1000, 2000, 4000)]
    assert timings[1] <= 2.5 * timings[0]
    assert timings[2] <= 2.5 * timings[1]


def test_fit_trajectory_bit_identical(write_config, tmp_path):
    config = write_config(n=500, outputs=20, seed=5, max_iters=30, workers=1, record_wall_time='false',
                          output_dir='first', log_level='WARNING')
    assert main(['fit', '--config', config]) == 0
    assert main(['fit', '--config', config, '--set', 'output_dir=second']) == 0
    assert (tmp_path / 'first' / 'trajectory.csv').read_bytes() == (tmp_path / 'second' / 'trajectory.csv').read_bytes()
