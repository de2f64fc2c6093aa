"""Shared fixtures for the GPRF test suite."""

import numpy as np
import pytest

from gprf.blocks import Partition, edges_complete
from gprf.kernels import Hyperparams, KernelFamily, KernelSpec
from gprf.objective import GprfModel
from gprf.verify import random_model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def se_kernel():
    return KernelSpec(KernelFamily.SE_PLAIN, Hyperparams(1.3, (1.7,), 0.1))


@pytest.fixture
def small_model(rng):
    """40 points, 4 blocks, random edges."""
    return random_model(rng, 40, 4, D=2, edge_probability=0.5)


@pytest.fixture
def two_block_model(rng, se_kernel):
    X = rng.uniform(0.0, 5.0, size=(24, 2))
    Y = rng.standard_normal((24, 3))
    partition = Partition.from_blocks([np.arange(12), np.arange(12, 24)])
    return GprfModel(se_kernel, partition, edges_complete(2), X, Y)


@pytest.fixture
def write_config(tmp_path):
    """Factory writing a key=value experiment config into tmp_path."""
    def write(name='experiment.cfg', **values):
        path = tmp_path / name
        lines = [f"{key}={value}" for key, value in values.items()]
        path.write_text("\n".join(lines) + "\n", encoding='utf-8')
        return str(path)
    return write
