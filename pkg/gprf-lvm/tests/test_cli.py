import os

import numpy as np
import pandas as pd
import pytest

from gprf.cli import build_edges, build_partition, main
from gprf.settings import ExperimentSettings, read_key_value_file
from gprf.storage import load_dataset, load_locations, load_trajectory

SMALL = dict(n=60, outputs=5, seed=3, block_size=15, max_iters=5, workers=1, record_wall_time='false',
             log_level='WARNING')


@pytest.fixture
def small_config(write_config):
    return write_config(dataset='data.csv', output_dir='out', **SMALL)


@pytest.fixture
def generated(small_config):
    assert main(['generate', '--config', small_config]) == 0
    return small_config


def _summary(config_path, output_dir='out'):
    return read_key_value_file(os.path.join(os.path.dirname(config_path), output_dir, 'summary.txt'))


class TestGenerate:
    def test_writes_dataset_and_manifest(self, generated, tmp_path):
        frame = pd.read_csv(tmp_path / 'data.csv')
        assert frame.shape == (60, 2 + 2 + 5)
        manifest = read_key_value_file(str(tmp_path / 'out' / 'manifest.txt'))
        assert manifest['command'] == 'generate'
        assert manifest['n'] == '60'

    def test_same_seed_same_bytes(self, generated, tmp_path):
        assert main(['generate', '--config', generated, '--set', 'dataset=again.csv']) == 0
        assert (tmp_path / 'data.csv').read_bytes() == (tmp_path / 'again.csv').read_bytes()

    def test_size_guard_exit_code(self, small_config):
        assert main(['generate', '--config', small_config, '--set', 'n=30000']) == 3


class TestFit:
    def test_local_method(self, generated, tmp_path):
        assert main(['fit', '--config', generated, '--set', 'method=local']) == 0
        summary = _summary(generated)
        assert summary['method'] == 'local'
        assert int(summary['num_edges']) == 0
        for name in ('locations.csv', 'trajectory.csv', 'partition.csv', 'edges.csv', 'manifest.txt'):
            assert (tmp_path / 'out' / name).exists()
        assert load_locations(str(tmp_path / 'out' / 'locations.csv')).shape == (60, 2)

    def test_gprf_grid_edges(self, generated):
        assert main(['fit', '--config', generated]) == 0
        summary = _summary(generated)
        settings = ExperimentSettings(generated)
        data = load_dataset(settings.dataset)
        partition = build_partition(settings, data.X_obs)
        edges = build_edges(settings, partition, data.X_obs)
        assert int(summary['M']) == partition.num_blocks
        assert int(summary['num_edges']) == len(edges.edges)
        assert summary['stop_reason'] in ('grad_tol', 'max_iters', 'wall_clock_budget')
        assert 'log_hyperparams' not in summary

    def test_full_gp_and_hybrid(self, generated):
        for method in ('full_gp', 'hybrid'):
            assert main(['fit', '--config', generated, '--set', f'method={method}']) == 0
            summary = _summary(generated)
            assert summary['method'] == method
            assert float(summary['final_mean_error']) >= 0.0

    def test_hyperparameters_reported(self, generated):
        assert main(['fit', '--config', generated, '--set', 'optimize_theta=true', '--set', 'max_iters=2']) == 0
        assert len(_summary(generated)['log_hyperparams'].split(',')) == 3

    def test_deterministic_trajectory(self, generated, tmp_path):
        assert main(['fit', '--config', generated, '--set', 'output_dir=first']) == 0
        assert main(['fit', '--config', generated, '--set', 'output_dir=second']) == 0
        first = (tmp_path / 'first' / 'trajectory.csv').read_bytes()
        assert first == (tmp_path / 'second' / 'trajectory.csv').read_bytes()
        frame = load_trajectory(str(tmp_path / 'first' / 'trajectory.csv'))
        assert np.all(frame['wall_time_s'] == 0.0)

    def test_generates_in_memory_without_dataset(self, write_config, tmp_path):
        config = write_config(output_dir='out', method='local', **SMALL)
        assert main(['fit', '--config', config]) == 0
        assert not (tmp_path / 'out' / 'dataset.csv').exists()
        assert int(_summary(config)['iterations']) <= 5

    def test_missing_dataset(self, small_config):
        assert main(['fit', '--config', small_config]) == 1


class TestEval:
    def test_prints_error(self, generated, tmp_path, capsys):
        assert main(['fit', '--config', generated, '--set', 'method=local']) == 0
        capsys.readouterr()
        locations = str(tmp_path / 'out' / 'locations.csv')
        assert main(['eval', '--config', generated, '--locations', locations]) == 0
        printed = capsys.readouterr().out
        assert 'mean_location_error' in printed
        value = float(printed.split('mean_location_error:')[1].split()[0])
        assert value == pytest.approx(float(_summary(generated)['final_mean_error']), abs=1e-6)


class TestValidation:
    def test_unknown_key(self, write_config):
        assert main(['fit', '--config', write_config(colour='blue')]) == 1

    def test_bad_override(self, small_config):
        assert main(['generate', '--config', small_config, '--set', 'n']) == 1

    def test_bad_value(self, small_config):
        assert main(['generate', '--config', small_config, '--set', 'n=abc']) == 1

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])


@pytest.mark.slow
class TestVerifyCommand:
    def test_passes(self, tmp_path, capsys):
        assert main(['verify', '--set', f'output_dir={tmp_path}']) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 13
        assert all(line.startswith('PASS') for line in lines)

    def test_injected_fault_fails(self, tmp_path, capsys):
        assert main(['verify', '--inject-fault', '--set', f'output_dir={tmp_path}']) == 2
        printed = capsys.readouterr().out
        assert 'FAIL  precision_quadratic_form' in printed
