#!/usr/bin/env python3
"""
Command-line harness.

Subcommands:
  generate  sample a synthetic dataset (CSV + sidecar)
  fit       fit latent locations with full_gp, local, gprf or hybrid
  verify    run the numerical identity checks
  eval      recompute location errors from a saved locations CSV

Exit codes: 0 success, 1 validation error, 2 numerical failure or failed
check, 3 size guard.
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .blocks import (
    EdgeSet, Partition, PartitionKind, edges_complete, edges_distance_threshold, edges_empty,
    edges_grid_neighbors, grid_cells_for_block_size, grid_partition, pa_tree_partition, partition_stats
)
from .datagen import EVENTS, gen_events_at, generate
from .errors import ConfigError, GprfError
from .fullgp import check_dense_size
from .mapfit import LocationPrior, fit, fit_hybrid, full_gp_likelihood, mean_location_error
from .objective import GprfModel, gprf_gradient
from .settings import ExperimentSettings, configure_logging, write_key_value_file
from .storage import (
    StoredDataset, load_catalog, load_dataset, load_locations, save_dataset, save_edges, save_locations,
    save_partition, save_trajectory
)
from .verify import run_suite

logger = logging.getLogger(__name__)

PROCESS_START = time.perf_counter()

DATASET_FILE = 'dataset.csv'
MANIFEST_FILE = 'manifest.txt'
SUMMARY_FILE = 'summary.txt'


def _write_manifest(settings: ExperimentSettings, command: str) -> None:
    settings.write_manifest(os.path.join(settings.output_dir, MANIFEST_FILE),
                            {'gprf_version': __version__, 'command': command})


def _dataset_path(settings: ExperimentSettings) -> str:
    return settings.dataset or os.path.join(settings.output_dir, DATASET_FILE)


def cmd_generate(settings: ExperimentSettings) -> str:
    """Generate the configured dataset and write it; returns the CSV path."""
    spec = settings.synthetic_spec()
    if settings.catalog:
        if spec.generator != EVENTS:
            raise ConfigError("catalog is only used by the events generator")
        locations = load_catalog(settings.catalog)
        if locations.shape[1] != spec.d:
            raise ConfigError(f"catalog has {locations.shape[1]} coordinates but d={spec.d}")
        spec = replace(spec, n=locations.shape[0])
        dataset = gen_events_at(locations, spec)
    else:
        dataset = generate(spec)
    path = _dataset_path(settings)
    save_dataset(dataset, path)
    _write_manifest(settings, 'generate')
    return path


def _load_or_generate(settings: ExperimentSettings) -> StoredDataset:
    if settings.dataset:
        if not os.path.exists(settings.dataset):
            raise ConfigError(f"Dataset not found: {settings.dataset}")
        return load_dataset(settings.dataset)
    logger.info("No dataset configured; generating one in memory")
    dataset = generate(settings.synthetic_spec())
    return StoredDataset(dataset.X_true, dataset.X_obs, dataset.Y, {k: str(v) for k, v in dataset.metadata().items()})


def build_partition(settings: ExperimentSettings, X_obs: np.ndarray) -> Partition:
    if settings.partition == 'grid':
        cells = settings.cells_per_side or grid_cells_for_block_size(X_obs.shape[0], settings.block_size)
        lower = X_obs.min(axis=0)
        upper = X_obs.max(axis=0)
        return grid_partition(X_obs, cells, (lower[0], lower[1], upper[0], upper[1]))
    return pa_tree_partition(X_obs, settings.block_size)


def build_edges(settings: ExperimentSettings, partition: Partition, X_obs: np.ndarray) -> EdgeSet:
    rule, tau = settings.edge_rule
    if rule == 'empty':
        return edges_empty(partition.num_blocks)
    if rule == 'complete':
        return edges_complete(partition.num_blocks)
    if rule == 'grid8':
        return edges_grid_neighbors(partition)
    return edges_distance_threshold(partition, X_obs, tau)


def cmd_fit(settings: ExperimentSettings) -> Dict[str, Any]:
    """Run the configured method and write locations, trajectory and summary."""
    data = _load_or_generate(settings)
    method = settings.method
    n, d = data.X_obs.shape
    kernel = settings.kernel_spec(d)

    if method == 'full_gp':
        check_dense_size(n, "full GP fit")
        partition = Partition.from_blocks([np.arange(n)], kind=PartitionKind.EXPLICIT)
        edges = edges_empty(1)
    else:
        partition = build_partition(settings, data.X_obs)
        edges = edges_empty(partition.num_blocks) if method == 'local' else build_edges(settings, partition, data.X_obs)

    if settings.sigma_obs is not None:
        sigma_obs = settings.sigma_obs
    elif 'sigma_obs' in data.metadata:
        sigma_obs = float(data.metadata['sigma_obs'])
    else:
        sigma_obs = settings.synthetic_spec().sigma_obs
    prior = LocationPrior(data.X_obs, sigma_obs)
    model = GprfModel(kernel, partition, edges, data.X_obs, data.Y)
    config = settings.fit_config(d)
    stats = partition_stats(partition, edges)
    logger.info(f"Fitting {method}: n={n}, M={stats['num_blocks']}, |E|={stats['num_edges']}")

    if method == 'hybrid':
        result = fit_hybrid(model, prior, config, X_true=data.X_true, clock_start=PROCESS_START)
    else:
        likelihood = full_gp_likelihood if method == 'full_gp' else gprf_gradient
        result = fit(model, prior, config, X_true=data.X_true, likelihood=likelihood, clock_start=PROCESS_START)

    out = settings.output_dir
    save_locations(result.X_hat, os.path.join(out, 'locations.csv'))
    save_trajectory(result.trajectory, os.path.join(out, 'trajectory.csv'))
    save_partition(partition, os.path.join(out, 'partition.csv'))
    save_edges(edges, os.path.join(out, 'edges.csv'))

    summary = {
        'method': method,
        'final_objective': result.objective,
        'initial_mean_error': mean_location_error(data.X_obs, data.X_true),
        'final_mean_error': mean_location_error(result.X_hat, data.X_true),
        'wall_time_s': time.perf_counter() - PROCESS_START,
        'iterations': result.iterations,
        'stop_reason': result.stop_reason,
        'M': stats['num_blocks'],
        'm': stats['max_block_size'],
        'mean_block_size': stats['mean_block_size'],
        'num_edges': stats['num_edges'],
        'max_degree': stats['max_degree'],
    }
    if config.optimize_theta:
        summary['log_hyperparams'] = ",".join(repr(float(v)) for v in result.kernel.log_hyperparams())
    write_key_value_file(os.path.join(out, SUMMARY_FILE), summary)
    _write_manifest(settings, 'fit')
    logger.info(f"Mean location error {summary['initial_mean_error']:.4f} -> {summary['final_mean_error']:.4f}")
    return summary


def cmd_verify(settings: ExperimentSettings, inject_fault: bool = False, seed: int = 0) -> bool:
    """Print every check with its residual; returns True if all pass."""
    results = run_suite(inject_fault=inject_fault, seed=seed)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<40} residual {r.residual:.3e}  tolerance {r.tolerance:.1e}")
    _write_manifest(settings, 'verify')
    return all(r.passed for r in results)


def cmd_eval(settings: ExperimentSettings, locations_path: str) -> Dict[str, float]:
    """Mean location error of saved locations against the dataset truth."""
    data = _load_or_generate(settings)
    X_hat = load_locations(locations_path)
    metrics = {
        'initial_mean_error': mean_location_error(data.X_obs, data.X_true),
        'mean_location_error': mean_location_error(X_hat, data.X_true),
    }
    for key, value in metrics.items():
        print(f"{key}: {value:.6f}")
    return metrics


def _overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    values = {}
    for pair in pairs or []:
        if '=' not in pair:
            raise ConfigError(f"--set expects key=value, got '{pair}'")
        key, value = pair.split('=', 1)
        values[key.strip()] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='gprf',
        description="GPRF latent-location fitting, baselines and verification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  gprf generate --config uniform.cfg
  gprf fit --config uniform.cfg --set method=hybrid --set workers=1
  gprf verify
  gprf eval --config uniform.cfg --locations results/locations.csv
        """
    )
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add_config(sub, required: bool):
        sub.add_argument('--config', required=required, help='Experiment config (key=value file)')
        sub.add_argument('--set', action='append', metavar='KEY=VALUE', help='Override a config key')

    add_config(subparsers.add_parser('generate', help='Generate a synthetic dataset'), True)
    add_config(subparsers.add_parser('fit', help='Fit latent locations'), True)
    verify = subparsers.add_parser('verify', help='Run the numerical identity checks')
    add_config(verify, False)
    verify.add_argument('--inject-fault', action='store_true',
                        help='Corrupt the off-diagonal precision blocks (harness self-test)')
    verify.add_argument('--seed', type=int, default=0, help='Seed for the check fixtures')
    evaluate = subparsers.add_parser('eval', help='Evaluate saved locations')
    add_config(evaluate, True)
    evaluate.add_argument('--locations', required=True, help='Locations CSV written by fit')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        settings = ExperimentSettings(args.config, _overrides(args.set))
        configure_logging('DEBUG' if args.verbose else settings.log_level)
        logger.debug(f"gprf {__version__}: {args.command}")
        if args.command == 'generate':
            cmd_generate(settings)
        elif args.command == 'fit':
            cmd_fit(settings)
        elif args.command == 'verify':
            if not cmd_verify(settings, args.inject_fault, args.seed):
                return 2
        elif args.command == 'eval':
            cmd_eval(settings, args.locations)
    except GprfError as e:
        logger.error(str(e))
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
