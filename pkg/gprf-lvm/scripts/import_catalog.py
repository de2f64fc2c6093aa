#!/usr/bin/env python3
"""
Event catalog import script.

Reads an external event catalog and writes planar event locations for the
events generator:
- CSV, or Excel (sheet with the most rows unless --sheet is given)
- Column headers normalized; 'Unnamed' columns ignored
- lat/lon in degrees projected to km about the catalog's mean latitude,
  or x/y already in km
- Optional depth in km, clipped at the surface
Optionally samples a full dataset at the imported locations.
"""

import argparse
import os
import re
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

# Add parent directory to path so we can import gprf modules
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from gprf.datagen import events_spec, gen_events_at
from gprf.errors import GprfError
from gprf.storage import save_catalog, save_dataset

EARTH_RADIUS_KM = 6371.0

COLUMN_ALIASES: Dict[str, List[str]] = {
    'lat': ['lat', 'latitude'],
    'lon': ['lon', 'long', 'longitude'],
    'x': ['x', 'x_km', 'easting_km'],
    'y': ['y', 'y_km', 'northing_km'],
    'depth': ['depth', 'depth_km', 'dep'],
}


def normalize_column_name(name) -> str:
    """
    Normalize a column header: lowercase, punctuation and whitespace to
    single underscores.
    """
    if name is None or pd.isna(name):
        return ""
    name = str(name).strip().lower()
    name = re.sub(r'[\s\n\r/\(\)\[\]\-.]+', ' ', name)
    return '_'.join(name.split())


def should_ignore_column(col_name) -> bool:
    if not col_name:
        return True
    return str(col_name).startswith('Unnamed')


def get_best_sheet(excel_path: str, header_row: int = 0) -> str:
    """
    Get the sheet name with the most rows.

    Args:
        excel_path: Path to Excel file
        header_row: Row holding the column headers

    Returns:
        Name of sheet with most rows
    """
    excel_file = pd.ExcelFile(excel_path)
    sheet_info = []
    for sheet_name in excel_file.sheet_names:
        try:
            df = pd.read_excel(excel_path, sheet_name=sheet_name, header=header_row)
            sheet_info.append((sheet_name, len(df)))
        except Exception as e:
            print(f"Warning: Could not read sheet '{sheet_name}': {e}")

    if not sheet_info:
        raise ValueError("No readable sheets found in Excel file")

    best_sheet = max(sheet_info, key=lambda x: x[1])
    print(f"Selected sheet '{best_sheet[0]}' with {best_sheet[1]} rows")
    return best_sheet[0]


def read_catalog(path: str, sheet_name: Optional[str] = None, header_row: int = 0) -> pd.DataFrame:
    """Read a CSV or Excel catalog with normalized column names."""
    if path.lower().endswith(('.xlsx', '.xlsm', '.xls')):
        if sheet_name is None:
            sheet_name = get_best_sheet(path, header_row)
        df = pd.read_excel(path, sheet_name=sheet_name, header=header_row)
    else:
        df = pd.read_csv(path, header=header_row)

    mapping = {}
    for col in df.columns:
        if not should_ignore_column(col):
            normalized = normalize_column_name(col)
            if normalized:
                mapping[col] = normalized
    df = df[list(mapping)].rename(columns=mapping)
    print(f"Read {len(df)} rows with columns: {list(df.columns)}")
    return df


def _find_column(df: pd.DataFrame, role: str) -> Optional[str]:
    for alias in COLUMN_ALIASES[role]:
        if alias in df.columns:
            return alias
    return None


def project_equirectangular(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Planar km coordinates about the mean latitude and longitude."""
    lat0 = np.deg2rad(np.mean(lat))
    lon0 = np.deg2rad(np.mean(lon))
    x = EARTH_RADIUS_KM * (np.deg2rad(lon) - lon0) * np.cos(lat0)
    y = EARTH_RADIUS_KM * (np.deg2rad(lat) - lat0)
    return np.column_stack([x, y])


def catalog_locations(df: pd.DataFrame, use_depth: bool = True) -> np.ndarray:
    """
    Extract event locations in km.

    Args:
        df: Catalog with normalized columns
        use_depth: Append the depth column when present

    Returns:
        Array of shape (n, 2) or (n, 3); rows with missing values dropped
    """
    lat, lon = _find_column(df, 'lat'), _find_column(df, 'lon')
    x, y = _find_column(df, 'x'), _find_column(df, 'y')
    depth = _find_column(df, 'depth') if use_depth else None

    if lat and lon:
        columns = [lat, lon]
    elif x and y:
        columns = [x, y]
    else:
        raise ValueError(f"Catalog needs lat/lon or x/y columns, found {list(df.columns)}")
    if depth:
        columns.append(depth)

    values = df[columns].apply(pd.to_numeric, errors='coerce')
    complete = values.notna().all(axis=1)
    if not complete.all():
        print(f"Dropping {int((~complete).sum())} rows with missing coordinates")
    values = values[complete].to_numpy(dtype=float)

    surface = project_equirectangular(values[:, 0], values[:, 1]) if lat and lon else values[:, :2]
    if not depth:
        return surface
    depths = values[:, 2]
    if np.any(depths < 0):
        print(f"Clipping {int(np.sum(depths < 0))} negative depths to 0")
    return np.column_stack([surface, np.maximum(depths, 0.0)])


def main():
    """Main entry point for the catalog import script."""
    parser = argparse.ArgumentParser(
        description="Import an event catalog as planar km locations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python import_catalog.py --catalog events.csv --out catalog.csv
  python import_catalog.py --catalog events.xlsx --out catalog.csv --dataset events_dataset.csv --outputs 50
        """
    )
    parser.add_argument('--catalog', required=True, help='CSV or Excel event catalog')
    parser.add_argument('--out', required=True, help='Output CSV with x, y[, depth] in km')
    parser.add_argument('--sheet', help='Sheet name (if not specified, uses sheet with most rows)')
    parser.add_argument('--header-row', type=int, default=0, help='Row holding the column headers')
    parser.add_argument('--no-depth', action='store_true', help='Ignore any depth column')
    parser.add_argument('--dataset', help='Also sample a dataset at the imported locations')
    parser.add_argument('--outputs', type=int, default=50, help='Output columns of the sampled dataset')
    parser.add_argument('--seed', type=int, default=0, help='Seed of the sampled dataset')
    parser.add_argument('--sigma-obs', type=float, default=20.0, help='Location noise std in km')
    parser.add_argument('--lengthscale', type=float, default=40.0, help='Matern lengthscale in km')
    args = parser.parse_args()

    if not os.path.exists(args.catalog):
        print(f"Error: Catalog file not found: {args.catalog}")
        sys.exit(1)

    try:
        df = read_catalog(args.catalog, args.sheet, args.header_row)
        locations = catalog_locations(df, use_depth=not args.no_depth)
        save_catalog(locations, args.out)
        print(f"Wrote {len(locations)} locations to {args.out}")

        if args.dataset:
            spec = events_spec(len(locations), D=args.outputs, seed=args.seed, sigma_obs=args.sigma_obs,
                               lengthscale=args.lengthscale, d=locations.shape[1])
            save_dataset(gen_events_at(locations, spec), args.dataset)
            print(f"Wrote dataset {args.dataset}")
    except (GprfError, ValueError, OSError) as e:
        print(f"\nImport failed: {e}")
        sys.exit(getattr(e, 'exit_code', 1))


if __name__ == "__main__":
    main()
