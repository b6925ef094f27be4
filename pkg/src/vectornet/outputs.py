"""CSV and manifest writers for experiment outputs.

Floats are written with `repr`, the shortest string that round-trips, so
identical runs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numba
import numpy as np
import scipy
import shapely

from . import __version__
from .engine import AGGREGATES, Trajectory
from .experiments import STAT_NAMES, ReplicateStats, SweepGrid

FORMAT_VERSION = 1
TIMESERIES_HEADER = ["t_days", *AGGREGATES]
NODE_SERIES_HEADER = ["t_days", "node_id", "S_H", "I_H", "S_m", "I_m"]
SNAPSHOT_HEADER = ["node_id", "I_H_present", "infection_fraction", "S_m", "I_m", "E", "L"]
GRID_HEADER = ["beta_h", "beta_m", "seroprevalence"]
REPLICATE_HEADER = ["t_days", "node_id", *STAT_NAMES]
REPLICATE_TABLE_HEADER = ["node_id", "population", "max_sd", "t_days", "pct_population"]
QUARANTINE_HEADER = ["threshold", "t_days", "I_H", "seroprevalence"]


def _f(x) -> str:
    return repr(float(x))


def _writer(path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def write_timeseries(path, traj: Trajectory) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(TIMESERIES_HEADER)
        for k, t in enumerate(traj.t):
            w.writerow([_f(t), *(_f(traj.totals[name][k]) for name in AGGREGATES)])


def write_node_series(path, traj: Trajectory) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(NODE_SERIES_HEADER)
        for k, t in enumerate(traj.t):
            for c, node in enumerate(traj.observed):
                w.writerow([_f(t), int(node), *(_f(traj.nodes[name][k, c]) for name in NODE_SERIES_HEADER[2:])])


def write_snapshot(path, snapshot: dict) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(SNAPSHOT_HEADER)
        for node in range(len(snapshot["S_m"])):
            w.writerow([node, *(_f(snapshot[k][node]) for k in SNAPSHOT_HEADER[1:])])


def write_grid(path, grid: SweepGrid) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(GRID_HEADER)
        for row in grid.rows():
            w.writerow([_f(v) for v in row])


def read_grid(path) -> SweepGrid:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != GRID_HEADER:
            raise ValueError(f"{path}: expected header {','.join(GRID_HEADER)}")
        rows = [tuple(map(float, r)) for r in reader if r]
    bh = sorted({r[0] for r in rows})
    bm = sorted({r[1] for r in rows})
    z = np.full((len(bh), len(bm)), np.nan)
    for a, b, v in rows:
        z[bh.index(a), bm.index(b)] = v
    if np.isnan(z).any():
        raise ValueError(f"{path}: grid is incomplete")
    return SweepGrid(bh, bm, z)


def write_quarantine(path, results: dict) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(QUARANTINE_HEADER)
        for thr, res in results.items():
            label = "none" if thr is None else _f(thr)
            for t, i_h, sero in zip(res["t"], res["I_H"], res["seroprevalence"]):
                w.writerow([label, _f(t), _f(i_h), _f(sero)])


def write_replicate_stats(path, stats: ReplicateStats) -> None:
    """Per time and observed node; node_id -1 holds the network-wide I_H."""
    fh, w = _writer(path)
    with fh:
        w.writerow(REPLICATE_HEADER)
        for k, t in enumerate(stats.t):
            w.writerow([_f(t), -1, *(_f(stats.network[s][k]) for s in STAT_NAMES)])
            for c, node in enumerate(stats.observed):
                w.writerow([_f(t), int(node), *(_f(stats.node[s][k, c]) for s in STAT_NAMES)])


def write_replicate_table(path, stats: ReplicateStats) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(REPLICATE_TABLE_HEADER)
        for row in stats.table():
            w.writerow([row["node"], _f(row["population"]), _f(row["max_sd"]), _f(row["t_days"]),
                        _f(row["pct_population"])])
        net = stats.network_summary()
        w.writerow([-1, _f(stats.total_population), _f(net["max_sd"]), _f(net["t_days"]),
                    _f(net["pct_population"])])


def software_versions() -> dict:
    return {"vectornet": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "shapely": shapely.__version__}


def write_manifest(out_dir, command: str, config: dict, digest: str, seeds: dict, files) -> Path:
    """Everything needed to rerun: config, its hash, derived seeds, versions, outputs."""
    manifest = {
        "command": command,
        "config_sha256": digest,
        "config": config,
        "seeds": seeds,
        "format_version": FORMAT_VERSION,
        "software": software_versions(),
        "outputs": sorted(str(f) for f in files),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=list) + "\n")
    return path
