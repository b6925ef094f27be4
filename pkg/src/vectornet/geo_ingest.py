"""Building patch networks from intersections and a population grid, and
synthetic islands for desk-scale runs."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
import shapely

from .core_model import ModelParams
from .network import DEFAULT_D_MAX, PatchNetwork, build_network

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8


@dataclass(frozen=True)
class GridCell:
    x0: float
    y0: float
    size: float
    population: int

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("cell size must be > 0")
        if self.population < 0:
            raise ValueError("cell population must be >= 0")

    @property
    def center(self):
        return self.x0 + self.size / 2, self.y0 + self.size / 2


def project_lonlat(lon, lat):
    """Equirectangular projection to meters about the centroid of the points.

    Adequate at island scale (tens of km); not a general geodesy tool.
    """
    lon, lat = np.radians(np.asarray(lon, float)), np.radians(np.asarray(lat, float))
    lat0 = lat.mean()
    x = EARTH_RADIUS_M * (lon - lon.mean()) * math.cos(lat0)
    y = EARTH_RADIUS_M * (lat - lat0)
    return np.column_stack([x, y])


def _read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise ValueError(f"{path}: expected header {','.join(header)}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}:{line}: malformed number in {row!r}") from None
            if not all(map(math.isfinite, vals)):
                raise ValueError(f"{path}:{line}: non-finite value in {row!r}")
            yield vals


def load_intersections(path) -> np.ndarray:
    """Planar node coordinates from an `x_m,y_m` file, exact duplicates dropped."""
    xy = np.array(list(_read_rows(path, ["x_m", "y_m"])), dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        raise ValueError(f"{path}: no nodes")
    uniq, first = np.unique(xy, axis=0, return_index=True)
    if len(uniq) < len(xy):
        log.warning("%s: collapsed %d duplicate intersections", path, len(xy) - len(uniq))
    return xy[np.sort(first)]


def load_cells(path) -> list[GridCell]:
    return [GridCell(x0, y0, size, int(round(pop)))
            for x0, y0, size, pop in _read_rows(path, ["x0_m", "y0_m", "size_m", "population"])]


def _cell_of_nodes(cells, xy) -> np.ndarray:
    """Index of the half-open cell [x0, x0+size) x [y0, y0+size) holding each node, or -1."""
    owner = np.full(len(xy), -1)
    sizes = {c.size for c in cells}
    if len(sizes) == 1:
        size = sizes.pop()
        ox, oy = min(c.x0 for c in cells), min(c.y0 for c in cells)
        keys = {}
        aligned = True
        for k, c in enumerate(cells):
            a, b = (c.x0 - ox) / size, (c.y0 - oy) / size
            if a != round(a) or b != round(b):
                aligned = False
                break
            keys.setdefault((round(a), round(b)), k)
        if aligned:
            ix = np.floor((xy[:, 0] - ox) / size).astype(np.int64)
            iy = np.floor((xy[:, 1] - oy) / size).astype(np.int64)
            for node, key in enumerate(zip(ix.tolist(), iy.tolist())):
                owner[node] = keys.get(key, -1)
            return owner
    for k, c in enumerate(cells):
        inside = ((xy[:, 0] >= c.x0) & (xy[:, 0] < c.x0 + c.size)
                  & (xy[:, 1] >= c.y0) & (xy[:, 1] < c.y0 + c.size) & (owner < 0))
        owner[inside] = k
    return owner


def distribute_population(cells, xy):
    """Split each cell's residents evenly over the nodes inside it.

    Remainders of the integer split go one each to the lowest node ids. A
    populated cell without nodes gets one new node at its center, appended
    after the input nodes. Returns (coordinates, population).
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    owner = _cell_of_nodes(cells, xy)
    outside = int((owner < 0).sum())
    if outside:
        log.warning("%d node(s) lie outside every cell and get no population", outside)
    pop = np.zeros(len(xy), dtype=np.int64)
    extra = []
    members = {}
    for node, k in enumerate(owner.tolist()):
        if k >= 0:
            members.setdefault(k, []).append(node)
    for k, c in enumerate(cells):
        nodes = members.get(k)
        if not nodes:
            if c.population > 0:
                extra.append((c.center, c.population))
            continue
        q, rem = divmod(int(c.population), len(nodes))
        pop[nodes] = q
        pop[nodes[:rem]] += 1
    if extra:
        xy = np.vstack([xy, [e[0] for e in extra]])
        pop = np.concatenate([pop, [e[1] for e in extra]])
    return xy, pop


@dataclass(frozen=True)
class IslandConfig:
    """Desk-scale stand-in for a real island.

    Nodes are drawn around `cluster_count` towns (Gaussian spread
    `cluster_sigma_m`) plus a uniform rural background. Residents are laid
    on a 1 km grid following a smooth town-centred density, then split
    over the nodes of each cell.
    """

    node_count: int = 500
    width_m: float = 8000.0
    height_m: float = 8000.0
    population_total: int = 25000
    cluster_count: int = 6
    cluster_sigma_m: float = 300.0
    background_fraction: float = 0.2
    cell_size_m: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if self.population_total < 0:
            raise ValueError("population_total must be >= 0")


def _largest_remainder(weights, total: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if total == 0 or w.sum() == 0:
        out = np.zeros(len(w), dtype=np.int64)
        if total:
            out[0] = total
        return out
    share = w / w.sum() * total
    out = np.floor(share).astype(np.int64)
    rest = total - int(out.sum())
    order = np.argsort(-(share - out), kind="stable")
    out[order[:rest]] += 1
    return out


def synthesize_island(cfg: IslandConfig, params: ModelParams | None = None,
                      d_max: float = DEFAULT_D_MAX) -> PatchNetwork:
    params = params or ModelParams()
    rng = np.random.default_rng(cfg.seed)
    bounds = shapely.box(0.0, 0.0, cfg.width_m, cfg.height_m)
    if cfg.node_count == 1:
        xy = np.array([[cfg.width_m / 2, cfg.height_m / 2]])
        return build_network(xy, [cfg.population_total], params, d_max, bounds)

    lo = np.array([0.0, 0.0])
    hi = np.array([cfg.width_m, cfg.height_m])
    margin = np.minimum(3 * cfg.cluster_sigma_m, hi / 4)
    centers = rng.uniform(lo + margin, hi - margin, size=(max(cfg.cluster_count, 1), 2))
    n_bg = int(round(cfg.background_fraction * cfg.node_count)) if cfg.cluster_count else cfg.node_count
    pts = [rng.uniform(lo, hi, size=(n_bg, 2))]
    need = cfg.node_count - n_bg
    while need > 0:
        c = centers[rng.integers(len(centers), size=need)]
        cand = c + rng.normal(0.0, cfg.cluster_sigma_m, size=(need, 2))
        cand = cand[np.all((cand >= lo) & (cand < hi), axis=1)]
        pts.append(cand)
        need -= len(cand)
    xy = np.round(np.vstack(pts), 1)
    xy = np.unique(xy, axis=0)
    while len(xy) < cfg.node_count:  # rounding collisions, vanishingly rare
        xy = np.unique(np.vstack([xy, rng.uniform(lo, hi, size=(cfg.node_count - len(xy), 2)).round(1)]), axis=0)
    xy = xy[rng.permutation(len(xy))]

    # town-centred density sampled on the grid; only cells holding nodes are populated
    cells_x = np.arange(0.0, cfg.width_m, cfg.cell_size_m)
    cells_y = np.arange(0.0, cfg.height_m, cfg.cell_size_m)
    grid = [(x0, y0) for x0 in cells_x for y0 in cells_y]
    cells0 = [GridCell(x0, y0, cfg.cell_size_m, 0) for x0, y0 in grid]
    owner = _cell_of_nodes(cells0, xy)
    counts = np.bincount(owner[owner >= 0], minlength=len(grid))
    ctr = np.array(grid) + cfg.cell_size_m / 2
    spread = max(cfg.cluster_sigma_m, cfg.cell_size_m)
    density = 0.1 + np.exp(-((ctr[:, None, :] - centers[None]) ** 2).sum(-1) / (2 * spread**2)).sum(1)
    weights = density * (counts > 0)
    cell_pop = _largest_remainder(weights, cfg.population_total)
    cells = [GridCell(x0, y0, cfg.cell_size_m, int(p)) for (x0, y0), p in zip(grid, cell_pop)]
    xy, pop = distribute_population(cells, xy)
    return build_network(xy, pop, params, d_max, bounds)
