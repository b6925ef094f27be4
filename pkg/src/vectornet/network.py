"""Patch network geometry: Voronoi surfaces, carrying capacities, mosquito
kernel edges and graph metrics."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import shapely
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .core_model import ModelParams

log = logging.getLogger(__name__)

DEFAULT_D_MAX = 200.0
# Exact diameter costs one BFS per node; above this size it needs an explicit opt-in.
DIAMETER_NODE_LIMIT = 5000


def kernel(distance, d_max: float = DEFAULT_D_MAX):
    """Linear interaction weight (d_max - d) / d_max, zero from d_max on."""
    distance = np.asarray(distance, dtype=float)
    w = np.where(distance < d_max, (d_max - distance) / d_max, 0.0)
    return w if w.ndim else float(w)


def _check_duplicates(xy: np.ndarray) -> None:
    order = np.lexsort((xy[:, 1], xy[:, 0]))
    s = xy[order]
    same = np.all(s[1:] == s[:-1], axis=1)
    if same.any():
        k = int(np.flatnonzero(same)[0])
        a, b = sorted((int(order[k]), int(order[k + 1])))
        raise ValueError(f"duplicate node coordinates: nodes {a} and {b} both at {tuple(xy[a])}")


def bounding_box(xy, margin: float = 0.0):
    xy = np.asarray(xy, dtype=float)
    (x0, y0), (x1, y1) = xy.min(axis=0) - margin, xy.max(axis=0) + margin
    return shapely.box(x0, y0, x1, y1)


def voronoi_areas(xy, bounds=None) -> np.ndarray:
    """Areas of the Voronoi cells of `xy` clipped to the polygon `bounds`.

    `bounds` defaults to the bounding box of the points. The cells partition
    the bounds, so the areas sum to its area.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        raise ValueError("voronoi_areas needs at least one node")
    _check_duplicates(xy)
    if bounds is None:
        bounds = bounding_box(xy)
    if len(xy) == 1:
        return np.array([bounds.area])
    points = shapely.multipoints(xy)
    cells = shapely.voronoi_polygons(points, extend_to=bounds, ordered=True)
    polys = shapely.get_parts(cells)
    if len(polys) != len(xy):
        raise RuntimeError(f"Voronoi tessellation returned {len(polys)} cells for {len(xy)} nodes")
    return shapely.area(shapely.intersection(polys, bounds))


def carrying_capacities(areas, params: ModelParams, d_max: float = DEFAULT_D_MAX):
    """Scale the reference capacities by min(S_i / (pi d_max^2), 1)."""
    phi = np.minimum(np.asarray(areas, dtype=float) / (math.pi * d_max**2), 1.0)
    return params.K_E * phi, params.K_L * phi


@dataclass(frozen=True)
class KernelEdges:
    """Undirected mosquito interaction edges, stored once with i < j."""

    i: np.ndarray
    j: np.ndarray
    distance: np.ndarray
    weight: np.ndarray

    def __len__(self):
        return len(self.i)

    @classmethod
    def empty(cls) -> "KernelEdges":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), np.zeros(0), np.zeros(0))


def mosquito_edges(xy, d_max: float = DEFAULT_D_MAX) -> KernelEdges:
    """All node pairs closer than `d_max` (and not coincident), via a k-d tree."""
    if d_max <= 0:
        raise ValueError("d_max must be > 0")
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    if len(xy) < 2:
        return KernelEdges.empty()
    pairs = cKDTree(xy).query_pairs(d_max, output_type="ndarray")
    if len(pairs) == 0:
        return KernelEdges.empty()
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    dist = np.hypot(*(xy[pairs[:, 0]] - xy[pairs[:, 1]]).T)
    keep = (dist < d_max) & (dist > 0)
    pairs, dist = pairs[keep], dist[keep]
    return KernelEdges(pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64),
                       dist, (d_max - dist) / d_max)


@dataclass(frozen=True)
class PatchNetwork:
    x: np.ndarray
    y: np.ndarray
    population: np.ndarray
    area: np.ndarray
    k_e: np.ndarray
    k_l: np.ndarray
    edges: KernelEdges
    d_max: float = DEFAULT_D_MAX
    bounds: object = field(default=None, compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def kernel_matrix(self, normalize: bool = False, with_edges: bool = True) -> sp.csr_matrix:
        """Sparse n x n weights psi(d_ik), unit diagonal included.

        `normalize` rescales each row to sum to 1; `with_edges=False` keeps
        only the self-interaction (no mosquito mobility).
        """
        n = self.n
        e = self.edges if with_edges else KernelEdges.empty()
        rows = np.concatenate([np.arange(n), e.i, e.j])
        cols = np.concatenate([np.arange(n), e.j, e.i])
        vals = np.concatenate([np.ones(n), e.weight, e.weight])
        W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        if normalize:
            W = sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W
        return W.tocsr()

    def without_mosquito_mobility(self) -> "PatchNetwork":
        return replace(self, edges=KernelEdges.empty())


def build_network(xy, population, params: ModelParams, d_max: float = DEFAULT_D_MAX,
                  bounds=None, area=None) -> PatchNetwork:
    """Assemble a PatchNetwork, computing areas and capacities as needed."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    population = np.asarray(population, dtype=float)
    if len(population) != len(xy):
        raise ValueError("population and coordinates differ in length")
    if (population < 0).any():
        raise ValueError("population must be >= 0")
    if area is None:
        area = voronoi_areas(xy, bounds)
    area = np.asarray(area, dtype=float)
    k_e, k_l = carrying_capacities(area, params, d_max)
    return PatchNetwork(xy[:, 0].copy(), xy[:, 1].copy(), population, area, k_e, k_l,
                        mosquito_edges(xy, d_max), d_max, bounds)


@dataclass(frozen=True)
class GraphMetrics:
    node_count: int
    link_count: int
    average_degree: float
    connected_component_count: int
    diameter: int | None

    def as_rows(self):
        return [
            ("number of nodes", self.node_count),
            ("number of links", self.link_count),
            ("average degree", f"{self.average_degree:.4g}"),
            ("connected components", self.connected_component_count),
            ("diameter", "n/a" if self.diameter is None else self.diameter),
        ]


def _undirected_adjacency(i, j, n) -> sp.csr_matrix:
    i, j = np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64)
    if len(i) and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= n):
        raise IndexError("edge index out of range")
    keep = i != j
    a, b = np.minimum(i, j)[keep], np.maximum(i, j)[keep]
    A = sp.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n)).tocsr()
    A.data[:] = 1.0  # collapses repeated pairs
    return (A + A.T).tocsr()


def _eccentricities(A: sp.csr_matrix, sources, chunk: int = 256) -> np.ndarray:
    ecc = []
    for k in range(0, len(sources), chunk):
        D = csgraph.shortest_path(A, unweighted=True, indices=sources[k:k + chunk])
        ecc.append(D.max(axis=1))
    return np.concatenate(ecc)


def graph_metrics(i, j, node_count: int, exact_diameter: bool = False,
                  diameter_limit: int = DIAMETER_NODE_LIMIT) -> GraphMetrics:
    """Size, degree, connectivity and diameter of an undirected edge set.

    The diameter is that of the largest component, computed exactly by a
    BFS from each of its nodes. Components larger than `diameter_limit`
    report no diameter unless `exact_diameter` is set.
    """
    if node_count == 0:
        return GraphMetrics(0, 0, 0.0, 0, None)
    A = _undirected_adjacency(i, j, node_count)
    links = A.nnz // 2
    ncomp, labels = csgraph.connected_components(A, directed=False)
    sizes = np.bincount(labels)
    big = np.flatnonzero(labels == np.argmax(sizes))
    diameter = None
    if len(big) <= diameter_limit or exact_diameter:
        sub = A[big][:, big]
        # double sweep gives a lower bound that the exact pass must reach
        d0 = csgraph.shortest_path(sub, unweighted=True, indices=0)
        far = int(np.argmax(d0))
        lower = csgraph.shortest_path(sub, unweighted=True, indices=far).max()
        diameter = int(_eccentricities(sub, np.arange(len(big))).max())
        assert diameter >= lower
    else:
        log.info("skipping exact diameter on a %d-node component (pass exact_diameter)", len(big))
    return GraphMetrics(node_count, links, 2.0 * links / node_count, int(ncomp), diameter)


NODES_HEADER = ["id", "x_m", "y_m", "population", "area_m2"]
EDGES_HEADER = ["i", "j", "distance_m", "weight"]


def write_nodes_csv(path, net: PatchNetwork) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(NODES_HEADER)
        for k in range(net.n):
            w.writerow([k, repr(float(net.x[k])), repr(float(net.y[k])),
                        repr(float(net.population[k])), repr(float(net.area[k]))])


def read_nodes_csv(path):
    """Return (xy, population, area or None) from a nodes file.

    Rows must be sorted by id starting at 0; the area column may be
    missing or blank, in which case None is returned for it.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
        header = rows[0].keys() if rows else []
    if not rows:
        raise ValueError(f"{path}: no nodes")
    for col in NODES_HEADER[:4]:
        if col not in header:
            raise ValueError(f"{path}: missing column {col!r}")
    xy, pop, area = [], [], []
    for line, row in enumerate(rows, start=2):
        try:
            if int(row["id"]) != line - 2:
                raise ValueError("ids must be 0..n-1 in order")
            xy.append((float(row["x_m"]), float(row["y_m"])))
            pop.append(float(row["population"]))
            a = (row.get("area_m2") or "").strip()
            area.append(float(a) if a else math.nan)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{line}: {exc}") from None
    area = np.array(area)
    return np.array(xy), np.array(pop), (None if np.isnan(area).any() else area)


def write_edges_csv(path, edges: KernelEdges) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGES_HEADER)
        for a, b, d, wt in zip(edges.i, edges.j, edges.distance, edges.weight):
            w.writerow([int(a), int(b), repr(float(d)), repr(float(wt))])
