"""Synthetic human mobility: trip lengths, Zipf presence and sparse travel
rate tables."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

log = logging.getLogger(__name__)

TABLE_POINTS = 2**14
MAX_RETRIES = 50


@dataclass(frozen=True)
class MobilityGenConfig:
    """Settings of the mobility generator.

    Lengths are in km. `power_beta` is not pinned by the trip-length data we
    follow (only the cutoff and the exponential scale are); 1.75 is the
    value reported for phone-tracked trips and should be treated as a
    tunable. `g_default` (per-capita leave rate, 1/day) is a free
    calibration knob.
    """

    delta_r0: float = 1.5
    kappa: float = 80.0
    power_beta: float = 1.75
    destinations: int = 40
    g_default: float = 0.5
    return_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.delta_r0 <= 0 or self.kappa <= 0 or self.power_beta <= 0:
            raise ValueError("delta_r0, kappa and power_beta must be > 0")
        if self.destinations < 1:
            raise ValueError("destinations per node must be >= 1")
        if self.g_default < 0 or self.return_rate < 0:
            raise ValueError("rates must be >= 0")


def trip_length_density(x, delta_r0=1.5, kappa=80.0, power_beta=1.75):
    """Unnormalized trip-length law (x + dr0)^-beta * exp(-x / kappa)."""
    x = np.asarray(x, dtype=float)
    return (x + delta_r0) ** (-power_beta) * np.exp(-x / kappa)


@lru_cache(maxsize=16)
def _inverse_cdf_table(delta_r0: float, kappa: float, power_beta: float):
    # log-spaced so the steep head near 0 is resolved; tail cut at 5 kappa
    grid = np.concatenate([[0.0], np.geomspace(1e-4 * delta_r0, 5.0 * kappa, TABLE_POINTS - 1)])
    f = trip_length_density(grid, delta_r0, kappa, power_beta)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    return cdf, grid


def sample_trip_length(rng: np.random.Generator, cfg: MobilityGenConfig, size=None):
    """Draw trip lengths (km) by inverse-CDF lookup on a tabulated integral."""
    cdf, grid = _inverse_cdf_table(cfg.delta_r0, cfg.kappa, cfg.power_beta)
    u = rng.random(size)
    return np.interp(u, cdf, grid)


def zipf_presence(n: int) -> np.ndarray:
    """Presence probability by rank: (1/k) / H_n for k = 1..n."""
    if n < 1:
        raise ValueError("zipf_presence needs n >= 1")
    w = 1.0 / np.arange(1, n + 1)
    return w / w.sum()


def _pick_destinations(order, dist_sorted, n_dest, rng, cfg) -> list[int]:
    used = np.zeros(len(order), dtype=bool)
    chosen = []
    for _ in range(n_dest):
        slot = -1
        for _ in range(MAX_RETRIES):
            target = sample_trip_length(rng, cfg) * 1000.0
            k = int(np.searchsorted(dist_sorted, target))
            if k == len(dist_sorted) or (k > 0 and target - dist_sorted[k - 1] <= dist_sorted[k] - target):
                k -= 1
            if not used[k]:
                slot = k
                break
        if slot < 0:
            # nearest still-unused node to the last sampled length
            free = np.flatnonzero(~used)
            slot = int(free[np.argmin(np.abs(dist_sorted[free] - target))])
        used[slot] = True
        chosen.append(int(order[slot]))
    return chosen


def generate_destinations(xy, cfg: MobilityGenConfig, seed=None) -> list[list[int]]:
    """Ranked destination lists, one per origin node.

    Each destination is the node whose distance to the origin is closest to
    a sampled trip length; repeats are resampled. Node i draws from its own
    random stream spawned from the master seed (an int or a SeedSequence),
    so the result does not depend on evaluation order.
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    n = len(xy)
    if n < 2:
        raise ValueError("mobility generation needs at least 2 nodes")
    n_dest = cfg.destinations
    if n_dest > n - 1:
        log.warning("only %d other nodes; truncating %d destinations per node", n - 1, n_dest)
        n_dest = n - 1
    seed = cfg.seed if seed is None else seed
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(n)
    out = []
    for i in range(n):
        rng = np.random.default_rng(streams[i])
        d = np.hypot(xy[:, 0] - xy[i, 0], xy[:, 1] - xy[i, 1])
        d[i] = np.inf
        order = np.argsort(d, kind="stable")[:-1]
        out.append(_pick_destinations(order, d[order], n_dest, rng, cfg))
    return out


@dataclass(frozen=True)
class TravelMatrices:
    """Sparse departure (g_i m_ji) and return (r_ij) rates on shared OD pairs.

    Pairs are off-diagonal, grouped by origin and ordered by destination
    rank within an origin.
    """

    n: int
    origin: np.ndarray
    dest: np.ndarray
    depart: np.ndarray
    ret: np.ndarray
    leave_rate: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.any(self.origin == self.dest):
            raise ValueError("travel matrices must not store diagonal entries")
        if np.any(self.depart < 0) or np.any(self.ret < 0):
            raise ValueError("travel rates must be >= 0")

    def __len__(self):
        return len(self.origin)

    @classmethod
    def empty(cls, n: int) -> "TravelMatrices":
        z = np.zeros(0, dtype=np.int64)
        return cls(n, z, z.copy(), np.zeros(0), np.zeros(0), np.zeros(n))

    def split_fractions(self) -> np.ndarray:
        """m_ji per stored pair (0 where the origin never leaves)."""
        g = self.leave_rate[self.origin]
        return np.divide(self.depart, g, out=np.zeros_like(self.depart), where=g > 0)

    def with_rates(self, depart, ret) -> "TravelMatrices":
        return TravelMatrices(self.n, self.origin, self.dest, np.asarray(depart, float),
                              np.asarray(ret, float), self.leave_rate)


def build_travel_matrices(destinations, cfg: MobilityGenConfig) -> TravelMatrices:
    """Zipf presence weights become split fractions m_ji; uniform g and r."""
    n = len(destinations)
    if cfg.g_default == 0:
        return TravelMatrices.empty(n)
    origin, dest, depart = [], [], []
    for i, ranked in enumerate(destinations):
        if not ranked:
            continue
        origin.extend([i] * len(ranked))
        dest.extend(ranked)
        depart.append(cfg.g_default * zipf_presence(len(ranked)))
    depart = np.concatenate(depart) if depart else np.zeros(0)
    leave = np.array([cfg.g_default if d else 0.0 for d in destinations])
    return TravelMatrices(n, np.array(origin, dtype=np.int64), np.array(dest, dtype=np.int64),
                          depart, np.full(len(depart), cfg.return_rate), leave)


def generate_mobility(xy, cfg: MobilityGenConfig, seed=None) -> TravelMatrices:
    return build_travel_matrices(generate_destinations(xy, cfg, seed), cfg)


MOBILITY_HEADER = ["origin", "dest", "depart_rate", "return_rate"]


def write_mobility_csv(path, tm: TravelMatrices) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MOBILITY_HEADER)
        for row in zip(tm.origin, tm.dest, tm.depart, tm.ret):
            w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3]))])


def read_mobility_csv(path, n: int) -> TravelMatrices:
    """Load a mobility file; the leave rate of each origin is its departure row sum."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MOBILITY_HEADER:
            raise ValueError(f"{path}: expected header {','.join(MOBILITY_HEADER)}")
        rows = []
        for line, row in enumerate(reader, start=2):
            try:
                o, d, g, r = int(row[0]), int(row[1]), float(row[2]), float(row[3])
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{line}: malformed row {row!r}") from None
            if not (0 <= o < n and 0 <= d < n) or not (math.isfinite(g) and math.isfinite(r)):
                raise ValueError(f"{path}:{line}: invalid entry {row!r}")
            rows.append((o, d, g, r))
    if not rows:
        return TravelMatrices.empty(n)
    # keep file order within an origin (it carries the destination rank)
    rows.sort(key=lambda t: t[0])
    o, d, g, r = (np.array(c) for c in zip(*rows))
    leave = np.bincount(o, weights=g, minlength=n)
    return TravelMatrices(n, o.astype(np.int64), d.astype(np.int64), g.astype(float),
                          r.astype(float), leave)
