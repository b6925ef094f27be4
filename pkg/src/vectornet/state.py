"""Sparse origin/destination state layout."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mobility import TravelMatrices

COMPARTMENTS = ("E", "L", "S_m", "I_m", "S_H", "I_H", "R_H")


@dataclass(frozen=True, eq=False)
class ODLayout:
    """Index arrays for the stored human sub-populations.

    Pair p holds residents of `origin[p]` present at `dest[p]`. Pairs are
    grouped by origin, the resident-at-home pair (i, i) first, then the
    travel destinations in rank order. `diag[i]` is the position of (i, i).
    """

    n: int
    origin: np.ndarray
    dest: np.ndarray
    diag: np.ndarray
    travel: np.ndarray  # position in TravelMatrices of each pair, -1 on the diagonal

    @property
    def pairs(self) -> int:
        return len(self.origin)

    @property
    def size(self) -> int:
        return 4 * self.n + 3 * self.pairs

    @classmethod
    def from_matrices(cls, tm: TravelMatrices) -> "ODLayout":
        n, m = tm.n, len(tm)
        origin = np.concatenate([np.arange(n), tm.origin])
        dest = np.concatenate([np.arange(n), tm.dest])
        travel = np.concatenate([np.full(n, -1), np.arange(m)])
        order = np.lexsort((travel, origin))
        origin, dest, travel = origin[order], dest[order], travel[order]
        diag = np.flatnonzero(travel < 0)
        return cls(n, origin, dest, diag, travel)

    def pair_rates(self, tm: TravelMatrices):
        """Departure and return rates aligned with the pairs (0 on the diagonal)."""
        dep = np.zeros(self.pairs)
        ret = np.zeros(self.pairs)
        off = self.travel >= 0
        dep[off] = tm.depart[self.travel[off]]
        ret[off] = tm.ret[self.travel[off]]
        return dep, ret


class NetworkState:
    """Flat state vector with named views.

    Layout: E, L, S_m, I_m (n each), then S_H, I_H, R_H (one per OD pair).
    """

    def __init__(self, layout: ODLayout, y=None):
        self.layout = layout
        self.y = np.zeros(layout.size) if y is None else np.asarray(y, dtype=float)
        if self.y.shape != (layout.size,):
            raise ValueError(f"state vector has shape {self.y.shape}, expected ({layout.size},)")

    def _slice(self, k):
        n, P = self.layout.n, self.layout.pairs
        if k < 4:
            return self.y[k * n:(k + 1) * n]
        start = 4 * n + (k - 4) * P
        return self.y[start:start + P]

    E = property(lambda self: self._slice(0))
    L = property(lambda self: self._slice(1))
    S_m = property(lambda self: self._slice(2))
    I_m = property(lambda self: self._slice(3))
    S_H = property(lambda self: self._slice(4))
    I_H = property(lambda self: self._slice(5))
    R_H = property(lambda self: self._slice(6))

    def copy(self) -> "NetworkState":
        return NetworkState(self.layout, self.y.copy())

    def resident_totals(self) -> np.ndarray:
        lay = self.layout
        return np.bincount(lay.origin, weights=self.S_H + self.I_H + self.R_H, minlength=lay.n)

    def present(self, values) -> np.ndarray:
        return np.bincount(self.layout.dest, weights=values, minlength=self.layout.n)

    def locate(self, index: int) -> tuple[str, int]:
        """Map a flat index to (compartment, node or pair)."""
        n, P = self.layout.n, self.layout.pairs
        if index < 4 * n:
            return COMPARTMENTS[index // n], index % n
        k = index - 4 * n
        return COMPARTMENTS[4 + k // P], k % P
