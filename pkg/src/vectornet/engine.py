"""Network dynamics over the sparse OD state, fixed-step RK4 integration,
events and observables."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core_model import ModelParams, vector_endemic_equilibrium
from .mobility import TravelMatrices
from .network import PatchNetwork
from .state import ODLayout, NetworkState

log = logging.getLogger(__name__)

POP_EPS = 1e-9
TRAVEL_INFECTION = ("origin", "destination")
DEFAULT_STEP = 0.05


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuarantineSpec:
    threshold: float
    check_interval: float = 1.0

    def __post_init__(self):
        if not 0 < self.threshold <= 1:
            raise ValueError("quarantine threshold must be in (0, 1]")
        if self.check_interval <= 0:
            raise ValueError("check_interval must be > 0")


@dataclass(frozen=True)
class MutationSpec:
    time: float
    new_beta_h: float
    new_beta_m: float

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("mutation time must be >= 0")


@dataclass(frozen=True)
class EventSpec:
    quarantine: QuarantineSpec | None = None
    mutation: MutationSpec | None = None


def network_dfe(matrices: TravelMatrices, network: PatchNetwork, params: ModelParams,
                layout: ODLayout | None = None) -> NetworkState:
    """Closed-form disease-free equilibrium of the network.

    Humans split between home and destinations according to the travel and
    return rates; mosquitoes sit at each node's vector equilibrium.
    """
    lay = layout or ODLayout.from_matrices(matrices)
    d_h = params.d_H
    if d_h <= 0:
        raise ValueError("the disease-free split needs a positive human death rate")
    dep, ret = lay.pair_rates(matrices)
    denom = d_h + ret
    off = lay.travel >= 0
    if np.any(denom[off] == 0):
        raise ValueError("d_H + r_ij vanishes on a stored pair")
    ratio = np.where(off, dep / denom, 0.0)
    home = network.population / (1.0 + np.bincount(lay.origin, weights=ratio, minlength=lay.n))
    st = NetworkState(lay)
    st.S_H[:] = ratio * home[lay.origin]
    st.S_H[lay.diag] = home
    for k in range(lay.n):
        E, L, A = vector_endemic_equilibrium(params, network.k_e[k], network.k_l[k])
        st.E[k], st.L[k], st.S_m[k] = E, L, A
    return st


@njit(cache=True, error_model="numpy")
def _rhs_kernel(y, out, rates, n, origin, dest, diag, dep, ret,
                w_ptr, w_idx, w_val, inv_ke, inv_kl, has_e, has_l, frozen, at_dest):
    b, s, d, s_L, d_L, d_m, d_H, beta_h, beta_m, gamma_h = rates
    P = origin.shape[0]
    o_S, o_I, o_R = 4 * n, 4 * n + P, 4 * n + 2 * P
    n_present = np.zeros(n)
    i_present = np.zeros(n)
    n_resident = np.zeros(n)
    for p in range(P):
        tot = y[o_S + p] + y[o_I + p] + y[o_R + p]
        n_present[dest[p]] += tot
        i_present[dest[p]] += y[o_I + p]
        n_resident[origin[p]] += tot
    infected_share = np.empty(n)
    for j in range(n):
        if n_present[j] < POP_EPS:
            n_present[j] = POP_EPS
        infected_share[j] = i_present[j] / n_present[j]
    # kernel-weighted sums over mosquito neighbours
    pressure = np.empty(n)
    for i in range(n):
        acc_m = 0.0
        acc_h = 0.0
        for q in range(w_ptr[i], w_ptr[i + 1]):
            k = w_idx[q]
            acc_m += w_val[q] * y[3 * n + k]
            acc_h += w_val[q] * infected_share[k]
        pressure[i] = beta_h * acc_m
        E, L, S_m, I_m = y[i], y[n + i], y[2 * n + i], y[3 * n + i]
        new_m = beta_m * S_m * acc_h
        if frozen:
            out[i] = 0.0
            out[n + i] = 0.0
        else:
            out[i] = b * (S_m + I_m) * has_e[i] * (1.0 - E * inv_ke[i]) - (s + d) * E
            out[n + i] = s * E * has_l[i] * (1.0 - L * inv_kl[i]) - (s_L + d_L) * L
        out[2 * n + i] = s_L * L - d_m * S_m - new_m
        out[3 * n + i] = new_m - d_m * I_m
    inv_present = 1.0 / n_present
    for q in range(o_S, o_S + 3 * P):
        out[q] = 0.0
    for i in range(n):
        out[o_S + diag[i]] = d_H * n_resident[i]
    for p in range(P):
        S, I, R = y[o_S + p], y[o_I + p], y[o_R + p]
        src_node = dest[p] if at_dest else origin[p]
        new_h = pressure[src_node] * inv_present[dest[p]] * S
        out[o_S + p] += -d_H * S - new_h
        out[o_I + p] += new_h - (d_H + gamma_h) * I
        out[o_R + p] += gamma_h * I - d_H * R
        g = dep[p]
        r = ret[p]
        if g != 0.0 or r != 0.0:
            h = diag[origin[p]]
            flow = g * y[o_S + h] - r * S
            out[o_S + p] += flow
            out[o_S + h] -= flow
            flow = g * y[o_I + h] - r * I
            out[o_I + p] += flow
            out[o_I + h] -= flow
            flow = g * y[o_R + h] - r * R
            out[o_R + p] += flow
            out[o_R + h] -= flow


@njit(cache=True, error_model="numpy")
def _rk4_kernel(y, h, rates, n, origin, dest, diag, dep, ret,
                w_ptr, w_idx, w_val, inv_ke, inv_kl, has_e, has_l, frozen, at_dest):
    m = y.shape[0]
    k = np.empty(m)
    acc = np.empty(m)
    tmp = np.empty(m)
    _rhs_kernel(y, k, rates, n, origin, dest, diag, dep, ret,
                w_ptr, w_idx, w_val, inv_ke, inv_kl, has_e, has_l, frozen, at_dest)
    for q in range(m):
        acc[q] = k[q]
        tmp[q] = y[q] + 0.5 * h * k[q]
    _rhs_kernel(tmp, k, rates, n, origin, dest, diag, dep, ret,
                w_ptr, w_idx, w_val, inv_ke, inv_kl, has_e, has_l, frozen, at_dest)
    for q in range(m):
        acc[q] += 2.0 * k[q]
        tmp[q] = y[q] + 0.5 * h * k[q]
    _rhs_kernel(tmp, k, rates, n, origin, dest, diag, dep, ret,
                w_ptr, w_idx, w_val, inv_ke, inv_kl, has_e, has_l, frozen, at_dest)
    for q in range(m):
        acc[q] += 2.0 * k[q]
        tmp[q] = y[q] + h * k[q]
    _rhs_kernel(tmp, k, rates, n, origin, dest, diag, dep, ret,
                w_ptr, w_idx, w_val, inv_ke, inv_kl, has_e, has_l, frozen, at_dest)
    out = np.empty(m)
    for q in range(m):
        out[q] = y[q] + h / 6.0 * (acc[q] + k[q])
    return out


def _rate_vector(p: ModelParams) -> np.ndarray:
    return np.array([p.b, p.s, p.d, p.s_L, p.d_L, p.d_m, p.d_H, p.beta_h, p.beta_m, p.gamma_h])


class NetworkModel:
    """Right-hand side of the coupled network system.

    The force of infection on residents of i present at j sums
    kernel-weighted infected mosquitoes over the neighbours of i and
    divides by the population present at j. Mosquitoes at i are infected by
    the kernel-weighted infected share of the humans present around i.

    `travel_infection="destination"` switches travellers to the mosquitoes
    around the node they are visiting instead of those around their home.

    With `frozen_aquatic` the egg and larva compartments are held at their
    initial values (normally the vector equilibrium).
    """

    def __init__(self, network: PatchNetwork, matrices: TravelMatrices, params: ModelParams,
                 normalize_kernel: bool = False, mosquito_mobility: bool = True,
                 frozen_aquatic: bool = False, travel_infection: str = "origin"):
        if travel_infection not in TRAVEL_INFECTION:
            raise ValueError(f"travel_infection must be one of {TRAVEL_INFECTION}")
        if matrices.n != network.n:
            raise ValueError("travel matrices and network differ in node count")
        self.network = network
        self.matrices = matrices
        self.params = params
        self.frozen_aquatic = frozen_aquatic
        self.layout = ODLayout.from_matrices(matrices)
        self.W = network.kernel_matrix(normalize=normalize_kernel, with_edges=mosquito_mobility)
        has_e, has_l = network.k_e > 0, network.k_l > 0
        n = network.n
        self._static = (
            self.layout.origin.astype(np.int64), self.layout.dest.astype(np.int64),
            self.layout.diag.astype(np.int64),
        )
        self._kernel = (
            self.W.indptr.astype(np.int64), self.W.indices.astype(np.int64), self.W.data.astype(float),
            np.divide(1.0, network.k_e, out=np.zeros(n), where=has_e),
            np.divide(1.0, network.k_l, out=np.zeros(n), where=has_l),
            has_e.astype(float), has_l.astype(float), bool(frozen_aquatic),
            travel_infection == "destination",
        )
        self.set_rates(matrices)

    def set_rates(self, matrices: TravelMatrices) -> None:
        """Swap travel rates (same sparsity pattern), e.g. for quarantine masks."""
        self.dep, self.ret = self.layout.pair_rates(matrices)

    def _args(self, params):
        return (_rate_vector(self.params if params is None else params), self.layout.n,
                *self._static, self.dep, self.ret, *self._kernel)

    def rhs(self, t, y, params: ModelParams | None = None) -> np.ndarray:
        out = np.empty_like(y, dtype=float)
        _rhs_kernel(np.asarray(y, dtype=float), out, *self._args(params))
        return out

    def rk4_step(self, y, h, params: ModelParams | None = None) -> np.ndarray:
        return _rk4_kernel(y, h, *self._args(params))


def network_rhs(state: NetworkState, network: PatchNetwork, matrices: TravelMatrices,
                params: ModelParams, t: float = 0.0, **model_opts) -> np.ndarray:
    """One-off evaluation of the network derivative at `state`."""
    return NetworkModel(network, matrices, params, **model_opts).rhs(t, state.y)


def seed_infection(state: NetworkState, node: int, count: float = 1.0) -> NetworkState:
    """Move `count` resident-at-home susceptibles of `node` to infected."""
    out = state.copy()
    k = state.layout.diag[node]
    if count < 0 or out.S_H[k] < count:
        raise ValueError(f"node {node} has {out.S_H[k]:g} susceptibles at home, cannot infect {count:g}")
    out.S_H[k] -= count
    out.I_H[k] += count
    return out


def infection_fraction(state: NetworkState) -> np.ndarray:
    """Infected share of the humans present at each node (0 where empty)."""
    N = state.present(state.S_H + state.I_H + state.R_H)
    I = state.present(state.I_H)
    return np.divide(I, N, out=np.zeros_like(I), where=N > 0)


def apply_quarantine(matrices: TravelMatrices, infection_fraction, threshold: float) -> TravelMatrices:
    """Block every human flow into or out of nodes at or above `threshold`.

    Returns new matrices; the input is not modified. Mosquito interactions
    are unaffected.
    """
    if not 0 < threshold <= 1:
        raise ValueError("quarantine threshold must be in (0, 1]")
    closed = np.asarray(infection_fraction) >= threshold
    if not closed.any():
        return matrices
    blocked = closed[matrices.origin] | closed[matrices.dest]
    keep = ~blocked
    return matrices.with_rates(matrices.depart * keep, matrices.ret * keep)


def apply_mutation(params: ModelParams, event: MutationSpec | None, t: float) -> ModelParams:
    if event is None or t < event.time:
        return params
    return params.replace(beta_h=event.new_beta_h, beta_m=event.new_beta_m)


AGGREGATES = ("S_H", "I_H", "R_H", "S_m", "I_m", "E", "L", "seroprevalence")


def aggregate_observables(state: NetworkState, network: PatchNetwork | None = None) -> dict:
    """Network totals plus per-node present infection."""
    obs = {k: float(getattr(state, k).sum()) for k in ("S_H", "I_H", "R_H", "S_m", "I_m", "E", "L")}
    obs["seroprevalence"] = obs["I_H"] + obs["R_H"]
    obs["I_H_present"] = state.present(state.I_H)
    obs["infection_fraction"] = infection_fraction(state)
    return obs


@dataclass
class Trajectory:
    """Sampled observables of one run.

    `totals[k]` is a time series for each name in AGGREGATES. `nodes`
    holds per-node series (columns follow `observed`) for I_H and S_H
    present and S_m, I_m. `snapshots` maps requested times to per-node
    tables.
    """

    t: np.ndarray
    totals: dict
    observed: np.ndarray
    nodes: dict
    final: NetworkState
    snapshots: dict = field(default_factory=dict)
    max_undershoot: float = 0.0

    @property
    def seroprevalence(self) -> np.ndarray:
        return self.totals["seroprevalence"]


def _node_snapshot(state: NetworkState) -> dict:
    return {
        "I_H_present": state.present(state.I_H),
        "infection_fraction": infection_fraction(state),
        "S_m": state.S_m.copy(), "I_m": state.I_m.copy(),
        "E": state.E.copy(), "L": state.L.copy(),
    }


class _Recorder:
    def __init__(self, observed, snapshot_times):
        self.observed = np.asarray(observed if observed is not None else [], dtype=np.int64)
        self.t = []
        self.totals = {k: [] for k in AGGREGATES}
        self.nodes = {k: [] for k in ("I_H", "S_H", "S_m", "I_m")}
        self.pending = sorted(snapshot_times or [])
        self.snapshots = {}

    def __call__(self, t, st: NetworkState):
        self.t.append(t)
        tot = {k: float(getattr(st, k).sum()) for k in ("S_H", "I_H", "R_H", "S_m", "I_m", "E", "L")}
        tot["seroprevalence"] = tot["I_H"] + tot["R_H"]
        for k in AGGREGATES:
            self.totals[k].append(tot[k])
        if len(self.observed):
            self.nodes["I_H"].append(st.present(st.I_H)[self.observed])
            self.nodes["S_H"].append(st.present(st.S_H)[self.observed])
            self.nodes["S_m"].append(st.S_m[self.observed])
            self.nodes["I_m"].append(st.I_m[self.observed])

    def maybe_snapshot(self, t, st, tol):
        while self.pending and self.pending[0] <= t + tol:
            self.snapshots[self.pending.pop(0)] = _node_snapshot(st)

    def result(self, final, undershoot) -> Trajectory:
        k = len(self.observed)
        nodes = {name: (np.array(v) if v else np.zeros((len(self.t), k)))
                 for name, v in self.nodes.items()}
        return Trajectory(np.array(self.t), {k: np.array(v) for k, v in self.totals.items()},
                          self.observed, nodes, final, self.snapshots, undershoot)


def rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(state0: NetworkState, model: NetworkModel, t0: float = 0.0, t1: float = 400.0,
              h: float = DEFAULT_STEP, events: EventSpec | None = None,
              output_interval: float = 1.0, observed=None, snapshot_times=None) -> Trajectory:
    """Classical RK4 with fixed step `h` from t0 to t1.

    Events (parameter switch, quarantine re-evaluation) act only at step
    boundaries. Negative values left by the discretization are clamped to
    zero after every step; the most negative pre-clamp value is reported.
    """
    if h <= 0:
        raise ValueError("step size must be > 0")
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if state0.layout is not model.layout and state0.layout.size != model.layout.size:
        raise ValueError("state does not match the model layout")
    events = events or EventSpec()
    tol = 1e-9 * max(1.0, abs(t1))
    rec = _Recorder(observed, snapshot_times)
    st = NetworkState(model.layout, state0.y.copy())
    rec(t0, st)
    rec.maybe_snapshot(t0, st, tol)

    base_rates = model.matrices
    quar = events.quarantine
    next_check = t0
    next_out = t0 + output_interval
    undershoot = 0.0
    n_steps = int(np.ceil((t1 - t0) / h - 1e-9))
    t = t0
    for k in range(n_steps):
        params = apply_mutation(model.params, events.mutation, t)
        if quar is not None and t >= next_check - tol:
            model.set_rates(apply_quarantine(base_rates, infection_fraction(st), quar.threshold))
            next_check += quar.check_interval
        step = min(h, t1 - t)
        y = model.rk4_step(st.y, step, params)
        t = t0 + (k + 1) * h if k + 1 < n_steps else t1
        bad = ~np.isfinite(y)
        if bad.any():
            comp, idx = st.locate(int(np.flatnonzero(bad)[0]))
            raise SimulationError(f"non-finite value at t={t:g} in {comp}[{idx}]")
        low = y.min()
        if low < 0:
            undershoot = min(undershoot, float(low))
            np.maximum(y, 0.0, out=y)
        st.y = y
        if t >= next_out - tol or k + 1 == n_steps:
            rec(t, st)
            while next_out <= t + tol:
                next_out += output_interval
        rec.maybe_snapshot(t, st, tol)
    if quar is not None:
        model.set_rates(base_rates)
    if undershoot < -1e-9:
        # clamping adds mass, so conservation no longer holds exactly
        log.warning("step h=%g clamped values as low as %.3g; use a smaller step", h, undershoot)
    return rec.result(st, undershoot)
