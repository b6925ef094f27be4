"""Experiment drivers: spread shift, mosquito-mobility ablation, quarantine
sweep, infection-rate grid, mutation scenario and mobility replicates."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core_model import ModelParams
from .engine import (
    EventSpec,
    MutationSpec,
    NetworkModel,
    QuarantineSpec,
    Trajectory,
    integrate,
    network_dfe,
    seed_infection,
)
from .geo_ingest import IslandConfig, synthesize_island
from .mobility import MobilityGenConfig, TravelMatrices, generate_mobility
from .network import PatchNetwork

log = logging.getLogger(__name__)

PRE_MUTATION = (0.0118, 0.0101)
POST_MUTATION = (0.0245, 0.0161)
ABLATION_BETAS = (0.2, 0.15)


@dataclass(frozen=True)
class RunSettings:
    """Integration and seeding shared by the drivers."""

    horizon: float = 400.0
    h: float = 0.1
    t0: float = 0.0
    output_interval: float = 1.0
    seed_node: int | None = None  # None: most populous node
    seed_count: float = 1.0
    model_options: dict = field(default_factory=dict)

    def seed_at(self, network: PatchNetwork) -> int:
        return int(np.argmax(network.population)) if self.seed_node is None else self.seed_node


@dataclass(frozen=True)
class DeskScenario:
    """Reference desk-scale island and mobility.

    Six residents per node keeps the published infection rates near their
    epidemic threshold on a 500-node island.
    """

    island: IslandConfig = IslandConfig(node_count=500, population_total=3000, seed=1)
    mobility: MobilityGenConfig = MobilityGenConfig(destinations=10, seed=2)
    params: ModelParams = ModelParams()

    def build(self) -> tuple[PatchNetwork, TravelMatrices]:
        net = synthesize_island(self.island, self.params)
        return net, generate_mobility(net.xy, self.mobility)


def peak(t, series) -> tuple[float, float]:
    """(time, value) of the maximum; first occurrence wins ties."""
    k = int(np.argmax(series))
    return float(t[k]), float(series[k])


def seeded_run(network, matrices, params, settings: RunSettings, events=None,
               observed=None, snapshot_times=None, **model_opts) -> Trajectory:
    opts = {**settings.model_options, **model_opts}
    model = NetworkModel(network, matrices, params, **opts)
    st = network_dfe(matrices, network, params, layout=model.layout)
    st = seed_infection(st, settings.seed_at(network), settings.seed_count)
    return integrate(st, model, settings.t0, settings.horizon, settings.h, events=events,
                     output_interval=settings.output_interval, observed=observed,
                     snapshot_times=snapshot_times)


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def run_spread_scenario(network, matrices, params, observed_nodes, settings=RunSettings()):
    """Seed one infection and follow S_H, I_H, S_m, I_m at the observed nodes.

    Human series are divided by the node's present population at the
    disease-free state and mosquito series by its adult females there.
    """
    observed = np.asarray(observed_nodes, dtype=np.int64)
    if observed.size and (observed.min() < 0 or observed.max() >= network.n):
        raise IndexError("observed node out of range")
    traj = seeded_run(network, matrices, params, settings, observed=observed)
    dfe = network_dfe(matrices, network, params)
    humans = dfe.present(dfe.S_H)[observed]
    mosq = dfe.S_m[observed]
    scale = {"S_H": humans, "I_H": humans, "S_m": mosq, "I_m": mosq}
    norm = {k: np.divide(traj.nodes[k], s, out=np.zeros_like(traj.nodes[k]), where=s > 0)
            for k, s in scale.items()}
    return traj, norm


def run_mosquito_mobility_comparison(network, matrices, params=None, settings=RunSettings()):
    """Same seeded run with and without the mosquito kernel edges."""
    if params is None:
        params = ModelParams(beta_h=ABLATION_BETAS[0], beta_m=ABLATION_BETAS[1])
    with_kernel = seeded_run(network, matrices, params, settings, mosquito_mobility=True)
    without = seeded_run(network, matrices, params, settings, mosquito_mobility=False)
    return with_kernel, without


def _quarantine_job(job):
    network, matrices, params, settings, threshold, interval = job
    events = EventSpec(quarantine=QuarantineSpec(threshold, interval)) if threshold is not None else None
    tr = seeded_run(network, matrices, params, settings, events=events)
    return {"t": tr.t, "I_H": tr.totals["I_H"], "seroprevalence": tr.seroprevalence}


def run_quarantine_sweep(network, matrices, params, thresholds, settings=RunSettings(),
                         check_interval: float = 1.0, workers: int = 1) -> dict:
    """One run per threshold plus the uncontrolled baseline (key None)."""
    for thr in thresholds:
        if not 0 < thr <= 1:
            raise ValueError(f"threshold {thr} outside (0, 1]")
    keys = [None, *thresholds]
    jobs = [(network, matrices, params, settings, k, check_interval) for k in keys]
    results = _map(_quarantine_job, jobs, workers)
    return dict(zip(keys, results))


@dataclass
class SweepGrid:
    beta_h: np.ndarray
    beta_m: np.ndarray
    seroprevalence: np.ndarray  # shape (len(beta_h), len(beta_m)), fraction of population
    horizon: float = 400.0

    def __post_init__(self):
        self.beta_h = np.asarray(self.beta_h, dtype=float)
        self.beta_m = np.asarray(self.beta_m, dtype=float)
        self.seroprevalence = np.asarray(self.seroprevalence, dtype=float)
        if self.seroprevalence.shape != (len(self.beta_h), len(self.beta_m)):
            raise ValueError("grid values do not match the axes")
        if np.any(self.seroprevalence < 0):
            raise ValueError("seroprevalence values must be >= 0")
        if np.any(np.diff(self.beta_h) <= 0) or np.any(np.diff(self.beta_m) <= 0):
            raise ValueError("grid axes must be strictly increasing")

    def rows(self):
        for a, bh in enumerate(self.beta_h):
            for b, bm in enumerate(self.beta_m):
                yield float(bh), float(bm), float(self.seroprevalence[a, b])


def _grid_job(job):
    network, matrices, params, settings = job
    tr = seeded_run(network, matrices, params, settings)
    return tr.seroprevalence[-1] / network.population.sum()


def run_beta_grid(network, matrices, beta_h_values, beta_m_values, params=None,
                  settings=RunSettings(), workers: int = 1) -> SweepGrid:
    """Final seroprevalence fraction after `settings.horizon` days for each (beta_h, beta_m)."""
    params = params or ModelParams()
    if not len(beta_h_values) or not len(beta_m_values):
        raise ValueError("empty grid")
    jobs = [(network, matrices, params.replace(beta_h=bh, beta_m=bm), settings)
            for bh in beta_h_values for bm in beta_m_values]
    vals = np.array(_map(_grid_job, jobs, workers)).reshape(len(beta_h_values), len(beta_m_values))
    return SweepGrid(beta_h_values, beta_m_values, vals, settings.horizon)


def bilinear_interpolate(grid: SweepGrid, beta_h: float, beta_m: float) -> float:
    """Bilinear blend of the four grid values around (beta_h, beta_m)."""
    x, y = grid.beta_h, grid.beta_m
    if not (x[0] <= beta_h <= x[-1] and y[0] <= beta_m <= y[-1]):
        raise ValueError(f"({beta_h}, {beta_m}) lies outside the grid")
    i = min(max(int(np.searchsorted(x, beta_h, side="right")) - 1, 0), max(len(x) - 2, 0))
    j = min(max(int(np.searchsorted(y, beta_m, side="right")) - 1, 0), max(len(y) - 2, 0))
    if len(x) == 1:
        u, i1 = 0.0, i
    else:
        u, i1 = (beta_h - x[i]) / (x[i + 1] - x[i]), i + 1
    if len(y) == 1:
        v, j1 = 0.0, j
    else:
        v, j1 = (beta_m - y[j]) / (y[j + 1] - y[j]), j + 1
    z = grid.seroprevalence
    return float((1 - u) * (1 - v) * z[i, j] + u * (1 - v) * z[i1, j]
                 + (1 - u) * v * z[i, j1] + u * v * z[i1, j1])


def run_mutation_scenario(network, matrices, params_pre: ModelParams, mutation: MutationSpec,
                          settings=RunSettings(horizon=560.0)) -> Trajectory:
    if mutation.time >= settings.horizon:
        raise ValueError("mutation must occur before the horizon")
    return seeded_run(network, matrices, params_pre, settings, events=EventSpec(mutation=mutation))


def weekly_new_cases(traj: Trajectory, week_starts=None) -> tuple[np.ndarray, np.ndarray]:
    """New infections per week from seroprevalence differences.

    Weeks start at `week_starts` (default every 7 days from the first
    sample) and must end inside the trajectory.
    """
    t, sero = traj.t, traj.seroprevalence
    if week_starts is None:
        week_starts = np.arange(t[0], t[-1] - 7 + 1e-9, 7.0)
    week_starts = np.asarray(week_starts, dtype=float)
    return week_starts, np.interp(week_starts + 7, t, sero) - np.interp(week_starts, t, sero)


def find_waves(series, min_drop: float = 0.2, min_height: float = 0.05) -> list[int]:
    """Indices of wave peaks.

    Two local maxima count as separate waves when the lowest value between
    them is at least `min_drop` (relative) below the smaller of the two;
    otherwise they merge and the higher one is kept. Peaks lower than
    `min_height` times the global maximum are ignored.
    """
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        return []
    floor = max(min_height * s.max(), 0.0)
    interior = [k for k in range(s.size)
                if s[k] > floor and (k == 0 or s[k] > s[k - 1]) and (k == s.size - 1 or s[k] >= s[k + 1])]
    peaks: list[int] = []
    for k in interior:
        if not peaks:
            peaks.append(k)
            continue
        last = peaks[-1]
        trough = s[last:k + 1].min()
        if trough <= (1 - min_drop) * min(s[last], s[k]):
            peaks.append(k)
        elif s[k] > s[last]:
            peaks[-1] = k
    return peaks


def read_reference_cases(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["week_start_day", "new_cases"]:
            raise ValueError(f"{path}: expected header week_start_day,new_cases")
        rows = [(float(a), float(b)) for a, b in reader]
    weeks = np.array([r[0] for r in rows])
    if len(weeks) > 1 and np.any(np.diff(weeks) <= 0):
        raise ValueError(f"{path}: weeks must be increasing")
    return weeks, np.array([r[1] for r in rows])


def compare_timeseries(traj: Trajectory, reference) -> dict:
    """RMSE, peak-week offset (days) and cumulative-case gap against weekly cases.

    `reference` is a path to a `week_start_day,new_cases` file or a
    (weeks, cases) pair. Only weeks fully covered by the run are used.
    """
    weeks, cases = read_reference_cases(reference) if isinstance(reference, (str, bytes)) or hasattr(reference, "__fspath__") else map(np.asarray, reference)
    inside = (weeks >= traj.t[0] - 1e-9) & (weeks + 7 <= traj.t[-1] + 1e-9)
    if not inside.any():
        raise ValueError("reference and simulation do not overlap")
    weeks, cases = weeks[inside], cases[inside]
    _, sim = weekly_new_cases(traj, weeks)
    return {
        "rmse": float(np.sqrt(np.mean((sim - cases) ** 2))),
        "peak_offset_days": float(weeks[np.argmax(sim)] - weeks[np.argmax(cases)]),
        "final_seroprevalence_gap": float(sim.sum() - cases.sum()),
        "weeks": int(len(weeks)),
    }


@dataclass
class ReplicateStats:
    """Order statistics of I_H over replicates.

    Node arrays have shape (time, observed node); network arrays are the
    same statistics of the network-wide I_H total.
    """

    t: np.ndarray
    observed: np.ndarray
    population: np.ndarray
    node: dict
    network: dict
    total_population: float

    def table(self) -> list[dict]:
        """Per observed node: population, max SD, its date and SD as % of population."""
        out = []
        for c, node in enumerate(self.observed):
            k = int(np.argmax(self.node["sd"][:, c]))
            sd = float(self.node["sd"][k, c])
            pop = float(self.population[c])
            out.append({"node": int(node), "population": pop, "max_sd": sd, "t_days": float(self.t[k]),
                        "pct_population": 100.0 * sd / pop if pop > 0 else 0.0})
        return out

    def network_summary(self) -> dict:
        k = int(np.argmax(self.network["sd"]))
        sd = float(self.network["sd"][k])
        return {"max_sd": sd, "t_days": float(self.t[k]),
                "pct_population": 100.0 * sd / self.total_population if self.total_population else 0.0}


STAT_NAMES = ("min", "q1", "median", "q3", "max", "sd")


def _order_stats(samples: np.ndarray) -> dict:
    # samples: (replicate, ...)
    q = np.quantile(samples, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    sd = samples.std(axis=0, ddof=1) if len(samples) > 1 else np.zeros(samples.shape[1:])
    sd[q[4] == q[0]] = 0.0  # identical samples: avoid rounding noise in the mean
    return dict(zip(STAT_NAMES, [*q, sd]))


def _replicate_job(job):
    network, gen_cfg, seed, params, settings, events, observed = job
    tm = generate_mobility(network.xy, gen_cfg, seed=seed)
    tr = seeded_run(network, tm, params, settings, events=events, observed=observed)
    return tr.t, tr.nodes["I_H"], tr.totals["I_H"]


def run_replicates(network, gen_cfg: MobilityGenConfig, params: ModelParams, observed_nodes,
                   n_replicates: int = 30, master_seed: int = 0, settings=RunSettings(),
                   events: EventSpec | None = None, seeds=None, workers: int = 1) -> ReplicateStats:
    """Regenerate the mobility destinations per replicate and summarize I_H.

    Replicate seeds are spawned from `master_seed`; pass `seeds` to set
    them explicitly. Only the destinations change between replicates.
    """
    if seeds is None:
        if n_replicates < 2:
            raise ValueError("need at least 2 replicates")
        seeds = np.random.SeedSequence(master_seed).spawn(n_replicates)
    observed = np.asarray(observed_nodes, dtype=np.int64)
    jobs = [(network, gen_cfg, s, params, settings, events, observed) for s in seeds]
    results = _map(_replicate_job, jobs, workers)
    t = results[0][0]
    node_samples = np.stack([r[1] for r in results])
    net_samples = np.stack([r[2] for r in results])
    pop = network.population[observed]
    return ReplicateStats(t, observed, pop, _order_stats(node_samples), _order_stats(net_samples),
                          float(network.population.sum()))
