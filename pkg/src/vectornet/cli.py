"""Command-line entry point.

Exit status: 0 success, 1 validation error (bad config, bad input file,
failed check), 2 aborted run.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks, experiments, outputs
from .config import ConfigError, RunConfig, parse_config
from .engine import SimulationError
from .experiments import RunSettings
from .geo_ingest import distribute_population, load_cells, load_intersections, synthesize_island
from .mobility import MobilityGenConfig, generate_mobility, read_mobility_csv, write_mobility_csv
from .network import build_network, graph_metrics, read_nodes_csv, write_edges_csv, write_nodes_csv

log = logging.getLogger("vectornet")

COMMANDS = ("build", "gen-mobility", "simulate", "sweep", "quarantine", "replicates",
            "metrics", "compare", "verify")


def _seed_entropy(ss: np.random.SeedSequence) -> dict:
    return {"entropy": ss.entropy, "spawn_key": list(ss.spawn_key)}


class Context:
    """Materialized inputs of one run. All random streams descend from `cfg.seed`."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        root = np.random.SeedSequence(cfg.seed)
        self._island_ss, self._mobility_ss, self._replicate_ss = root.spawn(3)
        self.seeds = {"master": cfg.seed}
        self._network = None
        self._matrices = None
        self.out = Path(cfg.output_dir)
        if not self.out.is_absolute():
            self.out = Path.cwd() / self.out
        self.files: list[str] = []

    @property
    def network(self):
        if self._network is None:
            cfg, net = self.cfg, self.cfg.network
            if net.nodes is not None:
                xy, pop, area = read_nodes_csv(cfg.resolve(net.nodes))
                self._network = build_network(xy, pop, cfg.params, net.d_max, area=area)
            elif net.intersections is not None:
                xy = load_intersections(cfg.resolve(net.intersections))
                xy, pop = distribute_population(load_cells(cfg.resolve(net.cells)), xy)
                self._network = build_network(xy, pop, cfg.params, net.d_max)
            else:
                island = net.island or experiments.DeskScenario().island
                seed = int(self._island_ss.generate_state(1)[0])
                self.seeds["island"] = seed
                self._network = synthesize_island(dataclasses.replace(island, seed=seed), cfg.params, net.d_max)
        return self._network

    @property
    def gen_config(self) -> MobilityGenConfig:
        gen = self.cfg.mobility.generator or MobilityGenConfig()
        return dataclasses.replace(gen, return_rate=self.cfg.mobility.return_rate)

    @property
    def matrices(self):
        if self._matrices is None:
            mob = self.cfg.mobility
            if mob.file is not None:
                self._matrices = read_mobility_csv(self.cfg.resolve(mob.file), self.network.n)
            else:
                self.seeds["mobility"] = _seed_entropy(self._mobility_ss)
                self._matrices = generate_mobility(self.network.xy, self.gen_config, seed=self._mobility_ss)
        return self._matrices

    def settings(self, h=None) -> RunSettings:
        it, sim = self.cfg.integrator, self.cfg.simulation
        return RunSettings(horizon=it.t1, h=h or it.h, t0=it.t0, output_interval=it.output_interval,
                           seed_node=sim.seed_node, seed_count=sim.seed_count,
                           model_options=self.model_options())

    def model_options(self) -> dict:
        sim = self.cfg.simulation
        return {"travel_infection": sim.travel_infection, "mosquito_mobility": sim.mosquito_mobility,
                "normalize_kernel": sim.normalize_kernel, "frozen_aquatic": sim.frozen_aquatic}

    def observed(self):
        obs = np.asarray(self.cfg.simulation.observed_nodes, dtype=np.int64)
        if obs.size and (obs.min() < 0 or obs.max() >= self.network.n):
            raise ConfigError("simulation.observed_nodes: node id out of range")
        return obs

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return self.out / name


def cmd_build(ctx: Context) -> int:
    net = ctx.network
    write_nodes_csv(ctx.path("nodes.csv"), net)
    write_edges_csv(ctx.path("edges.csv"), net.edges)
    print(f"{net.n} nodes, {len(net.edges.i)} mosquito links -> {ctx.out}")
    return 0


def cmd_gen_mobility(ctx: Context) -> int:
    tm = ctx.matrices
    write_mobility_csv(ctx.path("mobility.csv"), tm)
    print(f"{len(tm)} travel pairs -> {ctx.out / 'mobility.csv'}")
    return 0


def cmd_simulate(ctx: Context) -> int:
    tr = experiments.seeded_run(ctx.network, ctx.matrices, ctx.cfg.params, ctx.settings(),
                                events=ctx.cfg.events, observed=ctx.observed(),
                                snapshot_times=list(ctx.cfg.simulation.snapshot_times))
    outputs.write_timeseries(ctx.path("timeseries.csv"), tr)
    if len(tr.observed):
        outputs.write_node_series(ctx.path("node_timeseries.csv"), tr)
    for k, (t, snap) in enumerate(sorted(tr.snapshots.items())):
        outputs.write_snapshot(ctx.path(f"snapshot_{k:03d}_t{t:g}.csv"), snap)
    t_pk, v_pk = experiments.peak(tr.t, tr.totals["I_H"])
    print(f"peak I_H {v_pk:.6g} at day {t_pk:g}; final seroprevalence {tr.seroprevalence[-1]:.6g}")
    if tr.max_undershoot < 0:
        log.info("largest negative value clamped: %.3e", tr.max_undershoot)
    return 0


def cmd_sweep(ctx: Context) -> int:
    ex = ctx.cfg.experiment
    if not ex.beta_h_values or not ex.beta_m_values:
        raise ConfigError("experiment.beta_h_values and experiment.beta_m_values are required for sweep")
    grid = experiments.run_beta_grid(ctx.network, ctx.matrices, list(ex.beta_h_values), list(ex.beta_m_values),
                                     ctx.cfg.params, ctx.settings(), workers=ex.workers)
    outputs.write_grid(ctx.path("grid.csv"), grid)
    print(f"{grid.seroprevalence.size} grid cells -> {ctx.out / 'grid.csv'}")
    return 0


def cmd_quarantine(ctx: Context) -> int:
    ex = ctx.cfg.experiment
    q = ctx.cfg.events.quarantine
    res = experiments.run_quarantine_sweep(ctx.network, ctx.matrices, ctx.cfg.params, list(ex.thresholds),
                                           ctx.settings(), check_interval=q.check_interval if q else 1.0,
                                           workers=ex.workers)
    outputs.write_quarantine(ctx.path("quarantine.csv"), res)
    base = res[None]["I_H"].max()
    for thr, r in res.items():
        if thr is not None:
            print(f"threshold {thr:g}: peak I_H {r['I_H'].max():.6g} ({r['I_H'].max() / base:.3f} of baseline)")
    return 0


def cmd_replicates(ctx: Context) -> int:
    ex = ctx.cfg.experiment
    seeds = ctx._replicate_ss.spawn(ex.n_replicates)
    ctx.seeds["replicates"] = [_seed_entropy(s) for s in seeds]
    if ex.n_replicates < 2:
        raise ConfigError("experiment.n_replicates: must be >= 2")
    stats = experiments.run_replicates(ctx.network, ctx.gen_config, ctx.cfg.params, ctx.observed(),
                                       settings=ctx.settings(), events=ctx.cfg.events, seeds=seeds,
                                       workers=ex.workers)
    outputs.write_replicate_stats(ctx.path("replicate_stats.csv"), stats)
    outputs.write_replicate_table(ctx.path("replicate_table.csv"), stats)
    net = stats.network_summary()
    print(f"network max SD {net['max_sd']:.6g} infected at day {net['t_days']:g} "
          f"({net['pct_population']:.4f}% of population)")
    return 0


def cmd_metrics(ctx: Context) -> int:
    net, tm = ctx.network, ctx.matrices
    human = graph_metrics(tm.origin, tm.dest, net.n)
    mosq = graph_metrics(net.edges.i, net.edges.j, net.n)
    path = ctx.path("metrics.csv")
    with open(path, "w") as fh:
        fh.write("metric,human,mosquito\n")
        for (name, a), (_, b) in zip(human.as_rows(), mosq.as_rows()):
            fh.write(f"{name},{a},{b}\n")
            print(f"{name:<22}{a!s:>12}{b!s:>12}")
    return 0


def cmd_compare(ctx: Context) -> int:
    ref = ctx.cfg.experiment.reference
    if ref is None:
        raise ConfigError("experiment.reference is required for compare")
    tr = experiments.seeded_run(ctx.network, ctx.matrices, ctx.cfg.params, ctx.settings(), events=ctx.cfg.events)
    metrics = experiments.compare_timeseries(tr, ctx.cfg.resolve(ref))
    outputs.write_timeseries(ctx.path("timeseries.csv"), tr)
    ctx.path("comparison.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    for k, v in metrics.items():
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    return 0


def cmd_verify(ctx: Context) -> int:
    sim, it = ctx.cfg.simulation, ctx.cfg.integrator
    seed = ctx.settings().seed_at(ctx.network)
    results = checks.run_checks(ctx.network, ctx.matrices, ctx.cfg.params, seed, sim.seed_count,
                                horizon=it.t1 - it.t0, h=it.h, **ctx.model_options())
    with open(ctx.path("verify.txt"), "w") as fh:
        for r in results:
            print(r.line())
            fh.write(r.line() + "\n")
    return 0 if all(r.passed for r in results) else 1


HANDLERS = {
    "build": cmd_build, "gen-mobility": cmd_gen_mobility, "simulate": cmd_simulate,
    "sweep": cmd_sweep, "quarantine": cmd_quarantine, "replicates": cmd_replicates,
    "metrics": cmd_metrics, "compare": cmd_compare, "verify": cmd_verify,
}


def dispatch(command: str, cfg: RunConfig) -> int:
    ctx = Context(cfg)
    status = HANDLERS[command](ctx)
    outputs.write_manifest(ctx.out, command, cfg.to_dict(), cfg.digest(), ctx.seeds, ctx.files)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vectornet", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("config", help="YAML run configuration")
    ap.add_argument("-o", "--output-dir", help="override output_dir from the config")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.output_dir:
            cfg = dataclasses.replace(cfg, output_dir=args.output_dir)
        return dispatch(args.command, cfg)
    except (ConfigError, ValueError, KeyError, OSError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulationError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
