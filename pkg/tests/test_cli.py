import json

import pytest
import yaml

from vectornet.cli import main
from vectornet.config import ConfigError, parse_config
from vectornet.engine import MutationSpec

SMALL_ISLAND = {"node_count": 40, "width_m": 2000.0, "height_m": 2000.0, "population_total": 400}


def write_cfg(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def test_minimal_config_defaults():
    cfg = parse_config({"seed": 3})
    assert cfg.integrator.h == 0.05
    assert cfg.network.d_max == 200.0
    assert cfg.mobility.return_rate == 1.0
    assert cfg.params.beta_h == 0.0


def test_unknown_key_suggests_spelling():
    with pytest.raises(ConfigError, match="params.betaH.*beta_h"):
        parse_config({"seed": 1, "params": {"betaH": 0.1}})
    with pytest.raises(ConfigError, match="intergrator.*integrator"):
        parse_config({"seed": 1, "intergrator": {}})


@pytest.mark.parametrize("data, msg", [
    ({}, "missing required key 'seed'"),
    ({"seed": 1.5}, "seed: expected an integer"),
    ({"seed": 1, "integrator": {"h": -1.0}}, "integrator.h"),
    ({"seed": 1, "integrator": {"h": "small"}}, "integrator.h: expected a number"),
    ({"seed": 1, "events": {"mutation": {"time": 3}}}, "missing required key 'events.mutation.new_beta_h'"),
    ({"seed": 1, "events": {"quarantine": {"threshold": 2.0}}}, "events.quarantine"),
    ({"seed": 1, "mobility": {"generator": {"seed": 2}}}, "top-level 'seed'"),
    ({"seed": 1, "simulation": {"travel_infection": "air"}}, "travel_infection"),
    ({"seed": 1, "network": {"nodes": "missing.csv"}}, "file not found"),
])
def test_config_errors_name_the_key(data, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(data)


def test_mutation_block_populates_events():
    cfg = parse_config({"seed": 1, "events": {"mutation": {"time": 240, "new_beta_h": 0.0245,
                                                           "new_beta_m": 0.0161}}})
    assert cfg.events.mutation == MutationSpec(240.0, 0.0245, 0.0161)
    assert cfg.events.quarantine is None


def test_config_digest_tracks_content():
    a, b = parse_config({"seed": 1}), parse_config({"seed": 1})
    assert a.digest() == b.digest()
    assert a.digest() != parse_config({"seed": 2}).digest()


def test_metrics_on_path_network(tmp_path, capsys):
    (tmp_path / "nodes.csv").write_text("id,x_m,y_m,population\n0,0,0,10\n1,150,0,10\n2,300,0,10\n")
    (tmp_path / "mob.csv").write_text("origin,dest,depart_rate,return_rate\n0,1,0.5,1\n1,2,0.5,1\n")
    cfg = write_cfg(tmp_path, {"seed": 1, "network": {"nodes": "nodes.csv"}, "mobility": {"file": "mob.csv"},
                               "output_dir": str(tmp_path / "out")})
    assert main(["metrics", str(cfg)]) == 0
    rows = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert rows[0] == "metric,human,mosquito"
    assert rows[1:] == ["number of nodes,3,3", "number of links,2,2", "average degree,1.333,1.333",
                        "connected components,1,1", "diameter,2,2"]


def test_missing_nodes_file_is_validation_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"seed": 1, "network": {"nodes": "nope.csv"}, "output_dir": str(tmp_path / "out")})
    assert main(["simulate", str(cfg)]) == 1
    assert "nope.csv" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_bad_config_file_exit_code(tmp_path):
    assert main(["simulate", str(tmp_path / "absent.yaml")]) == 1
    cfg = write_cfg(tmp_path, {"seed": 1, "params": {"betaH": 1}})
    assert main(["simulate", str(cfg)]) == 1


def test_runtime_abort_exit_code(tmp_path, capsys):
    (tmp_path / "nodes.csv").write_text("id,x_m,y_m,population\n0,0,0,10\n1,150,0,10\n")
    (tmp_path / "mob.csv").write_text("origin,dest,depart_rate,return_rate\n0,1,1e308,1e308\n")
    cfg = write_cfg(tmp_path, {"seed": 1, "network": {"nodes": "nodes.csv"}, "mobility": {"file": "mob.csv"},
                               "integrator": {"t1": 1.0}, "output_dir": str(tmp_path / "out")})
    assert main(["simulate", str(cfg)]) == 2
    assert "non-finite" in capsys.readouterr().err


def _island_cfg(tmp_path, out, **extra):
    data = {"seed": 11, "network": {"island": SMALL_ISLAND}, "mobility": {"generator": {"destinations": 5}},
            "params": {"beta_h": 0.2, "beta_m": 0.15}, "integrator": {"t1": 30.0, "h": 0.1},
            "simulation": {"observed_nodes": [0, 1], "snapshot_times": [10.0]}, "output_dir": str(out)}
    data.update(extra)
    return write_cfg(tmp_path, data, name=f"{out.name}.yaml")


def test_simulate_is_byte_reproducible(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["simulate", str(_island_cfg(tmp_path, out))]) == 0
    files = sorted(p.name for p in outs[0].iterdir())
    assert {"timeseries.csv", "node_timeseries.csv", "manifest.json"} <= set(files)
    assert any(f.startswith("snapshot_") for f in files)
    for name in files:
        a, b = (o / name for o in outs)
        if name == "manifest.json":
            ma, mb = json.loads(a.read_text()), json.loads(b.read_text())
            ma["config"].pop("output_dir")
            mb["config"].pop("output_dir")
            assert ma["seeds"] == mb["seeds"] and ma["config"] == mb["config"]
        else:
            assert a.read_bytes() == b.read_bytes(), name
    header = (outs[0] / "timeseries.csv").read_text().splitlines()[0]
    assert header == "t_days,S_H,I_H,R_H,S_m,I_m,E,L,seroprevalence"


def test_manifest_contents(tmp_path):
    out = tmp_path / "m"
    assert main(["build", str(_island_cfg(tmp_path, out))]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "build" and m["seeds"]["master"] == 11
    assert len(m["config_sha256"]) == 64
    assert {"numpy", "scipy", "vectornet"} <= set(m["software"])
    assert m["outputs"] == ["edges.csv", "nodes.csv"]


def test_verify_passes_on_island(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["verify", str(_island_cfg(tmp_path, out))]) == 0
    lines = (out / "verify.txt").read_text().splitlines()
    assert len(lines) == 5 and all(line.startswith("PASS") for line in lines)


def test_build_then_simulate_from_files(tmp_path):
    out = tmp_path / "b"
    assert main(["build", str(_island_cfg(tmp_path, out))]) == 0
    assert main(["gen-mobility", str(_island_cfg(tmp_path, out))]) == 0
    cfg = write_cfg(tmp_path, {"seed": 11, "network": {"nodes": str(out / "nodes.csv")},
                               "mobility": {"file": str(out / "mobility.csv")},
                               "params": {"beta_h": 0.2, "beta_m": 0.15}, "integrator": {"t1": 30.0, "h": 0.1},
                               "output_dir": str(tmp_path / "c")})
    assert main(["simulate", str(cfg)]) == 0
    assert main(["simulate", str(_island_cfg(tmp_path, tmp_path / "d"))]) == 0
    a = (tmp_path / "c" / "timeseries.csv").read_text().splitlines()
    b = (tmp_path / "d" / "timeseries.csv").read_text().splitlines()
    # same network and matrices, up to float round-tripping through CSV
    assert len(a) == len(b)
    for ra, rb in zip(a[1:], b[1:]):
        assert [float(x) for x in ra.split(",")] == pytest.approx([float(x) for x in rb.split(",")], rel=1e-12)


def test_experiment_commands(tmp_path):
    extra = {"experiment": {"beta_h_values": [0.0, 0.2], "beta_m_values": [0.0, 0.15], "n_replicates": 3,
                            "thresholds": [1.0, 0.1]}}
    out = tmp_path / "x"
    cfg = _island_cfg(tmp_path, out, **extra)
    for cmd in ("sweep", "quarantine", "replicates"):
        assert main([cmd, str(cfg)]) == 0, cmd
    assert (out / "grid.csv").read_text().splitlines()[0] == "beta_h,beta_m,seroprevalence"
    assert (out / "replicate_stats.csv").read_text().splitlines()[0] == "t_days,node_id,min,q1,median,q3,max,sd"
    assert (out / "quarantine.csv").read_text().splitlines()[0] == "threshold,t_days,I_H,seroprevalence"
    m = json.loads((out / "manifest.json").read_text())
    assert len(m["seeds"]["replicates"]) == 3


def test_compare_command(tmp_path):
    ref = tmp_path / "ref.csv"
    ref.write_text("week_start_day,new_cases\n0,5\n7,20\n14,10\n")
    out = tmp_path / "cmp"
    cfg = _island_cfg(tmp_path, out, experiment={"reference": str(ref)})
    assert main(["compare", str(cfg)]) == 0
    got = json.loads((out / "comparison.json").read_text())
    assert got["weeks"] == 3 and got["rmse"] >= 0


def test_sweep_requires_grid(tmp_path):
    assert main(["sweep", str(_island_cfg(tmp_path, tmp_path / "s"))]) == 1
