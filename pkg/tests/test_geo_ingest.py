import logging

import numpy as np
import pytest

from vectornet.geo_ingest import (
    GridCell,
    IslandConfig,
    distribute_population,
    load_cells,
    load_intersections,
    project_lonlat,
    synthesize_island,
)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_intersections(tmp_path, caplog):
    p = _write(tmp_path / "i.csv", "x_m,y_m\n0,0\n10,0\n0,10\n")
    assert load_intersections(p).shape == (3, 2)
    p = _write(tmp_path / "d.csv", "x_m,y_m\n0,0\n0,0\n5,5\n0,0\n")
    with caplog.at_level(logging.WARNING):
        xy = load_intersections(p)
    assert xy.tolist() == [[0, 0], [5, 5]]
    assert "2 duplicate" in caplog.text


@pytest.mark.parametrize("body, msg", [
    ("x_m,y_m\n", "no nodes"),
    ("x_m,y_m\n1,2\n3,four\n", ":3:"),
    ("x_m,y_m\n1,2\n3,inf\n", "non-finite"),
    ("x_m,y_m\n1,2,3\n", ":2:"),
    ("x,y\n1,2\n", "header"),
])
def test_load_intersections_errors(tmp_path, body, msg):
    with pytest.raises(ValueError, match=msg):
        load_intersections(_write(tmp_path / "i.csv", body))


def test_load_cells(tmp_path):
    cells = load_cells(_write(tmp_path / "c.csv", "x0_m,y0_m,size_m,population\n0,0,1000,42\n"))
    assert cells == [GridCell(0, 0, 1000, 42)]


def test_even_split():
    xy = [[100, 100], [200, 200], [300, 300], [400, 400]]
    _, pop = distribute_population([GridCell(0, 0, 1000, 100)], xy)
    assert pop.tolist() == [25, 25, 25, 25]


def test_empty_cell_spawns_node():
    xy, pop = distribute_population([GridCell(0, 0, 1000, 5), GridCell(1000, 0, 1000, 100)], [[10, 10]])
    assert xy.tolist() == [[10, 10], [1500, 500]]
    assert pop.tolist() == [5, 100]


def test_remainders_go_to_lowest_ids():
    _, pop = distribute_population([GridCell(0, 0, 1000, 10)], [[1, 1], [2, 2], [3, 3]])
    assert pop.tolist() == [4, 3, 3]


def test_half_open_boundaries_and_outside(caplog):
    cells = [GridCell(0, 0, 1000, 10), GridCell(1000, 0, 1000, 20)]
    with caplog.at_level(logging.WARNING):
        _, pop = distribute_population(cells, [[1000, 0], [999.9, 0], [5000, 5000]])
    assert pop.tolist() == [20, 10, 0]
    assert "outside" in caplog.text


def test_unaligned_cells_fallback():
    cells = [GridCell(0, 0, 1000, 10), GridCell(1500, 0, 500, 6)]
    _, pop = distribute_population(cells, [[10, 10], [1600, 100], [1700, 100]])
    assert pop.tolist() == [10, 3, 3]


def test_population_conserved_random(rng):
    cells = [GridCell(x, y, 100, int(rng.integers(0, 50))) for x in range(0, 1000, 100) for y in range(0, 1000, 100)]
    xy = rng.uniform(0, 1000, size=(150, 2))
    xy2, pop = distribute_population(cells, xy)
    assert pop.sum() == sum(c.population for c in cells)
    assert np.all(pop >= 0) and len(xy2) >= len(xy)


def test_grid_cell_validation():
    with pytest.raises(ValueError):
        GridCell(0, 0, 0, 1)
    with pytest.raises(ValueError):
        GridCell(0, 0, 1, -1)


def test_projection_scale():
    xy = project_lonlat([55.0, 55.01], [-21.0, -21.0])
    # 0.01 degree of longitude at 21 S is about 1038 m
    assert abs(xy[1, 0] - xy[0, 0]) == pytest.approx(1038.0, rel=2e-3)
    assert np.allclose(xy[:, 1], 0)


def test_synthesize_single_node():
    net = synthesize_island(IslandConfig(node_count=1, population_total=77))
    assert net.n == 1 and net.population.tolist() == [77]


def test_synthesize_conserves_and_is_deterministic():
    cfg = IslandConfig(node_count=300, population_total=12345, seed=9)
    a, b = synthesize_island(cfg), synthesize_island(cfg)
    assert a.population.sum() == 12345
    np.testing.assert_array_equal(a.xy, b.xy)
    np.testing.assert_array_equal(a.population, b.population)
    assert a.n >= 300 and np.all(np.isfinite(a.area)) and np.all(a.area >= 0)
    assert a.area.sum() == pytest.approx(cfg.width_m * cfg.height_m, rel=1e-6)
    c = synthesize_island(IslandConfig(node_count=300, population_total=12345, seed=10))
    assert not np.array_equal(a.xy, c.xy)
