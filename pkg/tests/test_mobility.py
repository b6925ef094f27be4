import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from vectornet.mobility import (
    MobilityGenConfig,
    TravelMatrices,
    _pick_destinations,
    build_travel_matrices,
    generate_destinations,
    generate_mobility,
    read_mobility_csv,
    sample_trip_length,
    trip_length_density,
    write_mobility_csv,
    zipf_presence,
)

CFG = MobilityGenConfig()


@pytest.fixture(scope="module")
def quad_cdf():
    """CDF of the trip-length law by adaptive quadrature on (0, inf)."""
    f = lambda x: float(trip_length_density(x, CFG.delta_r0, CFG.kappa, CFG.power_beta))  # noqa: E731
    knots = np.concatenate([[0.0], np.geomspace(1e-3, 2000.0, 600)])
    pieces = [integrate.quad(f, a, b, epsabs=0, epsrel=1e-12)[0] for a, b in zip(knots[:-1], knots[1:])]
    tail = integrate.quad(f, knots[-1], np.inf)[0]
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    total = cum[-1] + tail
    mean = (sum(integrate.quad(lambda x: x * f(x), a, b, epsrel=1e-12)[0] for a, b in zip(knots[:-1], knots[1:]))
            + integrate.quad(lambda x: x * f(x), knots[-1], np.inf)[0]) / total
    return knots, cum / total, mean


def _ks(samples, knots, cdf):
    s = np.sort(samples)
    emp_hi = np.arange(1, len(s) + 1) / len(s)
    model = np.interp(s, knots, cdf)
    return max(np.abs(emp_hi - model).max(), np.abs(emp_hi - 1 / len(s) - model).max())


def test_trip_length_samples_match_quadrature(quad_cdf):
    knots, cdf, mean = quad_cdf
    x = sample_trip_length(np.random.default_rng(0), CFG, size=1_000_000)
    assert np.all(x > 0)
    assert _ks(x, knots, cdf) < 0.01
    assert abs(x.mean() / mean - 1) < 0.02


def test_zipf_presence():
    assert zipf_presence(1).tolist() == [1.0]
    np.testing.assert_allclose(zipf_presence(3), [6 / 11, 3 / 11, 2 / 11], rtol=1e-15)
    with pytest.raises(ValueError):
        zipf_presence(0)


@given(st.integers(1, 5000))
def test_zipf_sums_to_one_and_decreases(n):
    z = zipf_presence(n)
    assert abs(z.sum() - 1) < 1e-12
    assert np.all(np.diff(z) < 0)


def test_destination_distances_follow_trip_law(quad_cdf):
    # a single origin whose other nodes sit at log-spaced distances out to 600 km
    knots, cdf, _ = quad_cdf
    radii = np.geomspace(1.0, 600_000.0, 20_000)
    order = np.arange(1, radii.size + 1)
    chosen = _pick_destinations(order, radii, 2000, np.random.default_rng(1), CFG)
    d_km = radii[np.asarray(chosen) - 1] / 1000.0
    assert len(set(chosen)) == 2000
    assert _ks(d_km, knots, cdf) < 0.05


def test_two_nodes_and_truncation(caplog):
    assert generate_destinations([[0, 0], [10, 0]], MobilityGenConfig(destinations=1)) == [[1], [0]]
    with caplog.at_level(logging.WARNING):
        d = generate_destinations([[0, 0], [10, 0], [20, 0]], MobilityGenConfig(destinations=5))
    assert "truncating" in caplog.text
    assert all(sorted(x) == sorted(set(range(3)) - {i}) for i, x in enumerate(d))
    with pytest.raises(ValueError):
        generate_destinations([[0, 0]], CFG)


def test_destinations_deterministic(rng):
    xy = rng.uniform(0, 5000, size=(60, 2))
    cfg = MobilityGenConfig(destinations=8, seed=4)
    a = generate_destinations(xy, cfg)
    assert a == generate_destinations(xy, cfg)
    assert a == generate_destinations(xy, cfg, seed=np.random.SeedSequence(4))
    assert a != generate_destinations(xy, cfg, seed=5)
    for i, ranked in enumerate(a):
        assert len(ranked) == 8 and len(set(ranked)) == 8 and i not in ranked


def test_travel_matrices_structure(rng):
    xy = rng.uniform(0, 5000, size=(50, 2))
    cfg = MobilityGenConfig(destinations=6, g_default=0.3, return_rate=0.8)
    tm = generate_mobility(xy, cfg)
    assert len(tm) == 300
    m = tm.split_fractions()
    np.testing.assert_allclose(np.bincount(tm.origin, weights=m, minlength=50), 1.0, rtol=1e-12)
    assert np.all(tm.origin != tm.dest)
    assert np.all(tm.ret == 0.8) and np.all(tm.leave_rate == 0.3)
    # one rate per stored pair: departures and returns share the pattern
    assert tm.depart.shape == tm.ret.shape == tm.origin.shape


def test_zipf_weights_in_matrix():
    tm = build_travel_matrices([[1, 2, 3], [0], [0], [0]], MobilityGenConfig(g_default=0.5))
    np.testing.assert_allclose(tm.depart[:3], 0.5 * np.array([6, 3, 2]) / 11)
    assert tm.dest[:3].tolist() == [1, 2, 3]


def test_sedentary_population():
    tm = build_travel_matrices([[1], [0]], MobilityGenConfig(g_default=0.0))
    assert len(tm) == 0 and tm.n == 2


def test_matrices_reject_diagonal_and_negative():
    z = np.zeros(2)
    with pytest.raises(ValueError):
        TravelMatrices(2, np.array([0]), np.array([0]), np.ones(1), np.ones(1), z)
    with pytest.raises(ValueError):
        TravelMatrices(2, np.array([0]), np.array([1]), -np.ones(1), np.ones(1), z)


def test_mobility_csv_round_trip(tmp_path, rng):
    tm = generate_mobility(rng.uniform(0, 3000, size=(30, 2)), MobilityGenConfig(destinations=5))
    write_mobility_csv(tmp_path / "m.csv", tm)
    back = read_mobility_csv(tmp_path / "m.csv", 30)
    for f in ("origin", "dest", "depart", "ret"):
        np.testing.assert_array_equal(getattr(back, f), getattr(tm, f))
    np.testing.assert_allclose(back.leave_rate, tm.leave_rate, rtol=1e-15)
    (tmp_path / "bad.csv").write_text("origin,dest,depart_rate,return_rate\n0,1,0.1\n")
    with pytest.raises(ValueError, match=":2:"):
        read_mobility_csv(tmp_path / "bad.csv", 30)


def test_config_validation():
    with pytest.raises(ValueError):
        MobilityGenConfig(kappa=0)
    with pytest.raises(ValueError):
        MobilityGenConfig(destinations=0)
