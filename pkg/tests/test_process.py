import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semiperm.errors import InvalidInitialConditionError, InvalidInputError, MissingTraceError
from semiperm.geometry import Side, distances, side_of
from semiperm.process import (ProcessState, SamplePath, SimConfig, barrier_distances, default_step,
                              first_switch_local_time, halfplane_local_time, initial_state,
                              local_time_estimate, n_intervals, read_path_csv, simulate, snap_step,
                              stationary_start, step, write_dense_csv, write_path_csv)

from conftest import disk_env


def test_n_intervals_and_snap():
    assert n_intervals(1.0, 0.1) == 10
    assert n_intervals(0.0, 0.1) == 0
    h, n = snap_step(0.003, 0.01)
    assert n == 4 and h == pytest.approx(0.0025)
    assert default_step(0.01) == pytest.approx(0.0002)
    assert default_step(0.01, kappa=100.0) == pytest.approx((0.01 / 20) ** 2)


def test_simulate_shape_and_domain(disk):
    path = simulate(disk, (1.5, 0.0), None, 5.0, 0.01, SimConfig(seed=3))
    assert len(path) == 501
    assert np.all(np.linalg.norm(path.samples, axis=1) <= 2.0 + 1e-9)
    assert path.times[-1] == pytest.approx(5.0)


def test_simulate_zero_T(disk):
    path = simulate(disk, (1.5, 0.0), None, 0.0, 0.01, SimConfig(seed=3))
    assert len(path) == 1


def test_simulate_deterministic(disk):
    a = simulate(disk, (1.5, 0.0), None, 2.0, 0.01, SimConfig(seed=11))
    b = simulate(disk, (1.5, 0.0), None, 2.0, 0.01, SimConfig(seed=11))
    c = simulate(disk, (1.5, 0.0), None, 2.0, 0.01, SimConfig(seed=12))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_h_larger_than_t_rejected(disk):
    with pytest.raises(ValueError):
        simulate(disk, (1.5, 0.0), None, 1.0, 0.01, SimConfig(h=0.1))


def test_initial_condition_errors(disk):
    with pytest.raises(InvalidInitialConditionError):
        initial_state(disk, (3.0, 0.0))
    with pytest.raises(InvalidInitialConditionError):
        initial_state(disk, disk.inner[0].curve.vertices[0])
    with pytest.raises(InvalidInitialConditionError):
        initial_state(disk, (0.0, 0.0), [1, -1])  # the origin is inside, i.e. on side +1
    s = initial_state(disk, disk.inner[0].curve.vertices[0], [1, -1])
    assert list(s.sides) == [1, -1]
    assert s.switch_budget[0] == math.inf and s.switch_budget[1] > 0


def test_step_invariants(disk):
    rng = np.random.default_rng(0)
    s = initial_state(disk, (0.999, 0.0), None, rng)
    lt_prev = s.local_times.copy()
    for _ in range(200):
        s = step(s, disk, 1e-4, rng)
        assert side_of(disk.outer, s.position) != Side.NEGATIVE
        assert np.all(s.local_times >= lt_prev)
        lt_prev = s.local_times.copy()
        got = disk.sides_of(s.position)[1]
        assert got == 0 or got == s.sides[1]


def test_impermeable_sides_never_switch():
    env = disk_env(lam=0.0)
    path = simulate(env, (1.5, 0.0), None, 5.0, 0.01, SimConfig(seed=1))
    r = np.linalg.norm(path.samples, axis=1)
    # samples may sit on a polyline chord, whose distance to the centre is cos(pi/n)
    assert np.all(r >= math.cos(math.pi / 1024) - 1e-9)


def test_stationary_start_m0_uniform_inside(unit_disk):
    x, sides = stationary_start(unit_disk, SimConfig(seed=5))
    assert np.linalg.norm(x) < 1.0 and list(sides) == [1]


def test_path_csv_roundtrip(disk):
    path = simulate(disk, (1.5, 0.0), None, 0.5, 0.01, SimConfig(seed=2))
    buf = io.StringIO()
    write_path_csv(path, buf)
    back = read_path_csv(io.StringIO(buf.getvalue()))
    assert back.t == pytest.approx(0.01)
    assert np.array_equal(back.samples, path.samples)
    buf2 = io.StringIO()
    write_path_csv(back, buf2)
    assert buf2.getvalue() == buf.getvalue()


def test_path_csv_bad_header():
    with pytest.raises(InvalidInputError):
        read_path_csv("a,b\n1,2\n")


def test_dense_trace_and_local_time(disk):
    path = simulate(disk, (1.5, 0.0), None, 0.5, 0.01, SimConfig(seed=2, record_dense=True))
    assert path.dense.shape == (50 * int(round(0.01 / path.dense_h)), 2)
    buf = io.StringIO()
    write_dense_csv(path, buf)
    assert buf.getvalue().startswith("index,time,x,y\n")
    assert local_time_estimate(path, disk.inner[0], 0.05) >= 0.0
    bare = simulate(disk, (1.5, 0.0), None, 0.5, 0.01, SimConfig(seed=2))
    with pytest.raises(MissingTraceError):
        local_time_estimate(bare, disk.inner[0], 0.05)
    with pytest.raises(MissingTraceError):
        write_dense_csv(bare, io.StringIO())


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=20))
@settings(max_examples=30)
def test_barrier_distances_brute_force(pts):
    env = disk_env(resolution=256)
    pts = np.array(pts)
    d = barrier_distances(env.inner[0], pts, 0.5)
    exact = distances(env.inner[0].curve, pts)
    near = exact <= 0.5
    assert np.allclose(d[near], exact[near], atol=1e-12)
    assert np.all(np.isinf(d[~near]))


def test_halfplane_local_time_small():
    lt = halfplane_local_time(4000, 1.0, 1e-3, np.random.default_rng(0))
    assert lt.mean() == pytest.approx(math.sqrt(2 / math.pi), rel=0.08)


def test_first_switch_local_time_small():
    env = disk_env(R=0.5, r=0.25, lam=2.0, resolution=256)
    rng = np.random.default_rng(0)
    lts = [first_switch_local_time(env, (0.4, 0.0), None, 1e-4, rng)[1] for _ in range(300)]
    assert np.mean(lts) == pytest.approx(0.5, rel=0.2)


def test_first_hit_recorded(disk):
    path = simulate(disk, (1.5, 0.0), None, 5.0, 0.01, SimConfig(seed=4))
    assert path.first_hit is not None
    tau, b, x, y = path.first_hit
    assert 0 < tau <= 5.0 and b in (0, 1)
    assert distances(disk.barriers[b].curve, (x, y))[0] < 1e-6
