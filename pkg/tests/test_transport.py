import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from semiperm.errors import InvalidInputError, InvalidMeasureError
from semiperm.transport import (Box, EmpiricalMeasure, OrientedRect, bin_measure, directed_hausdorff,
                                empirical_kernel, hausdorff, transition_pairs, truncated_w1, w1_uniform)

from oracles import hausdorff_oracle, truncated_w1_oracle


def random_measure(rng, k=None, scale=1.0):
    k = k or int(rng.integers(1, 5))
    w = rng.random(k) + 0.05
    return EmpiricalMeasure(rng.normal(size=(k, 2)) * scale, w / w.sum())


def lp_w1(P, Q, u):
    M = np.minimum(np.linalg.norm(P.points[:, None] - Q.points[None], axis=-1), u)
    n, m = M.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    res = linprog(M.reshape(-1), A_eq=A, b_eq=np.concatenate([P.weights, Q.weights]), bounds=(0, None),
                  method="highs")
    return res.fun


def test_measure_validation():
    with pytest.raises(InvalidMeasureError):
        EmpiricalMeasure([[0, 0]], [-1.0])
    with pytest.raises(InvalidMeasureError):
        EmpiricalMeasure([[0, 0], [1, 1]], [0.3, 0.3])
    with pytest.raises(InvalidMeasureError):
        EmpiricalMeasure([[0, 0]], [0.5, 0.5])
    assert EmpiricalMeasure.zero().is_zero
    assert EmpiricalMeasure.uniform([[0, 0], [1, 1]]).total == pytest.approx(1.0)


def test_w1_examples():
    d0 = EmpiricalMeasure([[0, 0]], [1.0])
    d3 = EmpiricalMeasure([[3, 4]], [1.0])
    assert truncated_w1(d0, d3, 10) == pytest.approx(5.0)
    assert truncated_w1(d0, d3, 2) == pytest.approx(2.0)
    assert truncated_w1(d0, EmpiricalMeasure.zero(), 0.7) == 0.7
    assert truncated_w1(EmpiricalMeasure.zero(), EmpiricalMeasure.zero(), 0.7) == 0.0
    with pytest.raises(ValueError):
        truncated_w1(d0, d3, 0)


def test_w1_matches_lp_and_polytope():
    rng = np.random.default_rng(7)
    for _ in range(50):
        P, Q = random_measure(rng), random_measure(rng)
        u = float(rng.uniform(0.1, 3))
        w = truncated_w1(P, Q, u)
        assert w == pytest.approx(lp_w1(P, Q, u), abs=1e-9)
        assert w == pytest.approx(truncated_w1_oracle(P.points, P.weights, Q.points, Q.weights, u), abs=1e-9)


def test_w1_uniform_matches_general():
    rng = np.random.default_rng(3)
    for n, m in ((1, 5), (4, 1), (6, 7)):
        X, Y = rng.normal(size=(n, 2)), rng.normal(size=(m, 2))
        assert w1_uniform(X, Y, 0.8) == pytest.approx(
            truncated_w1(EmpiricalMeasure.uniform(X), EmpiricalMeasure.uniform(Y), 0.8), abs=1e-12)
    assert w1_uniform(np.empty((0, 2)), np.empty((0, 2)), 1.0) == 0.0
    assert w1_uniform(np.zeros((2, 2)), np.empty((0, 2)), 1.5) == 1.5


seeds = st.integers(0, 2 ** 32 - 1)


@given(seeds, st.floats(0.05, 10))
@settings(max_examples=80)
def test_metric_axioms(seed, u):
    rng = np.random.default_rng(seed)
    P, Q, R = random_measure(rng), random_measure(rng), random_measure(rng)
    pq, qp = truncated_w1(P, Q, u), truncated_w1(Q, P, u)
    assert pq == pytest.approx(qp, abs=1e-9)
    assert truncated_w1(P, P, u) == pytest.approx(0.0, abs=1e-12)
    assert pq <= truncated_w1(P, R, u) + truncated_w1(R, Q, u) + 1e-9
    assert 0 <= pq <= u + 1e-12


@given(seeds, st.floats(0.05, 10))
def test_tv_bound_on_disjoint_supports(seed, u):
    rng = np.random.default_rng(seed)
    P = random_measure(rng)
    Q = EmpiricalMeasure(P.points + 100.0, P.weights)
    # disjoint supports at distance > u: every unit of mass pays exactly u
    assert truncated_w1(P, Q, u) == pytest.approx(u, abs=1e-9)


@given(seeds, st.sampled_from([0.1, 1.0]), st.sampled_from([0.05, 10.0]))
def test_binning_bound(seed, d, u):
    rng = np.random.default_rng(seed)
    Q = random_measure(rng, int(rng.integers(1, 12)), scale=2.0)
    B = bin_measure(Q, d)
    assert truncated_w1(Q, B, u) <= min(math.sqrt(2) * d, u) + 1e-9


@given(seeds, st.floats(0.01, 2.0))
def test_binning_preserves_bin_mass(seed, d):
    rng = np.random.default_rng(seed)
    Q = random_measure(rng, int(rng.integers(1, 12)), scale=2.0)
    B = bin_measure(Q, d)
    assert B.total == pytest.approx(1.0)
    keys = np.floor(Q.points / d).astype(int)
    for pt, w in zip(B.points, B.weights):
        k = np.floor(pt / d).astype(int)
        assert w == pytest.approx(Q.weights[(keys == k).all(1)].sum())
        assert np.allclose(pt, (k + 0.5) * d)


def test_bin_centre():
    B = bin_measure(EmpiricalMeasure([[0.2, 0.7]], [1.0]), 1.0)
    assert np.allclose(B.points, [[0.5, 0.5]])


@given(arrays(float, (5, 2), elements=st.floats(-10, 10)), arrays(float, (4, 2), elements=st.floats(-10, 10)),
       st.floats(0, 2 * math.pi), st.floats(-5, 5))
def test_hausdorff_symmetry_and_rigid_invariance(A, B, ang, s):
    h = hausdorff(A, B)
    assert h == pytest.approx(hausdorff(B, A), abs=1e-12)
    assert h == pytest.approx(hausdorff_oracle(A, B), abs=1e-9)
    R = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    assert hausdorff(A @ R.T + s, B @ R.T + s) == pytest.approx(h, abs=1e-9)


def test_hausdorff_examples():
    assert directed_hausdorff([[0, 0]], [[1, 0], [0, 3]]) == 1.0
    assert hausdorff([[0, 0]], [[1, 0], [0, 10]]) == pytest.approx(10.0)
    with pytest.raises(InvalidInputError):
        hausdorff(np.empty((0, 2)), [[0, 0]])


def test_empirical_kernel_examples():
    samples = np.array([(0, 0), (1, 0), (0, 0), (2, 0)], dtype=float)
    P = empirical_kernel(samples, Box(-0.1, -0.1, 0.1, 0.1))
    order = np.argsort(P.points[:, 0])
    assert np.allclose(P.points[order], [[1, 0], [2, 0]])
    assert np.allclose(P.weights, 0.5)
    assert empirical_kernel(samples, Box(5, 5, 6, 6)).is_zero
    # the last sample has no successor
    assert empirical_kernel(samples, Box(1.9, -0.1, 2.1, 0.1)).is_zero


def test_kernel_pooling_has_no_cross_path_transitions():
    a = np.array([(0, 0), (1, 1)], dtype=float)
    b = np.array([(5, 5), (6, 6)], dtype=float)
    X, Y = transition_pairs([a, b])
    assert len(X) == 2
    assert not any(np.allclose(x, (1, 1)) for x in X)


def test_oriented_rect_closed():
    r = OrientedRect((0, 0), math.pi / 2, 1.0, 0.5)
    assert r.contains([[0, 1], [0.5, 0], [0, 1.01]]).tolist() == [True, True, False]
