import math

import numpy as np
import pytest

from semiperm.covertime import CoverResult, boundary_bins, cover_times
from semiperm.errors import ConfigurationError
from semiperm.geometry import ClosedCurve, Environment

from conftest import disk_env


def test_boundary_bins_spacing():
    c = ClosedCurve.circle((0, 0), 1, 512)
    b = boundary_bins(c, 0.01)
    assert np.allclose(np.linalg.norm(b, axis=1), 1.0, atol=1e-4)
    gaps = np.linalg.norm(np.diff(np.vstack([b, b[:1]]), axis=0), axis=1)
    assert gaps.max() <= 0.01 + 1e-9


def test_large_eps_equals_first_hit():
    env = disk_env(1.0, None, resolution=256)
    # eps above the diameter: a single boundary contact covers everything
    res = cover_times(env, [5.0], 3, 1e-3, np.random.default_rng(0))
    assert np.all(np.isfinite(res.times))
    assert np.all(res.times > 0)
    # from the centre the first hit time of the unit circle has mean 1/2
    res = cover_times(env, [5.0], 300, 1e-3, np.random.default_rng(1))
    assert res.mean()[0] == pytest.approx(0.5, rel=0.15)


def test_cover_times_monotone_in_eps():
    env = disk_env(1.0, None, resolution=256)
    res = cover_times(env, [0.5, 0.2], 5, 1e-3, np.random.default_rng(0))
    assert list(res.eps) == [0.2, 0.5]
    assert np.all(res.times[:, 0] >= res.times[:, 1])
    assert res.limit == pytest.approx(2 * env.area / math.pi)


def test_cover_times_rejects_inner_barriers():
    with pytest.raises(ConfigurationError):
        cover_times(disk_env(resolution=128), [0.1], 1, 1e-3)


def test_result_stats():
    r = CoverResult(np.array([0.1]), np.array([[1.0], [3.0]]), math.pi)
    assert r.mean()[0] == 2.0
    assert r.ratio()[0] == pytest.approx(2.0 / math.log(10) ** 2)
    assert r.stderr()[0] == pytest.approx(1.0)
