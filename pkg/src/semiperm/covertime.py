"""Monte-Carlo cover time of the outer boundary.

The cover time for accuracy eps is the first time at which every point of
the outer curve lies within eps of a boundary contact of the path, i.e. the
Hausdorff distance between the set of hit points and the boundary drops to
eps.  For an m = 0 domain its mean grows like (2 Area / pi) ln(1/eps)^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError
from .process import CHUNK, _Runner, _rng, initial_state

BIN_FRACTION = 20  # boundary resolution: min(eps) / BIN_FRACTION


def boundary_bins(curve, spacing):
    """Points along the closed polyline at arc-length spacing <= ``spacing``."""
    s = np.append(curve.arc_lengths, curve.length)
    n = max(8, int(math.ceil(curve.length / spacing)))
    u = np.arange(n) * (curve.length / n)
    poly = curve.polyline
    x = np.interp(u, s, poly[:, 0])
    y = np.interp(u, s, poly[:, 1])
    return np.column_stack([x, y])


@dataclass
class CoverResult:
    eps: np.ndarray
    times: np.ndarray  # (paths, len(eps)); inf when not covered within max_time
    area: float

    @property
    def limit(self):
        return 2.0 * self.area / math.pi

    def mean(self):
        return self.times.mean(0)

    def stderr(self):
        n = self.times.shape[0]
        return self.times.std(0, ddof=1) / math.sqrt(n) if n > 1 else np.full(len(self.eps), np.nan)

    def ratio(self):
        return self.mean() / np.log(1.0 / self.eps) ** 2


def cover_times(env, eps: Sequence[float], n_paths: int, h: float, rng=None, x0=None,
                max_time: float = 1e4) -> CoverResult:
    """Cover times of the outer boundary for each eps, over independent paths.

    Paths start at ``x0`` (default: the centroid of the outer curve).
    """
    if env.m != 0:
        raise ConfigurationError("cover times are defined for domains without inner barriers")
    eps = np.asarray(sorted(eps, reverse=True), dtype=float)
    if np.any(eps <= 0):
        raise ConfigurationError("eps must be positive")
    rng = _rng(rng)
    curve = env.outer.curve
    x0 = curve.centroid if x0 is None else np.asarray(x0, dtype=float)
    bins = boundary_bins(curve, eps.min() / BIN_FRACTION)
    limit = int(math.ceil(max_time / h))
    out = np.full((n_paths, len(eps)), np.inf)
    for i in range(n_paths):
        runner = _Runner(env, initial_state(env, x0, None, rng), h, rng)
        uncovered = np.tile(np.arange(len(bins), dtype=np.int64), (len(eps), 1))
        n_unc = np.full(len(eps), len(bins), dtype=np.int64)
        done_at = np.full(len(eps), -1, dtype=np.int64)
        steps = 0
        while steps < limit:
            n = min(CHUNK, limit - steps)
            code, k, finished = K.run_cover(runner.pos, runner.sides, runner.lt, runner.budget,
                                            runner.splitmix, runner.ball, runner.increments(n),
                                            runner.G, bins, eps, uncovered, n_unc, done_at, steps)
            runner.check(code)
            steps += k
            if finished:
                break
        ok = done_at >= 0
        out[i, ok] = done_at[ok] * h
    order = np.argsort(eps)
    return CoverResult(eps[order], out[:, order], env.area)
