"""Reflected Brownian motion with semipermeable barriers.

The scheme is an Euler step followed by a Skorokhod projection: a proposal
that lands on the forbidden side of a barrier is projected back onto the
barrier and the penetration depth is credited to that barrier's local time.
Each inner barrier carries an exponential local-time budget; once the
accumulated penetration exhausts it the side flag flips, a fresh budget is
drawn with the rate of leaving the new side, and the proposal is allowed to
stand on the other side.
"""
from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .errors import (DegenerateDomainError, InvalidInitialConditionError, InvalidInputError,
                     MissingTraceError, StepTooLargeError)
from .geometry import Environment, SegmentIndex, Side, environment_parameters, side_of

CHUNK = 1 << 18
MAX_REJECTION_ATTEMPTS = 100_000


@dataclass
class ProcessState:
    position: np.ndarray
    sides: np.ndarray
    local_times: np.ndarray
    switch_budget: np.ndarray
    clock: float = 0.0

    def copy(self):
        return ProcessState(self.position.copy(), self.sides.copy(), self.local_times.copy(),
                            self.switch_budget.copy(), self.clock)


@dataclass
class SamplePath:
    """Positions observed every ``t`` time units over ``[0, T]``.

    ``dense`` optionally holds the position after every Euler step of size
    ``dense_h`` (diagnostics only).  The first sample is taken at time
    ``index0 * t``.
    ``first_hit`` is (time, barrier index, x, y) of the first contact with
    any barrier after the first sample, when the path was simulated.
    """

    t: float
    samples: np.ndarray
    T: float
    seed: Optional[int] = None
    dense: Optional[np.ndarray] = None
    dense_h: Optional[float] = None
    index0: int = 0
    final_state: Optional[ProcessState] = field(default=None, repr=False, compare=False)
    first_hit: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self):
        return (self.index0 + np.arange(len(self.samples))) * self.t


@dataclass(frozen=True)
class SimConfig:
    h: Optional[float] = None
    burn_in: float = 0.0
    record_dense: bool = False
    seed: int = 0


def n_intervals(T, t):
    """floor(T/t), robust to the rounding of T/t in floating point."""
    if T <= 0:
        return 0
    return int(math.floor(T / t + 1e-9))


def default_step(t, kappa=None, rho=None):
    """Default Euler step: t/50, capped by the local-straightness scale."""
    h = t / 50.0
    scales = [s for s in ((1.0 / kappa) if kappa else None, rho) if s]
    if scales:
        h = min(h, (min(scales) / 20.0) ** 2)
    return h


def snap_step(h, t):
    """Largest step <= h that divides t exactly into an integer number of steps."""
    n = max(1, int(math.ceil(t / h - 1e-9)))
    return t / n, n


def _rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@functools.lru_cache(maxsize=16)
def _geometry(env, cell):
    index = SegmentIndex.build(env, cell)
    leave_plus = np.array([b.leaving_rate(1) for b in env.barriers])
    leave_minus = np.array([b.leaving_rate(-1) for b in env.barriers])
    imperm = np.array([b.impermeable for b in env.barriers])
    return K.pack_geometry(index, leave_plus, leave_minus, imperm)


def _cell_size(env, h):
    return max(4.0 * math.sqrt(h), env.outer.curve.diameter / 1024.0)


def initial_state(env: Environment, x0, initial_sides=None, rng=None):
    """State at time 0: validated sides, zero local times, fresh budgets."""
    rng = _rng(rng)
    x0 = np.asarray(x0, dtype=float)
    if side_of(env.outer, x0) == Side.NEGATIVE:
        raise InvalidInitialConditionError(f"x0={x0.tolist()} lies outside the domain")
    computed = env.sides_of(x0)
    if initial_sides is None:
        if 0 in computed:
            raise InvalidInitialConditionError("x0 lies on an inner barrier; initial sides required")
        sides = np.array(computed, dtype=np.int64)
    else:
        sides = np.asarray(initial_sides, dtype=np.int64)
        if len(sides) == env.m:
            sides = np.concatenate([[1], sides])
        if len(sides) != env.m + 1 or sides[0] != 1 or np.any(np.abs(sides) != 1):
            raise InvalidInitialConditionError("initial sides must be +1/-1 per barrier")
        for i, (want, got) in enumerate(zip(sides[1:], computed[1:]), start=1):
            if got != 0 and got != want:
                raise InvalidInitialConditionError(
                    f"x0 is on side {got:+d} of barrier {i} but initial side {want:+d} was given")
    budgets = np.empty(env.m + 1)
    for i, b in enumerate(env.barriers):
        rate = b.leaving_rate(sides[i])
        budgets[i] = math.inf if rate == 0 else 0.0 if math.isinf(rate) else rng.exponential(1.0 / rate)
    return ProcessState(x0.copy(), sides, np.zeros(env.m + 1), budgets, 0.0)


class _Runner:
    """Holds kernel buffers for one path."""

    def __init__(self, env, state, h, rng):
        self.env = env
        self.h = h
        self.rng = rng
        self.G = _geometry(env, _cell_size(env, h))
        self.pos = np.array(state.position, dtype=float)
        self.sides = np.array(state.sides, dtype=np.int64)
        self.lt = np.array(state.local_times, dtype=float)
        self.budget = np.array(state.switch_budget, dtype=float)
        self.splitmix = np.array([rng.integers(0, 2 ** 63, dtype=np.int64)], dtype=np.uint64)
        self.ball = np.array([self.pos[0], self.pos[1], 0.0])
        self.clock = state.clock
        self.sqrt_h = math.sqrt(h)
        self.steps = 0
        self.first_hit = np.array([-1.0, -1.0, np.nan, np.nan])

    def increments(self, n):
        return self.rng.standard_normal((n, 2)) * self.sqrt_h

    def check(self, code):
        if code != K.OK:
            raise StepTooLargeError(f"step h={self.h} escaped the domain near {self.pos.tolist()}")

    def advance(self, n_steps, stride=None, samples=None, dense=None, switch_log=None):
        """Run n_steps, optionally recording every ``stride`` steps."""
        written = 0
        offset = 0
        n_switch = 0
        done = 0
        stride = stride or n_steps + 1
        samples = samples if samples is not None else np.empty((0, 2))
        log = switch_log if switch_log is not None else np.empty((0, 2))
        while done < n_steps:
            n = min(CHUNK, n_steps - done)
            incs = self.increments(n)
            d = dense[done:done + n] if dense is not None else np.empty((0, 2))
            code, k, offset, written, n_switch = K.run(
                self.pos, self.sides, self.lt, self.budget, self.splitmix, self.ball, incs,
                self.G, stride, offset, samples, written, d, dense is not None, log, n_switch,
                self.first_hit, self.steps)
            self.check(code)
            done += n
            self.steps += n
        self.clock += n_steps * self.h
        return written, n_switch

    def state(self):
        return ProcessState(self.pos.copy(), self.sides.copy(), self.lt.copy(),
                            self.budget.copy(), self.clock)


def step(state: ProcessState, env: Environment, h: float, rng=None) -> ProcessState:
    """One Euler-projection step of size ``h``; returns a new state."""
    if not h > 0:
        raise ValueError("h must be positive")
    rng = _rng(rng)
    runner = _Runner(env, state, h, rng)
    runner.advance(1)
    return runner.state()


def resolve_step(env, t, cfg):
    if cfg.h is not None:
        h = min(cfg.h, t) if t > 0 else cfg.h
    else:
        params = environment_parameters(env)
        h = default_step(t, params.kappa, params.rho) if t > 0 else default_step(1.0, params.kappa, params.rho)
    if t > 0:
        h, _ = snap_step(h, t)
    return h


def simulate(env: Environment, x0, initial_sides, T: float, t: float,
             cfg: SimConfig = SimConfig(), rng=None, state: Optional[ProcessState] = None) -> SamplePath:
    """Simulate and sample a path every ``t`` time units up to floor(T/t)*t.

    ``rng`` defaults to a generator seeded with ``cfg.seed``.  Passing
    ``state`` continues from an existing state instead of ``x0``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if cfg.h is not None and cfg.h > t:
        raise ValueError("Euler step h must not exceed the sampling interval t")
    rng = _rng(cfg.seed if rng is None else rng)
    if state is None:
        state = initial_state(env, x0, initial_sides, rng)
    h = resolve_step(env, t, cfg)
    stride = int(round(t / h))
    runner = _Runner(env, state, h, rng)
    if cfg.burn_in > 0:
        runner.advance(int(math.ceil(cfg.burn_in / h)))
        runner.first_hit[:] = (-1.0, -1.0, np.nan, np.nan)
        runner.steps = 0
    n = n_intervals(T, t)
    samples = np.empty((n + 1, 2))
    samples[0] = runner.pos
    dense = np.empty((n * stride, 2)) if cfg.record_dense else None
    if n:
        written, _ = runner.advance(n * stride, stride, samples[1:], dense)
        assert written == n
    fh = runner.first_hit
    first_hit = None if fh[0] < 0 else (fh[0] * h, int(fh[1]), float(fh[2]), float(fh[3]))
    return SamplePath(t=t, samples=samples, T=T, seed=cfg.seed, dense=dense,
                      dense_h=h if cfg.record_dense else None, final_state=runner.state(),
                      first_hit=first_hit)


def sample_uniform(env: Environment, rng, n=1):
    """Rejection-sample ``n`` points uniformly inside the outer curve."""
    rng = _rng(rng)
    verts = env.outer.curve.vertices
    lo, hi = verts.min(0), verts.max(0)
    out = []
    attempts = 0
    while len(out) < n:
        batch = max(16, 2 * (n - len(out)))
        pts = lo + (hi - lo) * rng.random((batch, 2))
        attempts += batch
        inside = side_of(env.outer, pts) == 1
        out.extend(pts[inside])
        if attempts > MAX_REJECTION_ATTEMPTS * max(1, n) and len(out) < n:
            raise DegenerateDomainError("rejection sampling failed to find interior points")
    return np.array(out[:n])


def stationary_start(env: Environment, cfg: SimConfig = SimConfig(), rng=None,
                     T: Optional[float] = None, t_mix: Optional[float] = None):
    """Approximate draw from the stationary law: (point, sides).

    For m = 0 the stationary law is uniform and the draw is exact.  For
    m > 0 a uniform draw is followed by a burn-in of ``cfg.burn_in`` time
    units, or when that is 0 and ``t_mix``/``T`` are given, 4*t_mix or
    10% of T.
    """
    rng = _rng(cfg.seed if rng is None else rng)
    x = sample_uniform(env, rng, 1)[0]
    sides = np.array(env.sides_of(x), dtype=np.int64)
    if env.m == 0:
        return x, sides
    burn = cfg.burn_in
    if burn <= 0 and t_mix is not None:
        burn = 4.0 * t_mix
    elif burn <= 0 and T is not None:
        burn = 0.1 * T
    if burn <= 0:
        return x, sides
    h = cfg.h or default_step(1.0, *_kappa_rho(env))
    runner = _Runner(env, initial_state(env, x, sides, rng), h, rng)
    runner.advance(int(math.ceil(burn / h)))
    return runner.pos.copy(), runner.sides.copy()


def _kappa_rho(env):
    p = environment_parameters(env)
    return p.kappa, p.rho


def first_switch_local_time(env: Environment, x0, initial_sides, h, rng=None, max_time=1e4):
    """Simulate until the first side switch; returns (barrier index, local time, time)."""
    rng = _rng(rng)
    runner = _Runner(env, initial_state(env, x0, initial_sides, rng), h, rng)
    steps = 0
    limit = int(max_time / h)
    while steps < limit:
        n = min(CHUNK, limit - steps)
        code, k, b, lt = K.run_until_switch(runner.pos, runner.sides, runner.lt, runner.budget,
                                            runner.splitmix, runner.ball, runner.increments(n), runner.G)
        runner.check(code)
        steps += k
        if b >= 0:
            return b, lt, steps * h
    return -1, math.nan, steps * h


def halfplane_local_time(n_paths, t_end, h, rng=None, start=0.0):
    """Local time at a straight impermeable barrier {y = 0} at time ``t_end``.

    Paths start at height ``start`` and follow the same projection rule as
    the general scheme; only the normal coordinate matters.
    """
    rng = _rng(rng)
    steps = int(round(t_end / h))
    x = np.full(n_paths, float(start))
    lt = np.zeros(n_paths)
    block = max(1, (1 << 22) // max(1, n_paths))
    sq = math.sqrt(h)
    done = 0
    while done < steps:
        n = min(block, steps - done)
        K.reflect_halfplane(x, lt, rng.standard_normal((n, n_paths)) * sq)
        done += n
    return lt


# ---------------------------------------------------------------------------
# distances to a barrier for many points (trace post-processing)

def barrier_distances(barrier, pts, cutoff, return_points=False):
    """Exact distances to the barrier polyline for points closer than ``cutoff``.

    Points farther away get ``inf`` (and a NaN nearest point).  Uses a vertex
    KD-tree prefilter.
    """
    curve = getattr(barrier, "curve", barrier)
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    a, b = curve.segments
    seg_len = np.linalg.norm(b - a, axis=1).max()
    tree = cKDTree(curve.vertices)
    dv, _ = tree.query(pts, distance_upper_bound=cutoff + seg_len)
    out = np.full(len(pts), np.inf)
    near = np.full((len(pts), 2), np.nan)
    cand = np.flatnonzero(np.isfinite(dv))
    if len(cand):
        lists = tree.query_ball_point(pts[cand], r=cutoff + seg_len)
        n = len(a)
        for row, idx in zip(cand, lists):
            idx = np.asarray(idx, dtype=int)
            segs = np.unique(np.concatenate([idx, (idx - 1) % n]))
            sa, sb = a[segs], b[segs]
            ab = sb - sa
            tau = np.clip(((pts[row] - sa) * ab).sum(1) / (ab ** 2).sum(1), 0, 1)
            q = sa + tau[:, None] * ab
            d = np.linalg.norm(pts[row] - q, axis=1)
            k = int(np.argmin(d))
            if d[k] <= cutoff:
                out[row] = d[k]
                near[row] = q[k]
    if return_points:
        return out, near
    return out


def local_time_estimate(path: SamplePath, barrier, eps: float) -> float:
    """(1/2eps) * occupation time of the eps-neighbourhood, from the dense trace."""
    if path.dense is None or path.dense_h is None:
        raise MissingTraceError("local_time_estimate needs a path simulated with record_dense=True")
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = barrier_distances(barrier, path.dense, eps)
    return float(np.count_nonzero(d < eps) * path.dense_h / (2.0 * eps))


# ---------------------------------------------------------------------------
# CSV serialization

PATH_HEADER = ("index", "time", "x", "y")


def write_path_csv(path: SamplePath, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PATH_HEADER)
    for i, (x, y) in enumerate(path.samples):
        w.writerow((i, repr(float((path.index0 + i) * path.t)), repr(float(x)), repr(float(y))))


def write_dense_csv(path: SamplePath, fh):
    if path.dense is None:
        raise MissingTraceError("path has no dense trace")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(PATH_HEADER)
    for i, (x, y) in enumerate(path.dense, start=1):
        w.writerow((i, repr(float(i * path.dense_h)), repr(float(x)), repr(float(y))))


def read_path_csv(fh, t: Optional[float] = None) -> SamplePath:
    """Read a path CSV; ``t`` is inferred from the time column when omitted."""
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    r = csv.reader(fh)
    header = next(r, None)
    if header is None or tuple(h.strip() for h in header) != PATH_HEADER:
        raise InvalidInputError(f"expected header {','.join(PATH_HEADER)}")
    rows = [row for row in r if row]
    times = np.array([float(row[1]) for row in rows])
    xy = np.array([[float(row[2]), float(row[3])] for row in rows]).reshape(-1, 2)
    if t is None:
        t = float(times[-1] - times[0]) / (len(times) - 1) if len(times) >= 2 else 0.0
    index0 = int(round(times[0] / t)) if len(times) and t > 0 else 0
    T = t * (len(rows) - 1) if len(rows) else 0.0
    return SamplePath(t=t, samples=xy, T=T, index0=index0)
