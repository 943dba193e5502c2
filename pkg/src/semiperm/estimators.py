"""Barrier recovery from sampled paths.

Three estimators:

* :func:`recover_fixed_frequency` compares empirical transition kernels of
  neighbouring grid boxes under the truncated W1 distance and flags boxes
  where the kernel jumps.
* :func:`refine` sharpens an existing estimate by comparing kernels of thin
  parallel rectangles oriented along the estimated barrier direction.
* :func:`recover_high_frequency` counts, for strips in front of a grid
  point, how often the path jumps across to the far half-plane; strips that
  are visited often but almost never crossed mark a barrier.

Every estimator accepts a single path or a list of paths; transitions are
pooled across paths but never link the end of one path to the start of
another.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .errors import ConfigurationError, InvalidInputError, MissingTraceError
from .process import barrier_distances
from .transport import PointSet, transition_pairs, w1_uniform

FIXED = "fixed-freq"
REFINED = "refined"
HIGH = "high-freq"
REGIMES = (FIXED, REFINED, HIGH)

# Absolute constants of the parameter scalings.  Fixed by one calibration run
# on the disk scenario (outer radius 2, inner circle radius 1, rates 1) and
# frozen here; see the decisions log for the calibration record.
CONSTANTS = {
    FIXED: {"c2": 1.0, "c4": 1.8, "c5": 3.0},
    REFINED: {"c4": 1.5, "c5": 3.0, "c6": 3.0},
    HIGH: {"c4": 0.001, "c5": 1.0, "c6": 1.0, "c7": 35.0},
}


@dataclass(frozen=True)
class FixedFreqParams:
    """Parameters of the fixed-frequency and refinement estimators.

    ``eps_grid`` is the box side (fixed-frequency) or grid spacing
    (refinement); ``ell`` and ``sE`` are only used by :func:`refine`.
    """

    s: float
    eps_grid: float
    u: float
    ell: Optional[float] = None
    sE: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        for name in ("s", "eps_grid", "u"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("ell", "sE", "kappa"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass(frozen=True)
class HighFreqParams:
    s: float
    eps_grid: float
    ell: float
    n0: float

    def __post_init__(self):
        for name in ("s", "eps_grid", "ell"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not self.n0 >= 1:
            raise ConfigurationError("n0 must be at least 1")


@dataclass
class EstimateSet:
    """Flagged boxes (``cell_size > 0``, points are lower-left corners) or grid points.

    ``diagnostics`` holds one value per flagged element: the largest kernel
    distance found (fixed-frequency, refined) or the smallest crossing ratio
    M/N among qualifying directions (high-frequency).
    """

    regime: str
    points: np.ndarray
    diagnostics: np.ndarray
    cell_size: float = 0.0
    params: dict = field(default_factory=dict)
    n_tested: int = 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.diagnostics = np.asarray(self.diagnostics, dtype=float).reshape(-1)

    def __len__(self):
        return len(self.points)

    def point_set(self) -> PointSet:
        """Points for distance computations: box corners and centres, or the grid points."""
        if self.cell_size > 0 and len(self.points):
            d = self.cell_size
            offs = np.array([[0, 0], [d, 0], [0, d], [d, d], [d / 2, d / 2]])
            return PointSet((self.points[:, None, :] + offs[None]).reshape(-1, 2))
        return PointSet(self.points)


def _pairs(paths):
    X, Y = transition_pairs(paths)
    return X, Y


# ---------------------------------------------------------------------------
# fixed-frequency regime: kernel comparison between grid boxes

def _closed_box_members(X, eps):
    """(sample index, j, k) for every closed box [j e, (j+1) e] x [k e, (k+1) e] containing X[i].

    Points on a box edge belong to both adjacent boxes.
    """
    q = X / eps
    f = np.floor(q)
    on_x = q[:, 0] == f[:, 0]
    on_y = q[:, 1] == f[:, 1]
    fi = f.astype(np.int64)
    idx = np.arange(len(X))
    parts = [(idx, fi[:, 0], fi[:, 1])]
    for mask, dj, dk in ((on_x, 1, 0), (on_y, 0, 1), (on_x & on_y, 1, 1)):
        if mask.any():
            parts.append((idx[mask], fi[mask, 0] - dj, fi[mask, 1] - dk))
    return tuple(np.concatenate(c) for c in zip(*parts))


def _group(keys_j, keys_k, members):
    """dict (j, k) -> member indices, keys in sorted order."""
    if len(members) == 0:
        return {}
    order = np.lexsort((members, keys_k, keys_j))
    kj, kk, mem = keys_j[order], keys_k[order], members[order]
    brk = np.flatnonzero((np.diff(kj) != 0) | (np.diff(kk) != 0)) + 1
    starts = np.concatenate([[0], brk])
    ends = np.concatenate([brk, [len(mem)]])
    return {(int(kj[a]), int(kk[a])): mem[a:b] for a, b in zip(starts, ends)}


_NEIGHBOURS = [(dj, dk) for dj in range(-2, 3) for dk in range(-2, 3) if (dj, dk) != (0, 0)]


def recover_fixed_frequency(paths, p: FixedFreqParams) -> EstimateSet:
    """Flag grid boxes whose transition kernel differs from a neighbour's by >= s.

    Boxes are closed squares of side ``p.eps_grid``; every box is compared
    with the 24 boxes within two steps.  Only boxes containing a sample or
    within two steps of one are visited: all other comparisons are between
    two zero measures and vanish.
    """
    X, Y = _pairs(paths)
    eps, u, s = p.eps_grid, p.u, p.s
    idx, bj, bk = _closed_box_members(X, eps)
    boxes = _group(bj, bk, idx)
    kernels = {key: Y[m] for key, m in boxes.items()}
    best = {}
    empty = np.empty((0, 2))
    for key, A in kernels.items():
        for dj, dk in _NEIGHBOURS:
            nb = (key[0] + dj, key[1] + dk)
            B = kernels.get(nb)
            if B is not None and nb < key:
                continue  # unordered pair already handled from nb
            w = w1_uniform(A, empty if B is None else B, u)
            if w > best.get(key, -1.0):
                best[key] = w
            if w > best.get(nb, -1.0):
                best[nb] = w
    flagged = sorted(k for k, w in best.items() if w >= s)
    pts = np.array([(j * eps, k * eps) for j, k in flagged]).reshape(-1, 2)
    diag = np.array([best[k] for k in flagged])
    return EstimateSet(FIXED, pts, diag, cell_size=eps, params=asdict(p), n_tested=len(best))


# ---------------------------------------------------------------------------
# refinement along estimated barrier directions

def _initial_points(initial):
    if isinstance(initial, EstimateSet):
        initial = initial.point_set()
    pts = np.asarray(getattr(initial, "points", initial), dtype=float).reshape(-1, 2)
    return pts


def refine(paths, p: FixedFreqParams, initial) -> EstimateSet:
    """One refinement pass over grid points near the initial estimate.

    A grid point p and direction w are tested only when both p + ell w and
    p - ell w lie within sE + 2 eps of the initial estimate.  The point is
    flagged when the kernel of the central thin rectangle (width eps,
    half-length ell/10, oriented along w) differs by >= s from one of the
    rectangles shifted by h*eps across w, |h| <= 2.
    """
    if p.ell is None:
        raise ConfigurationError("refine needs ell (derived from kappa)")
    if p.sE is None:
        raise ConfigurationError("refine needs the current error bound sE")
    B = _initial_points(initial)
    eps, ell, u, s, sE = p.eps_grid, p.ell, p.u, p.s, p.sE
    if len(B) == 0:
        return EstimateSet(REFINED, np.empty((0, 2)), np.empty(0), params=asdict(p))
    gate = sE + 2.0 * eps
    reach = ell + gate
    lo = np.floor((B.min(0) - reach) / eps).astype(np.int64)
    hi = np.ceil((B.max(0) + reach) / eps).astype(np.int64)
    tree_b = cKDTree(B)
    cand = []
    for j in range(lo[0], hi[0] + 1):
        col = np.column_stack([np.full(hi[1] - lo[1] + 1, j * eps),
                               np.arange(lo[1], hi[1] + 1) * eps])
        d, _ = tree_b.query(col, distance_upper_bound=reach * (1 + 1e-12))
        keep = np.isfinite(d)
        if keep.any():
            jk = np.column_stack([np.full(keep.sum(), j), np.arange(lo[1], hi[1] + 1)[keep]])
            cand.append(jk)
    if not cand:
        return EstimateSet(REFINED, np.empty((0, 2)), np.empty(0), params=asdict(p))
    jk = np.concatenate(cand)
    P = jk * eps
    X, Y = _pairs(paths)
    tree_x = cKDTree(X) if len(X) else None
    radius = math.hypot(ell / 10.0, 2.5 * eps)
    n_dir = int(math.floor(2.0 * math.pi * ell / eps)) + 1
    best = np.full(len(P), -1.0)
    tested = np.zeros(len(P), dtype=bool)
    near = tree_x.query_ball_point(P, r=radius * (1 + 1e-9)) if tree_x is not None else None
    empty = np.empty((0, 2))
    for n in range(n_dir):
        ang = n * eps / ell
        w = np.array([math.cos(ang), math.sin(ang)])
        wp = np.array([-math.sin(ang), math.cos(ang)])
        d_plus, _ = tree_b.query(P + ell * w)
        d_minus, _ = tree_b.query(P - ell * w)
        ok = np.flatnonzero(np.maximum(d_plus, d_minus) <= gate)
        tested[ok] = True
        for i in ok:
            if near is None or not near[i]:
                members = np.empty(0, dtype=np.int64)
            else:
                members = np.asarray(near[i], dtype=np.int64)
            rel = X[members] - P[i]
            along = rel @ w
            across = rel @ wp
            inside = np.abs(along) <= ell / 10.0
            kern = []
            for h in range(-2, 3):
                sel = inside & (np.abs(across - h * eps) <= eps / 2.0)
                kern.append(Y[members[sel]] if sel.any() else empty)
            centre = kern[2]
            for h in (0, 1, 3, 4):
                wv = w1_uniform(centre, kern[h], u)
                if wv > best[i]:
                    best[i] = wv
    flag = tested & (best >= s)
    order = np.lexsort((jk[flag, 1], jk[flag, 0]))
    return EstimateSet(REFINED, P[flag][order], best[flag][order], params=asdict(p),
                       n_tested=int(tested.sum()))


def iterate_refinement(paths, p: FixedFreqParams, initial, target=None, rounds=None):
    """Apply :func:`refine` repeatedly, halving sE after every pass.

    Stops after ``rounds`` passes or once sE/2 <= ``target``.  Returns the
    list of estimates, one per pass.
    """
    if rounds is None and target is None:
        raise ConfigurationError("give a number of rounds or a target accuracy")
    out = []
    current = initial
    sE = p.sE
    while True:
        if rounds is not None and len(out) >= rounds:
            break
        if target is not None and rounds is None and sE / 2.0 <= target and out:
            break
        est = refine(paths, FixedFreqParams(p.s, p.eps_grid, p.u, p.ell, sE, p.kappa), current)
        out.append(est)
        if len(est) == 0:
            break
        current = est
        sE = sE / 2.0
    return out


# ---------------------------------------------------------------------------
# high-frequency regime: strip / half-plane crossing counts

@njit(cache=True)
def _strip_counts(X, Y, vx, vy, sqt, ell, eps, j0, k0, N, M):
    """Accumulate visit counts N and crossing counts M for one direction v.

    The strip in front of grid point p is {q : <q-p, v> in [sqt, 2 sqt],
    |<q-p, v_perp>| <= ell}; a crossing is a successor with <Y-p, v> < -sqt.
    """
    nj, nk = N.shape
    px_lo_off = min(-2.0 * sqt * vx, -sqt * vx) - ell * abs(vy)
    px_hi_off = max(-2.0 * sqt * vx, -sqt * vx) + ell * abs(vy)
    for i in range(X.shape[0]):
        xx = X[i, 0]
        xy = X[i, 1]
        # p = X - a v - b v_perp with a in [sqt, 2 sqt] and |b| <= ell
        jlo = int(math.floor((xx + px_lo_off) / eps)) - 1
        jhi = int(math.ceil((xx + px_hi_off) / eps)) + 1
        for j in range(max(jlo, j0), min(jhi, j0 + nj - 1) + 1):
            px = j * eps
            dx = xx - px
            lo = -np.inf
            hi = np.inf
            # a = dx vx + (xy - py) vy in [sqt, 2 sqt]
            if vy > 1e-12 or vy < -1e-12:
                y1 = xy - (sqt - dx * vx) / vy
                y2 = xy - (2.0 * sqt - dx * vx) / vy
                lo = max(lo, min(y1, y2))
                hi = min(hi, max(y1, y2))
            else:
                a = dx * vx
                if a < sqt - 1e-12 or a > 2.0 * sqt + 1e-12:
                    continue
            # b = -dx vy + (xy - py) vx in [-ell, ell]
            if vx > 1e-12 or vx < -1e-12:
                y1 = xy - (-ell + dx * vy) / vx
                y2 = xy - (ell + dx * vy) / vx
                lo = max(lo, min(y1, y2))
                hi = min(hi, max(y1, y2))
            else:
                b = -dx * vy
                if b < -ell - 1e-12 or b > ell + 1e-12:
                    continue
            if lo > hi:
                continue
            klo = int(math.ceil(lo / eps)) - 1
            khi = int(math.floor(hi / eps)) + 1
            for k in range(max(klo, k0), min(khi, k0 + nk - 1) + 1):
                py = k * eps
                a = dx * vx + (xy - py) * vy
                b = -dx * vy + (xy - py) * vx
                if a >= sqt and a <= 2.0 * sqt and b >= -ell and b <= ell:
                    N[j - j0, k - k0] += 1
                    if (Y[i, 0] - px) * vx + (Y[i, 1] - py) * vy < -sqt:
                        M[j - j0, k - k0] += 1


def recover_high_frequency(paths, p: HighFreqParams, t: Optional[float] = None) -> EstimateSet:
    """Flag grid points p whose strip R+(p, v) is visited >= n0 times with crossing ratio M/N < s."""
    if t is None:
        if hasattr(paths, "t"):
            t = paths.t
        elif isinstance(paths, np.ndarray):
            t = None
        else:
            ts = {getattr(q, "t", None) for q in paths}
            if len(ts) > 1:
                raise InvalidInputError("paths have different sampling intervals")
            t = ts.pop() if ts else None
    if not t or t <= 0:
        raise InvalidInputError("sampling interval t is required")
    X, Y = _pairs(paths)
    eps, ell, s, n0 = p.eps_grid, p.ell, p.s, p.n0
    if len(X) == 0:
        return EstimateSet(HIGH, np.empty((0, 2)), np.empty(0), params=asdict(p))
    sqt = math.sqrt(t)
    margin = 2.0 * sqt + ell
    j0, k0 = (np.floor((X.min(0) - margin) / eps).astype(np.int64) - 1)
    j1, k1 = (np.ceil((X.max(0) + margin) / eps).astype(np.int64) + 1)
    shape = (int(j1 - j0 + 1), int(k1 - k0 + 1))
    ratio = np.full(shape, np.inf)
    visited = np.zeros(shape, dtype=bool)
    N = np.zeros(shape, dtype=np.int64)
    M = np.zeros(shape, dtype=np.int64)
    Xs = np.ascontiguousarray(X[:, ::-1])
    Ys = np.ascontiguousarray(Y[:, ::-1])
    n_dir = int(math.floor(2.0 * math.pi * ell / eps)) + 1
    for n in range(n_dir):
        ang = n * eps / ell
        N[:] = 0
        M[:] = 0
        vx, vy = math.cos(ang), math.sin(ang)
        if abs(vx) >= abs(vy):
            _strip_counts(X, Y, vx, vy, sqt, ell, eps, int(j0), int(k0), N, M)
        else:
            # sweep rows along y instead; swapping the axes maps the strip
            # predicate onto itself exactly (a unchanged, b -> -b)
            _strip_counts(Xs, Ys, vy, vx, sqt, ell, eps, int(k0), int(j0), N.T, M.T)
        visited |= N > 0
        ok = N >= n0
        r = np.where(ok, M / np.maximum(N, 1), np.inf)
        np.minimum(ratio, r, out=ratio)
    flag = ratio < s
    jj, kk = np.nonzero(flag)  # row-major: sorted by (j, k)
    pts = np.column_stack([(jj + j0) * eps, (kk + k0) * eps])
    return EstimateSet(HIGH, pts, ratio[flag], params=asdict(p), n_tested=int(visited.sum()))


# ---------------------------------------------------------------------------
# parameters

def default_params(regime, t, T=None, kappa=None, lambda_max=None, rho=None, area=None,
                   eps=None, constants=None):
    """Parameters with the theoretical scalings and the frozen constants.

    fixed-freq: eps = c2 sqrt(t) unless given, box side eps/(3 sqrt 2),
        s = c4 sqrt(t), u = c5 sqrt(t).
    refined: ell = c5 sqrt(eps/kappa), grid eps_grid = kappa ell^2,
        s = c4 sqrt(t), u = c6 sqrt(t); sE starts at 2 eps.
    high-freq: s = c4, grid c5 sqrt(t), ell = c6 ln(T/t) sqrt(t),
        n0 = c7 ln(T/t).
    """
    if regime not in REGIMES:
        raise ConfigurationError(f"unknown regime {regime!r}")
    if not t > 0:
        raise ConfigurationError("t must be positive")
    c = dict(CONSTANTS[regime])
    if constants:
        c.update(constants)
    scales = [v for v in ((1 / kappa ** 2) if kappa else None,
                          (1 / lambda_max ** 2) if lambda_max else None,
                          rho ** 2 if rho else None) if v]
    if scales and t > min(scales):
        warnings.warn(f"t={t} exceeds min(1/kappa^2, 1/lambda_max^2, rho^2)={min(scales):.4g}; "
                      "the recovery guarantees do not apply", stacklevel=2)
    st = math.sqrt(t)
    if regime == FIXED:
        e = eps if eps is not None else c["c2"] * st
        return FixedFreqParams(s=c["c4"] * st, eps_grid=e / (3.0 * math.sqrt(2.0)),
                               u=c["c5"] * st, kappa=kappa)
    if regime == REFINED:
        if not kappa:
            raise ConfigurationError("refinement needs the curvature bound kappa")
        if eps is None:
            raise ConfigurationError("refinement needs a target accuracy eps")
        ell = c["c5"] * math.sqrt(eps / kappa)
        return FixedFreqParams(s=c["c4"] * st, eps_grid=kappa * ell ** 2, u=c["c6"] * st,
                               ell=ell, sE=2.0 * eps, kappa=kappa)
    if not T or T <= t:
        raise ConfigurationError("high-frequency parameters need T > t")
    lg = math.log(T / t)
    return HighFreqParams(s=c["c4"], eps_grid=c["c5"] * st, ell=c["c6"] * lg * st,
                          n0=max(1.0, c["c7"] * lg))


def recommended_T(regime, eps, t_mix, pi_min, area, kappa=None, eta=0.05):
    """Sample-size condition on T with its absolute constant set to 1.

    Only meaningful as an order of magnitude: t_mix and pi_min are user
    inputs and are never estimated here.
    """
    if not (t_mix and pi_min and eps and area):
        return None
    if regime == REFINED:
        if not kappa:
            return None
        q = math.sqrt(kappa / eps ** 3)
        return t_mix / pi_min * q * math.log(area / eta * q)
    return t_mix / (pi_min * eps ** 2) * math.log(area / (eta * eps ** 2))


# ---------------------------------------------------------------------------
# hit sets

def hit_set(path, barrier, tol) -> PointSet:
    """Dense-trace points within ``tol`` of the barrier, projected onto it (time order)."""
    if getattr(path, "dense", None) is None:
        raise MissingTraceError("hit_set needs a path simulated with record_dense=True")
    d, q = barrier_distances(barrier, path.dense, tol, return_points=True)
    return PointSet(q[np.isfinite(d)])


# ---------------------------------------------------------------------------
# CSV

ESTIMATE_HEADER = ("x", "y", "regime", "diagnostic", "cell_size")


def write_estimate_csv(est: EstimateSet, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ESTIMATE_HEADER)
    for (x, y), dv in zip(est.points, est.diagnostics):
        w.writerow((repr(float(x)), repr(float(y)), est.regime, repr(float(dv)),
                    repr(float(est.cell_size))))


def read_estimate_csv(fh) -> EstimateSet:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    r = csv.reader(fh)
    header = next(r, None)
    if header is None or tuple(h.strip() for h in header) != ESTIMATE_HEADER:
        raise InvalidInputError(f"expected header {','.join(ESTIMATE_HEADER)}")
    rows = [row for row in r if row]
    if not rows:
        return EstimateSet(FIXED, np.empty((0, 2)), np.empty(0))
    regimes = {row[2] for row in rows}
    if len(regimes) != 1:
        raise InvalidInputError("estimate file mixes regimes")
    pts = np.array([[float(row[0]), float(row[1])] for row in rows])
    diag = np.array([float(row[3]) for row in rows])
    return EstimateSet(regimes.pop(), pts, diag, cell_size=float(rows[0][4]))
