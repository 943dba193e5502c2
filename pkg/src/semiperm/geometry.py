"""Closed barrier curves, side tests, distances and environment parameters.

Every curve is represented twice: by its analytic description (circle,
ellipse or periodic cubic spline) and by a cached counter-clockwise
polyline.  All queries go through the polyline so that the different curve
kinds behave identically; the analytic form is only used for curvature of
the primitives.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull, cKDTree

from .errors import InvalidCurveError, InvalidEnvironmentError

DEFAULT_RESOLUTION = 2048
ON_TOLERANCE = 1e-9  # relative to the curve diameter
# vertex pairs count towards the self-bottleneck when arc/chord >= this ratio
BOTTLENECK_RATIO = 1.5

_CHUNK = 4096


class Side(enum.IntEnum):
    NEGATIVE = -1
    ON = 0
    POSITIVE = 1


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _signed_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """A smooth simple closed curve with a cached polyline.

    Use the :meth:`circle`, :meth:`ellipse` and :meth:`spline` constructors.
    ``params`` holds the analytic description; ``vertices`` the open list of
    polyline vertices (counter-clockwise) and ``polyline`` the closed version
    whose last point repeats the first one.
    """

    kind: str
    params: dict
    resolution: int = DEFAULT_RESOLUTION
    vertices: np.ndarray = field(init=False, repr=False)
    _spline: Optional[CubicSpline] = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind == "circle":
            verts = self._circle_vertices()
        elif self.kind == "ellipse":
            verts = self._ellipse_vertices()
        elif self.kind == "spline":
            verts = self._spline_vertices()
        else:
            raise InvalidCurveError(f"unknown curve kind {self.kind!r}")
        verts = np.ascontiguousarray(verts, dtype=float)
        if len(verts) < 3:
            raise InvalidCurveError("a closed curve needs at least 3 polyline vertices")
        if not np.all(np.isfinite(verts)):
            raise InvalidCurveError("non-finite curve vertices")
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    # -- constructors -------------------------------------------------
    @classmethod
    def circle(cls, center, radius, resolution=DEFAULT_RESOLUTION, phase=0.0):
        if not radius > 0:
            raise InvalidCurveError("circle radius must be positive")
        params = {"center": (float(center[0]), float(center[1])),
                  "radius": float(radius), "phase": float(phase)}
        return cls("circle", params, int(resolution))

    @classmethod
    def ellipse(cls, center, a, b, rotation=0.0, resolution=DEFAULT_RESOLUTION):
        if not (a > 0 and b > 0):
            raise InvalidCurveError("ellipse semi-axes must be positive")
        params = {"center": (float(center[0]), float(center[1])),
                  "a": float(a), "b": float(b), "rotation": float(rotation)}
        return cls("ellipse", params, int(resolution))

    @classmethod
    def spline(cls, control_points, resolution=DEFAULT_RESOLUTION):
        pts = np.asarray(control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise InvalidCurveError("a periodic spline needs at least 3 control points")
        if np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        params = {"control_points": tuple(map(tuple, pts.tolist()))}
        return cls("spline", params, int(resolution))

    # -- polyline construction ------------------------------------------
    def _circle_vertices(self):
        p = self.params
        n = self.resolution
        theta = p["phase"] + 2.0 * np.pi * np.arange(n) / n
        cx, cy = p["center"]
        r = p["radius"]
        return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])

    def _ellipse_vertices(self):
        p = self.params
        n = self.resolution
        theta = 2.0 * np.pi * np.arange(n) / n
        local = np.column_stack([p["a"] * np.cos(theta), p["b"] * np.sin(theta)])
        return local @ _rotation(p["rotation"]).T + np.asarray(p["center"])

    def _spline_vertices(self):
        pts = np.asarray(self.params["control_points"], dtype=float)
        if _signed_area(pts) < 0:
            # keep the first control point first, reverse the traversal
            pts = np.vstack([pts[:1], pts[:0:-1]])
        closed = np.vstack([pts, pts[:1]])
        chord = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        if np.any(chord == 0):
            raise InvalidCurveError("repeated consecutive control points")
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        spline = CubicSpline(knots, closed, bc_type="periodic")
        object.__setattr__(self, "_spline", spline)
        counts = np.maximum(1, np.round(self.resolution * chord / knots[-1]).astype(int))
        params = np.concatenate([
            np.linspace(knots[i], knots[i + 1], counts[i], endpoint=False)
            for i in range(len(chord))
        ])
        return spline(params)

    # -- properties -------------------------------------------------------
    @property
    def polyline(self):
        return np.vstack([self.vertices, self.vertices[:1]])

    @property
    def segments(self):
        """Start and end points of every polyline segment, shape (n, 2) each."""
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def arc_lengths(self):
        """Cumulative arc length at each vertex (starts at 0)."""
        a, b = self.segments
        lengths = np.linalg.norm(b - a, axis=1)
        return np.concatenate([[0.0], np.cumsum(lengths)[:-1]])

    @property
    def length(self):
        a, b = self.segments
        return float(np.linalg.norm(b - a, axis=1).sum())

    @property
    def area(self):
        return abs(_signed_area(self.vertices))

    @property
    def diameter(self):
        v = self.vertices
        try:
            hull = v[ConvexHull(v).vertices]
        except Exception:  # degenerate hull, fall back to all vertices
            hull = v
        diff = hull[:, None, :] - hull[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    @property
    def centroid(self):
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = cross.sum() / 2.0
        cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * a)
        cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * a)
        return np.array([cx, cy])

    def transformed(self, angle=0.0, shift=(0.0, 0.0)):
        """Return the image of this curve under a rigid motion.

        The polyline of the result is exactly the rotated and shifted polyline
        of ``self`` (up to rounding), which keeps polyline-level quantities
        invariant.
        """
        rot = _rotation(angle)
        shift = np.asarray(shift, dtype=float)
        p = dict(self.params)
        if self.kind == "circle":
            p["center"] = tuple(rot @ np.asarray(p["center"]) + shift)
            p["phase"] = p["phase"] + angle
        elif self.kind == "ellipse":
            p["center"] = tuple(rot @ np.asarray(p["center"]) + shift)
            p["rotation"] = p["rotation"] + angle
        else:
            pts = np.asarray(p["control_points"]) @ rot.T + shift
            p["control_points"] = tuple(map(tuple, pts.tolist()))
        return ClosedCurve(self.kind, p, self.resolution)

    def to_dict(self):
        out = {"kind": self.kind, "resolution": self.resolution}
        for k, v in self.params.items():
            out[k] = [list(c) for c in v] if k == "control_points" else (list(v) if isinstance(v, tuple) else v)
        return out


@dataclass(frozen=True)
class Barrier:
    """A closed curve with the crossing rates of its two sides.

    ``lambda_plus`` is the rate (per unit local time) of switching from the
    negative to the positive side, ``lambda_minus`` from positive to
    negative.  ``math.inf`` marks a barrier side that is crossed instantly and
    0 one that is never crossed.
    """

    curve: ClosedCurve
    lambda_plus: float = math.inf
    lambda_minus: float = math.inf
    impermeable: bool = False

    def __post_init__(self):
        for name in ("lambda_plus", "lambda_minus"):
            val = getattr(self, name)
            if not (val >= 0):
                raise InvalidEnvironmentError(f"{name} must be >= 0, got {val}")

    @classmethod
    def outer(cls, curve):
        return cls(curve, math.inf, math.inf, impermeable=True)

    def leaving_rate(self, side):
        """Rate at which side ``side`` (+1/-1) is left."""
        if self.impermeable:
            return 0.0
        return self.lambda_minus if side > 0 else self.lambda_plus

    @property
    def on_tolerance(self):
        return ON_TOLERANCE * self.curve.diameter


def _as_barrier(obj):
    return obj if isinstance(obj, Barrier) else Barrier(obj)


@dataclass(frozen=True)
class Environment:
    outer: Barrier
    inner: tuple = ()

    def __post_init__(self):
        outer = self.outer if isinstance(self.outer, Barrier) else Barrier.outer(self.outer)
        if not outer.impermeable:
            outer = Barrier.outer(outer.curve)
        object.__setattr__(self, "outer", outer)
        inner = tuple(_as_barrier(b) for b in self.inner)
        object.__setattr__(self, "inner", inner)
        if self.area <= 0:
            raise InvalidEnvironmentError("domain area must be positive")
        for i, b in enumerate(inner):
            if b.impermeable:
                raise InvalidEnvironmentError("inner barriers must be semipermeable")
            sides = side_of(outer, b.curve.vertices)
            if np.any(sides != Side.POSITIVE):
                raise InvalidEnvironmentError(f"inner barrier {i + 1} is not strictly inside the outer curve")
        for i in range(len(inner)):
            for j in range(i + 1, len(inner)):
                if _curves_cross(inner[i].curve, inner[j].curve):
                    raise InvalidEnvironmentError(f"inner barriers {i + 1} and {j + 1} intersect")

    @property
    def barriers(self):
        return (self.outer,) + self.inner

    @property
    def m(self):
        return len(self.inner)

    @property
    def area(self):
        return self.outer.curve.area

    def rigid_motion(self, angle=0.0, shift=(0.0, 0.0)):
        def move(b):
            return Barrier(b.curve.transformed(angle, shift), b.lambda_plus, b.lambda_minus, b.impermeable)
        return Environment(move(self.outer), tuple(move(b) for b in self.inner))

    def sides_of(self, p):
        """Side vector (+1/-1 per barrier, outer first) of a point off the barriers."""
        out = [1]
        for b in self.inner:
            s = side_of(b, p)
            out.append(1 if s == Side.POSITIVE else -1 if s == Side.NEGATIVE else 0)
        return out


@dataclass(frozen=True)
class EnvParameters:
    kappa: float
    rho: float
    lambda_max: float
    pi_min: Optional[float] = None
    t_mix: Optional[float] = None


# ---------------------------------------------------------------------------
# point queries

def _curve(obj):
    return obj.curve if isinstance(obj, Barrier) else obj


def _segment_projection(a, b, pts):
    """Nearest points of ``pts`` (N,2) on every segment (S) -> tau (N,S), d2 (N,S)."""
    ab = b - a
    ab2 = (ab ** 2).sum(1)
    rel = pts[:, None, :] - a[None, :, :]
    tau = np.clip((rel * ab[None]).sum(-1) / ab2[None], 0.0, 1.0)
    diff = rel - tau[..., None] * ab[None]
    return tau, (diff ** 2).sum(-1)


def distances(curve, pts):
    """Distance from each point in ``pts`` to the polyline of ``curve``."""
    c = _curve(curve)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a, b = c.segments
    out = np.empty(len(pts))
    step = max(1, _CHUNK * 256 // len(a))
    for i in range(0, len(pts), step):
        _, d2 = _segment_projection(a, b, pts[i:i + step])
        out[i:i + step] = np.sqrt(d2.min(1))
    return out


def _winding(vertices, pts):
    """Winding numbers of the closed polygon around each point."""
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    out = np.empty(len(pts), dtype=int)
    step = max(1, _CHUNK * 256 // len(a))
    for i in range(0, len(pts), step):
        p = pts[i:i + step]
        px, py = p[:, 0:1], p[:, 1:2]
        is_left = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])
        up = (a[:, 1] <= py) & (b[:, 1] > py) & (is_left > 0)
        down = (a[:, 1] > py) & (b[:, 1] <= py) & (is_left < 0)
        out[i:i + step] = up.sum(1) - down.sum(1)
    return out


def side_of(barrier, p, tol=None):
    """Which side of the barrier ``p`` lies on.

    Accepts a single point (returns a :class:`Side`) or an array of points
    (returns an int array with values in {-1, 0, 1}).  Points closer than
    ``tol`` (default: 1e-9 times the curve diameter) count as ON.
    """
    c = _curve(barrier)
    if len(c.vertices) < 3:
        raise InvalidCurveError("degenerate polyline")
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    if tol is None:
        tol = ON_TOLERANCE * c.diameter
    wn = _winding(c.vertices, pts)
    res = np.where(wn != 0, 1, -1)
    res[distances(c, pts) <= tol] = 0
    return Side(int(res[0])) if single else res


def nearest_point(barrier, p):
    """Closest polyline point to ``p``.

    Returns ``(q, dist, normal)`` with ``normal`` the inward (positive side)
    unit normal at ``q``.  Exact ties go to the smallest arc-length parameter.
    """
    c = _curve(barrier)
    p = np.asarray(p, dtype=float)
    a, b = c.segments
    tau, d2 = _segment_projection(a, b, p[None])
    tau, d2 = tau[0], d2[0]
    d = np.sqrt(d2)
    dmin = d.min()
    k = int(np.flatnonzero(d <= dmin + 1e-12 * max(1.0, c.diameter))[0])
    t = tau[k]
    q = a[k] + t * (b[k] - a[k])
    seg_n = _inward_normals(a, b)
    if 0.0 < t < 1.0:
        normal = seg_n[k]
    else:
        vn = _vertex_normals(seg_n)
        normal = vn[k] if t == 0.0 else vn[(k + 1) % len(a)]
    return q, float(np.linalg.norm(p - q)), normal


def _inward_normals(a, b):
    d = b - a
    n = np.column_stack([-d[:, 1], d[:, 0]])  # left normal of a CCW polygon
    return n / np.linalg.norm(n, axis=1)[:, None]


def _vertex_normals(seg_normals):
    """Pseudo-normal at each vertex: normalized sum of the two adjacent segment normals."""
    v = seg_normals + np.roll(seg_normals, 1, axis=0)
    return v / np.linalg.norm(v, axis=1)[:, None]


def max_curvature(curve):
    """Largest unsigned curvature of the curve."""
    c = _curve(curve)
    if c.kind == "circle":
        return 1.0 / c.params["radius"]
    if c.kind == "ellipse":
        a, b = c.params["a"], c.params["b"]
        return max(a / b ** 2, b / a ** 2)
    # Menger curvature of consecutive vertex triples
    p0 = np.roll(c.vertices, 1, axis=0)
    p1 = c.vertices
    p2 = np.roll(c.vertices, -1, axis=0)
    u, v = p1 - p0, p2 - p1
    cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    denom = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1) * np.linalg.norm(p2 - p0, axis=1)
    return float((2.0 * cross / denom).max())


def polyline_distance(c1, c2):
    """Minimum distance between two polylines (no intersection assumed)."""
    best = math.inf
    for x, y in ((c1, c2), (c2, c1)):
        tree = cKDTree(y.vertices)
        k = min(4, len(y.vertices))
        _, idx = tree.query(x.vertices, k=k)
        idx = np.atleast_2d(idx.reshape(len(x.vertices), -1))
        ya, yb = y.segments
        n = len(ya)
        for col in range(idx.shape[1]):
            for seg in (idx[:, col], (idx[:, col] - 1) % n):
                a, b = ya[seg], yb[seg]
                ab = b - a
                tau = np.clip(((x.vertices - a) * ab).sum(1) / (ab ** 2).sum(1), 0, 1)
                d = np.linalg.norm(x.vertices - a - tau[:, None] * ab, axis=1)
                best = min(best, float(d.min()))
    return best


def self_bottleneck(curve):
    """Smallest chord between vertex pairs that are far apart along the curve.

    A pair counts when its shorter arc length is at least ``BOTTLENECK_RATIO``
    times the chord, which picks out U-bends and (for convex curves) roughly
    the diameter.
    """
    c = _curve(curve)
    v = c.vertices
    s = c.arc_lengths
    total = c.length
    best = math.inf
    step = 256
    for i in range(0, len(v), step):
        chord = np.linalg.norm(v[i:i + step, None, :] - v[None, :, :], axis=-1)
        arc = np.abs(s[i:i + step, None] - s[None, :])
        arc = np.minimum(arc, total - arc)
        mask = arc >= BOTTLENECK_RATIO * chord
        mask &= arc > 0
        if mask.any():
            best = min(best, float(chord[mask].min()))
    return best


def _curves_cross(c1, c2):
    s = side_of(c2, c1.vertices)
    return (np.any(s == 1) and np.any(s == -1)) or np.any(s == 0)


def min_separation(env):
    """Separation surrogate for the barrier spacing parameter.

    Half the minimum of (a) the distance between any two distinct barrier
    polylines and (b) every curve's self-bottleneck.  This is a conservative
    stand-in for the ball-connectivity radius, exact only up to polyline
    resolution.
    """
    curves = [b.curve for b in env.barriers]
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            if _curves_cross(curves[i], curves[j]):
                raise InvalidEnvironmentError(f"barriers {i} and {j} overlap")
    best = math.inf
    for i in range(len(curves)):
        best = min(best, self_bottleneck(curves[i]))
        for j in range(i + 1, len(curves)):
            best = min(best, polyline_distance(curves[i], curves[j]))
    return 0.5 * best


def environment_parameters(env, pi_min=None, t_mix=None):
    kappa = max(max_curvature(b.curve) for b in env.barriers)
    rates = [r for b in env.inner for r in (b.lambda_plus, b.lambda_minus)]
    lam = max(rates) if rates else 0.0
    return EnvParameters(kappa=kappa, rho=min_separation(env), lambda_max=lam,
                         pi_min=pi_min, t_mix=t_mix)


# ---------------------------------------------------------------------------
# segment index used by the simulation kernels

@dataclass(frozen=True, eq=False)
class SegmentIndex:
    """Flat segment arrays of all barriers plus a uniform-grid bucket index."""

    seg_a: np.ndarray
    seg_b: np.ndarray
    seg_normal: np.ndarray
    vert_normal_a: np.ndarray
    vert_normal_b: np.ndarray
    seg_barrier: np.ndarray
    seg_arc: np.ndarray
    origin: np.ndarray
    cell: float
    shape: tuple
    cell_ptr: np.ndarray
    cell_items: np.ndarray

    @classmethod
    def build(cls, env, cell):
        seg_a, seg_b, seg_n, vna, vnb, bar, arc = [], [], [], [], [], [], []
        for i, barrier in enumerate(env.barriers):
            c = barrier.curve
            a, b = c.segments
            n = _inward_normals(a, b)
            vn = _vertex_normals(n)
            seg_a.append(a)
            seg_b.append(b)
            seg_n.append(n)
            vna.append(vn)
            vnb.append(np.roll(vn, -1, axis=0))
            bar.append(np.full(len(a), i, dtype=np.int64))
            arc.append(c.arc_lengths)
        seg_a = np.vstack(seg_a)
        seg_b = np.vstack(seg_b)
        lo = env.outer.curve.vertices.min(0) - 2 * cell
        hi = env.outer.curve.vertices.max(0) + 2 * cell
        shape = tuple(int(v) for v in np.ceil((hi - lo) / cell).astype(int) + 1)
        lo_c = np.floor((np.minimum(seg_a, seg_b) - lo) / cell).astype(np.int64)
        hi_c = np.floor((np.maximum(seg_a, seg_b) - lo) / cell).astype(np.int64)
        buckets = [[] for _ in range(shape[0] * shape[1])]
        for s in range(len(seg_a)):
            for ix in range(lo_c[s, 0], hi_c[s, 0] + 1):
                for iy in range(lo_c[s, 1], hi_c[s, 1] + 1):
                    buckets[ix * shape[1] + iy].append(s)
        ptr = np.zeros(len(buckets) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(b) for b in buckets])
        items = np.fromiter((s for b in buckets for s in b), dtype=np.int64, count=int(ptr[-1]))
        return cls(seg_a, seg_b, np.vstack(seg_n), np.vstack(vna), np.vstack(vnb),
                   np.concatenate(bar), np.concatenate(arc), lo, float(cell), shape, ptr, items)
