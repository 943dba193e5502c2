"""Empirical measures, truncated Wasserstein-1, Hausdorff distance and binning.

The truncated distance uses the ground cost ``min(|x - y|, u)`` and is solved
exactly with POT's network simplex.  By convention the distance between two
zero measures is 0 and between a probability measure and the zero measure
is ``u``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, InvalidMeasureError

# POT probes every installed array backend on import; none of them is needed
# here and probing the deep-learning ones costs seconds.
for _name in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")
import ot  # noqa: E402

try:  # the bare C solver skips POT's argument checking (about 8x faster per call)
    from ot.lp.emd_wrap import emd_c as _emd_c
except ImportError:  # pragma: no cover - depends on the POT build
    _emd_c = None

EMD_MAX_ITER = 1_000_000
_MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Finite weighted point set; a probability measure or the zero measure."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(pts) != len(w):
            raise InvalidMeasureError("points and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidMeasureError("weights must be finite and nonnegative")
        total = float(w.sum())
        if abs(total) > _MASS_TOL and abs(total - 1.0) > _MASS_TOL:
            raise InvalidMeasureError(f"total mass must be 0 or 1, got {total}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls):
        return cls(np.empty((0, 2)), np.empty(0))

    @classmethod
    def uniform(cls, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            return cls.zero()
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    @property
    def total(self):
        return float(self.weights.sum())

    @property
    def is_zero(self):
        return self.total <= _MASS_TOL

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class PointSet:
    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 2))

    def __len__(self):
        return len(self.points)


def _emd(a, b, M):
    """Optimal transport cost between histograms a and b (equal total mass)."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    b = b * (a.sum() / b.sum())
    M = np.ascontiguousarray(M, dtype=np.float64)
    if _emd_c is not None:
        plan, cost, _, _, status = _emd_c(a, b, M, EMD_MAX_ITER, 1)
        if status == 1:
            return float(np.sum(plan * M))
    return float(ot.emd2(a, b, M, numItermax=EMD_MAX_ITER))


def truncated_cost(X, Y, u):
    return np.minimum(cdist(X, Y), u)


def truncated_w1(P: EmpiricalMeasure, Q: EmpiricalMeasure, u: float) -> float:
    """Exact W1 between P and Q under the ground cost min(|x-y|, u)."""
    if not u > 0:
        raise ValueError("truncation level u must be positive")
    pz, qz = P.is_zero, Q.is_zero
    if pz and qz:
        return 0.0
    if pz or qz:
        return float(u)
    keep_p = P.weights > 0
    keep_q = Q.weights > 0
    return _emd(P.weights[keep_p], Q.weights[keep_q],
                truncated_cost(P.points[keep_p], Q.points[keep_q], u))


def w1_uniform(X, Y, u):
    """truncated_w1 between uniform measures on the rows of X and Y (either may be empty)."""
    nx, ny = len(X), len(Y)
    if nx == 0 and ny == 0:
        return 0.0
    if nx == 0 or ny == 0:
        return float(u)
    M = truncated_cost(X, Y, u)
    if nx == 1 or ny == 1:
        return float(M.mean())
    return _emd(np.full(nx, 1.0 / nx), np.full(ny, 1.0 / ny), M)


def _as_points(A):
    pts = getattr(A, "points", A)
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def directed_hausdorff(A, B) -> float:
    """sup over a in A of the distance from a to B."""
    A, B = _as_points(A), _as_points(B)
    if len(A) == 0 or len(B) == 0:
        raise InvalidInputError("Hausdorff distance is undefined for empty point sets")
    d, _ = cKDTree(B).query(A)
    return float(d.max())


def hausdorff(A, B) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    return max(directed_hausdorff(A, B), directed_hausdorff(B, A))


def bin_measure(Q: EmpiricalMeasure, d: float) -> EmpiricalMeasure:
    """Collapse the mass of every bin [i d, (i+1) d) x [j d, (j+1) d) onto its centre."""
    if not d > 0:
        raise ValueError("bin size must be positive")
    keep = Q.weights > 0
    if not keep.any():
        return EmpiricalMeasure.zero()
    idx = np.floor(Q.points[keep] / d).astype(np.int64)
    bins, inverse = np.unique(idx, axis=0, return_inverse=True)
    mass = np.bincount(inverse.reshape(-1), weights=Q.weights[keep], minlength=len(bins))
    return EmpiricalMeasure((bins + 0.5) * d, mass)


# ---------------------------------------------------------------------------
# regions and empirical transition kernels

@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box [x0, x1] x [y0, y1]."""

    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return ((pts[:, 0] >= self.x0) & (pts[:, 0] <= self.x1)
                & (pts[:, 1] >= self.y0) & (pts[:, 1] <= self.y1))


@dataclass(frozen=True)
class OrientedRect:
    """Closed rectangle {x : |<x-c, w>| <= half_length, |<x-c, w_perp> - offset| <= half_width}."""

    center: tuple
    angle: float
    half_length: float
    half_width: float
    offset: float = 0.0

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.angle), math.sin(self.angle)
        rel = pts - np.asarray(self.center, dtype=float)
        along = rel[:, 0] * c + rel[:, 1] * s
        across = -rel[:, 0] * s + rel[:, 1] * c
        return (np.abs(along) <= self.half_length) & (np.abs(across - self.offset) <= self.half_width)


Region = Union[Box, OrientedRect]


def transition_pairs(paths) -> tuple:
    """(X, Y): every observed transition X_{it} -> X_{(i+1)t}, pooled over paths.

    Transitions never cross from the end of one path to the start of the next.
    """
    if hasattr(paths, "samples") or (isinstance(paths, np.ndarray) and paths.ndim == 2):
        paths = [paths]
    xs, ys = [], []
    for p in paths:
        s = np.asarray(getattr(p, "samples", p), dtype=float).reshape(-1, 2)
        if len(s) >= 2:
            xs.append(s[:-1])
            ys.append(s[1:])
    if not xs:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.concatenate(xs), np.concatenate(ys)


def empirical_kernel(paths, region: Region) -> EmpiricalMeasure:
    """Uniform measure on the successors of the samples that fall in ``region``.

    ``paths`` is a SamplePath, an array of samples, or a sequence of either;
    several paths are pooled without cross-path transitions.  Returns the
    zero measure when no sample with a successor lies in the region.
    """
    X, Y = transition_pairs(paths)
    return EmpiricalMeasure.uniform(Y[region.contains(X)])
