"""Report figures: matplotlib PNGs and a hand-written SVG overlay.

The SVG is written directly so that its structure is stable and easy to
post-process: the viewBox is in data coordinates (y flipped by a group
transform), every barrier is one ``<path>``, samples are ``<circle>``
elements and flagged cells are ``<rect>`` elements (grid points are drawn
as small squares centred on the point).
"""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# keep PNG bytes independent of the matplotlib version
PNG_METADATA = {"Software": None}
MAX_SAMPLE_DOTS = 20000


def _thin(samples, limit=MAX_SAMPLE_DOTS):
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(samples) <= limit:
        return samples
    step = int(math.ceil(len(samples) / limit))
    return samples[::step]


def _fmt(v):
    return f"{v:.6g}"


def _path_d(poly):
    head = f"M{_fmt(poly[0, 0])},{_fmt(poly[0, 1])}"
    body = "".join(f" L{_fmt(x)},{_fmt(y)}" for x, y in poly[1:])
    return head + body + " Z"


def _bounds(env, extra=()):
    pts = [env.outer.curve.vertices] + [np.asarray(e, dtype=float).reshape(-1, 2) for e in extra if len(e)]
    allp = np.concatenate(pts)
    lo, hi = allp.min(0), allp.max(0)
    pad = 0.05 * float(max(hi - lo))
    return lo - pad, hi + pad


def svg_overlay(env, estimate=None, samples=None, stroke=None) -> str:
    """SVG document with barriers, optional samples and flagged cells."""
    samples = np.empty((0, 2)) if samples is None else _thin(samples)
    pts = np.empty((0, 2)) if estimate is None else estimate.points
    lo, hi = _bounds(env, [samples, pts])
    w, h = hi - lo
    stroke = stroke or float(max(w, h)) / 400.0
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_fmt(lo[0])} {_fmt(-hi[1])} '
           f'{_fmt(w)} {_fmt(h)}" width="800" height="{int(round(800 * h / w))}">',
           '<g transform="scale(1,-1)">']
    out.append('<g id="barriers" fill="none" stroke="black">')
    for i, b in enumerate(env.barriers):
        sw = 2 * stroke if i == 0 else 1.5 * stroke
        out.append(f'<path id="barrier-{i}" stroke-width="{_fmt(sw)}" d="{_path_d(b.curve.vertices)}"/>')
    out.append("</g>")
    if len(samples):
        r = stroke
        out.append('<g id="samples" fill="steelblue" fill-opacity="0.5">')
        out.extend(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}"/>' for x, y in samples)
        out.append("</g>")
    if estimate is not None and len(estimate):
        out.append(f'<g id="flagged" fill="crimson" fill-opacity="0.6" data-regime="{estimate.regime}">')
        if estimate.cell_size > 0:
            d = estimate.cell_size
            for x, y in estimate.points:
                out.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(d)}" height="{_fmt(d)}"/>')
        else:
            d = 3 * stroke
            for x, y in estimate.points:
                out.append(f'<rect x="{_fmt(x - d / 2)}" y="{_fmt(y - d / 2)}" '
                           f'width="{_fmt(d)}" height="{_fmt(d)}"/>')
        out.append("</g>")
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(fname, env, estimate=None, samples=None):
    with open(fname, "w", newline="\n") as fh:
        fh.write(svg_overlay(env, estimate, samples))


def _save(fig, fname):
    fig.savefig(fname, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def _draw_env(ax, env):
    for i, b in enumerate(env.barriers):
        p = b.curve.polyline
        ax.plot(p[:, 0], p[:, 1], color="black", lw=1.5 if i == 0 else 1.2)


def plot_overlay(fname, env, estimate=None, samples=None, title=None):
    """PNG analogue of the SVG overlay."""
    fig, ax = plt.subplots(figsize=(6, 6))
    if env is not None:
        _draw_env(ax, env)
    if samples is not None and len(samples):
        s = _thin(samples)
        ax.plot(s[:, 0], s[:, 1], ".", ms=1, color="steelblue", alpha=0.4)
    if estimate is not None and len(estimate):
        if estimate.cell_size > 0:
            c = estimate.points + estimate.cell_size / 2
            ax.plot(c[:, 0], c[:, 1], "s", ms=2, color="crimson")
        else:
            ax.plot(estimate.points[:, 0], estimate.points[:, 1], "s", ms=1.5, color="crimson")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    _save(fig, fname)


def plot_covertime(fname, result):
    """Mean cover time against ln(1/eps)^2 with the limiting slope."""
    x = np.log(1.0 / result.eps) ** 2
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(x, result.mean(), yerr=2 * np.nan_to_num(result.stderr()), fmt="o", label="Monte Carlo")
    xs = np.linspace(0, x.max() * 1.05, 50)
    ax.plot(xs, result.limit * xs, "--", label=f"slope 2 Area / pi = {result.limit:.3g}")
    ax.set_xlabel("ln(1/eps)^2")
    ax.set_ylabel("mean cover time")
    ax.legend()
    _save(fig, fname)


def plot_distances(fname, d, title=None):
    """Histogram of estimate-to-barrier distances."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(d), bins=40, color="gray")
    ax.set_xlabel("distance to nearest barrier")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    _save(fig, fname)
