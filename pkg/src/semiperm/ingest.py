"""Loading and preprocessing of recorded animal tracks.

Input is a Movebank-style CSV with one row per fix.  A schema maps the
column names to the fields ``id``, ``timestamp`` and either ``x``/``y``
(planar) or ``lon``/``lat`` (degrees).  Timestamps may be numbers of
seconds or ISO 8601 date-times (naive ones are read as UTC).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np

from .errors import IngestError
from .process import SamplePath

EARTH_RADIUS_KM = 6371.0
PLANAR, LONLAT = "planar", "lonlat"

DEFAULT_SCHEMA = {"id": "id", "timestamp": "timestamp", "x": "x", "y": "y"}
MOVEBANK_SCHEMA = {"id": "individual-local-identifier", "timestamp": "timestamp",
                   "lon": "location-long", "lat": "location-lat"}


@dataclass
class RawTrack:
    id: str
    times: np.ndarray
    xy: np.ndarray  # (x, y) or (lon, lat)

    def __len__(self):
        return len(self.times)


@dataclass
class TrackSet:
    tracks: List[RawTrack]
    crs: str = PLANAR
    dropped_rows: int = 0
    dropped_tracks: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.tracks)


def parse_time(text):
    try:
        return float(text)
    except ValueError:
        pass
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.timestamp()


def _columns(header, schema):
    header = [h.strip() for h in header]
    if "lon" in schema or "lat" in schema:
        fields, crs = ("id", "timestamp", "lon", "lat"), LONLAT
    else:
        fields, crs = ("id", "timestamp", "x", "y"), PLANAR
    cols = {}
    missing = []
    for f in fields:
        name = schema.get(f)
        if name is None or name not in header:
            missing.append(f"{f}={name!r}")
        else:
            cols[f] = header.index(name)
    if missing:
        raise IngestError(f"header lacks columns: {', '.join(missing)}", rows=[1])
    return cols, fields, crs


def load_tracks(source, schema: Optional[Dict[str, str]] = None, max_missing_fraction=0.5,
                max_bad_fraction=0.01) -> TrackSet:
    """Parse a track CSV into a :class:`TrackSet`.

    Rows with a blank required field are dropped and counted; a track that
    loses more than ``max_missing_fraction`` of its rows this way is dropped
    entirely.  Rows whose fields do not parse are reported by row number
    (the header is row 1) and raise when they exceed ``max_bad_fraction``
    of all rows; otherwise they are dropped as well.  Fixes are ordered by
    time within each track and repeated timestamps keep the first fix.
    """
    schema = dict(schema or DEFAULT_SCHEMA)
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="") as fh:
            return load_tracks(fh, schema, max_missing_fraction, max_bad_fraction)
    fh = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None:
        raise IngestError("empty file: no header")
    cols, fields, crs = _columns(header, schema)
    order: List[str] = []
    recs: Dict[str, list] = {}
    blank: Dict[str, int] = {}
    bad_rows = []
    n_rows = 0
    for rowno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        n_rows += 1
        try:
            vals = [row[cols[f]].strip() for f in fields]
        except IndexError:
            bad_rows.append(rowno)
            continue
        tid = vals[0]
        if tid not in recs:
            order.append(tid)
            recs[tid] = []
            blank[tid] = 0
        if any(v == "" for v in vals):
            blank[tid] += 1
            continue
        try:
            t = parse_time(vals[1])
            a, b = float(vals[2]), float(vals[3])
            if not (math.isfinite(t) and math.isfinite(a) and math.isfinite(b)):
                raise ValueError
        except ValueError:
            bad_rows.append(rowno)
            continue
        recs[tid].append((t, a, b))
    if bad_rows and len(bad_rows) > max_bad_fraction * max(n_rows, 1):
        raise IngestError(f"{len(bad_rows)} of {n_rows} rows could not be parsed", rows=bad_rows)
    tracks, dropped_tracks = [], []
    dropped = len(bad_rows)
    for tid in order:
        rows = recs[tid]
        total = len(rows) + blank[tid]
        dropped += blank[tid]
        if total == 0 or blank[tid] > max_missing_fraction * total or not rows:
            dropped_tracks.append(tid)
            continue
        arr = np.array(rows, dtype=float)
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        keep = np.concatenate([[True], np.diff(arr[:, 0]) > 0])
        dropped += int((~keep).sum())
        arr = arr[keep]
        tracks.append(RawTrack(tid, arr[:, 0].copy(), arr[:, 1:].copy()))
    return TrackSet(tracks, crs, dropped, dropped_tracks)


def project_lonlat(ts: TrackSet, origin=None) -> TrackSet:
    """Equirectangular projection (km) about the dataset centroid.

    x = R cos(lat0) dlon, y = R dlat with angles in radians and R = 6371 km.
    ``origin`` (lon0, lat0) in degrees overrides the centroid.
    """
    if ts.crs == PLANAR:
        return ts
    if not ts.tracks:
        return TrackSet([], PLANAR, ts.dropped_rows, list(ts.dropped_tracks))
    allpts = np.concatenate([t.xy for t in ts.tracks])
    lat = allpts[:, 1]
    if np.any(np.abs(lat) > 90):
        raise IngestError("latitude outside [-90, 90]")
    lon0, lat0 = (allpts.mean(0) if origin is None else np.asarray(origin, dtype=float))
    c = math.cos(math.radians(lat0))
    out = []
    for t in ts.tracks:
        x = EARTH_RADIUS_KM * c * np.radians(t.xy[:, 0] - lon0)
        y = EARTH_RADIUS_KM * np.radians(t.xy[:, 1] - lat0)
        out.append(RawTrack(t.id, t.times.copy(), np.column_stack([x, y])))
    return TrackSet(out, PLANAR, ts.dropped_rows, list(ts.dropped_tracks))


def _resample_track(track: RawTrack, t: float, gap: float):
    times = track.times
    if len(times) == 0:
        return []
    k_first = int(math.ceil((times[0] - t / 2) / t))
    k_last = int(math.floor((times[-1] + t / 2) / t))
    ks = np.arange(k_first, k_last + 1)
    if len(ks) == 0:
        return []
    grid = ks * t
    # nearest record to every grid time, ties to the earlier record
    right = np.clip(np.searchsorted(times, grid, side="left"), 0, len(times) - 1)
    left = np.clip(right - 1, 0, len(times) - 1)
    use_left = np.abs(grid - times[left]) <= np.abs(times[right] - grid)
    nearest = np.where(use_left, left, right)
    ok = np.abs(times[nearest] - grid) <= t / 2
    # a sample is linked to its predecessor only if both exist and no raw gap > gap*t lies between
    big_gap = np.zeros(len(times), dtype=bool)
    big_gap[1:] = np.diff(times) > gap * t
    gap_count = np.cumsum(big_gap)
    paths = []
    start = None
    for i in range(len(ks) + 1):
        linked = (i < len(ks) and ok[i] and start is not None
                  and gap_count[nearest[i]] == gap_count[nearest[i - 1]])
        if start is not None and not linked:
            if i - start >= 2:
                paths.append((int(ks[start]), track.xy[nearest[start:i]]))
            start = None
        if start is None and i < len(ks) and ok[i]:
            start = i
    return paths


def resample(ts: TrackSet, t: float, gap: float = 3.0) -> List[SamplePath]:
    """Nearest-record resampling onto the absolute grid t*Z.

    Each grid time takes the closest fix within t/2.  A path is cut where a
    grid time has no fix or where consecutive fixes are more than ``gap``*t
    apart; pieces with fewer than two samples are discarded.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    out = []
    for track in ts.tracks:
        for k0, xy in _resample_track(track, t, gap):
            out.append(SamplePath(t=t, samples=xy, T=(len(xy) - 1) * t, index0=k0))
    return out


def effective_period(paths) -> float:
    return float(sum((len(p) - 1) * p.t for p in paths))


def raw_span(ts: TrackSet) -> float:
    return float(sum(tr.times[-1] - tr.times[0] for tr in ts.tracks if len(tr)))


def write_tracks_csv(ts: TrackSet, fh):
    """Write the parsed fields back out in a canonical layout."""
    cols = ("id", "timestamp", "lon", "lat") if ts.crs == LONLAT else ("id", "timestamp", "x", "y")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for tr in ts.tracks:
        for t, (a, b) in zip(tr.times, tr.xy):
            w.writerow((tr.id, repr(float(t)), repr(float(a)), repr(float(b))))


def canonical_schema(crs):
    if crs == LONLAT:
        return {"id": "id", "timestamp": "timestamp", "lon": "lon", "lat": "lat"}
    return dict(DEFAULT_SCHEMA)
