"""Command-line interface.

    semiperm simulate   --config exp.toml --out runs/ --seed 1 --seed 2
    semiperm recover    --config exp.toml runs/path_seed1.csv
    semiperm refine     --config exp.toml --initial runs/estimate.csv runs/path_seed1.csv
    semiperm recover-hf --config exp.toml runs/path_seed1.csv
    semiperm covertime  --config exp.toml
    semiperm eval       --config exp.toml runs/estimate.csv
    semiperm ingest     --config exp.toml [tracks.csv]

Every command writes a ``manifest.json`` (resolved config, package
versions, output checksums) next to its outputs.  Outputs depend only on
the config and the seeds, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
import warnings
from importlib import metadata

import numpy as np
from scipy.spatial import cKDTree

from . import __version__, plotting
from .config import ExperimentConfig, algorithm_params, ingest_schema, load_experiment, regime_name
from .covertime import cover_times
from .errors import ConfigurationError, InvalidInputError, SemipermError
from .estimators import (FIXED, HIGH, REFINED, EstimateSet, read_estimate_csv, recommended_T,
                         recover_fixed_frequency, recover_high_frequency, refine, write_estimate_csv)
from .geometry import environment_parameters
from .ingest import (LONLAT, TrackSet, effective_period, load_tracks, project_lonlat, raw_span,
                     resample, write_tracks_csv)
from .process import read_path_csv, simulate, stationary_start, write_dense_csv, write_path_csv
from .transport import directed_hausdorff

PACKAGES = ("numpy", "scipy", "numba", "pot", "matplotlib")


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, command, cfg: ExperimentConfig, quiet=False):
        self.command = command
        self.cfg = cfg
        self.quiet = quiet
        self.files = []
        os.makedirs(cfg.out, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.cfg.out, name)

    def open(self, name):
        return open(self.path(name), "w", newline="")

    def log(self, msg):
        if not self.quiet:
            print(msg)

    def manifest(self, extra=None):
        versions = {"semiperm": __version__}
        for p in PACKAGES:
            try:
                versions[p] = metadata.version(p)
            except metadata.PackageNotFoundError:
                versions[p] = None
        versions["python"] = ".".join(map(str, sys.version_info[:3]))
        outputs = {}
        for name in sorted(set(self.files)):
            with open(os.path.join(self.cfg.out, name), "rb") as fh:
                outputs[name] = hashlib.sha256(fh.read()).hexdigest()
        doc = {"command": self.command, "seeds": self.cfg.seeds, "config": self.cfg.raw,
               "versions": versions, "outputs": outputs}
        if extra:
            doc.update(extra)
        with open(os.path.join(self.cfg.out, "manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _need_env(cfg):
    if cfg.env is None:
        raise ConfigurationError("this command needs an [environment] section")
    return cfg.env


def _write_kv(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("key", "value"))
    for k, v in rows:
        w.writerow((k, repr(float(v)) if isinstance(v, (float, np.floating)) else v))


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(cfg: ExperimentConfig, run: Run):
    env = _need_env(cfg)
    if cfg.T is None or cfg.t is None:
        raise ConfigurationError("[simulation] needs T and t")
    plot = bool(cfg.section("simulation").get("plot", True))
    for seed in cfg.seeds:
        sc = cfg.sim_config(seed)
        rng = np.random.default_rng(seed)
        if cfg.x0 == "stationary":
            x0, sides = stationary_start(env, sc, rng=rng, T=cfg.T, t_mix=cfg.t_mix)
        elif cfg.x0 == "centroid":
            x0, sides = env.outer.curve.centroid, cfg.initial_sides
        else:
            x0, sides = cfg.x0, cfg.initial_sides
        path = simulate(env, x0, sides, cfg.T, cfg.t, sc, rng=rng)
        with run.open(f"path_seed{seed}.csv") as fh:
            write_path_csv(path, fh)
        if sc.record_dense:
            with run.open(f"dense_seed{seed}.csv") as fh:
                write_dense_csv(path, fh)
        if plot:
            plotting.plot_overlay(run.path(f"path_seed{seed}.png"), env, samples=path.samples,
                                  title=f"seed {seed}")
        run.log(f"seed {seed}: {len(path)} samples")


# ---------------------------------------------------------------------------
# recover / refine / recover-hf

def _read_paths(files, t):
    paths = []
    for f in files:
        with open(f, newline="") as fh:
            paths.append(read_path_csv(fh, t))
    return paths


def _initial_estimate(cfg, args):
    name = args.initial or cfg.section("recover").get("initial")
    if not name:
        raise ConfigurationError("refinement needs an initial estimate (--initial or recover.initial)")
    with open(name, newline="") as fh:
        est = read_estimate_csv(fh)
    if len(est) == 0:
        raise ConfigurationError(f"initial estimate {name} is empty")
    return est


def cmd_recover(cfg: ExperimentConfig, run: Run, args, regime=None):
    rec = cfg.section("recover")
    regime = regime_name(regime or getattr(args, "regime", None) or rec.get("regime", FIXED))
    initial = _initial_estimate(cfg, args) if regime == REFINED else None
    files = args.paths or rec.get("paths") or []
    if not files:
        raise ConfigurationError("no path files given")
    paths = _read_paths(files, cfg.t)
    nonempty = [p for p in paths if len(p) >= 2]
    ts = {p.t for p in nonempty}
    if len(ts) > 1:
        raise InvalidInputError("path files have different sampling intervals")
    t = cfg.t or (ts.pop() if ts else None)
    T_eff = float(sum(p.T for p in nonempty))
    rows = [("regime", regime), ("n_paths", len(paths)), ("n_transitions", sum(len(p) - 1 for p in nonempty)),
            ("effective_T", T_eff)]
    if not nonempty:
        est = EstimateSet(regime, np.empty((0, 2)), np.empty(0))
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            params = algorithm_params(cfg, regime, t, T_eff)
        for w in caught:
            run.log(f"warning: {w.message}")
        if regime == FIXED:
            est = recover_fixed_frequency(nonempty, params)
        elif regime == REFINED:
            est = refine(nonempty, params, initial)
        else:
            est = recover_high_frequency(nonempty, params, t)
        rows += [(f"param_{k}", v) for k, v in sorted(est.params.items()) if v is not None]
        if cfg.env is not None and cfg.pi_min and cfg.t_mix:
            eps = rec.get("eps") or (math.sqrt(t) if regime != HIGH else params.eps_grid)
            rt = recommended_T(regime, eps, cfg.t_mix, cfg.pi_min, cfg.env.area,
                               kappa=environment_parameters(cfg.env).kappa)
            if rt is not None:
                rows.append(("recommended_T_c3_1", rt))
    rows += [("n_tested", est.n_tested), ("n_flagged", len(est))]
    with run.open("estimate.csv") as fh:
        write_estimate_csv(est, fh)
    with run.open("diagnostics.csv") as fh:
        _write_kv(fh, rows)
    if cfg.env is not None and rec.get("plot", True):
        samples = np.concatenate([p.samples for p in paths]) if paths else None
        plotting.write_svg(run.path("overlay.svg"), cfg.env, est, samples)
        plotting.plot_overlay(run.path("overlay.png"), cfg.env, est, samples, title=regime)
    run.log(f"{regime}: flagged {len(est)} of {est.n_tested} tested")


# ---------------------------------------------------------------------------
# eval

def barrier_points(env, include_outer=True):
    bars = env.barriers if include_outer else env.inner
    return np.concatenate([b.curve.vertices for b in bars])


def evaluate(est: EstimateSet, env, include_outer=True):
    """(d_H, est -> barriers, barriers -> est, per-point distances)."""
    pts = est.point_set().points
    if len(pts) == 0:
        raise InvalidInputError("Hausdorff distance is undefined for an empty estimate")
    truth = barrier_points(env, include_outer)
    d, _ = cKDTree(truth).query(pts)
    fwd = float(d.max())
    back = directed_hausdorff(truth, pts)
    return max(fwd, back), fwd, back, d


def cmd_eval(cfg: ExperimentConfig, run: Run, args):
    env = _need_env(cfg)
    section = cfg.section("eval")
    name = args.estimate or section.get("estimate")
    if not name:
        raise ConfigurationError("no estimate file given")
    with open(name, newline="") as fh:
        est = read_estimate_csv(fh)
    include_outer = bool(section.get("include_outer", True))
    dh, fwd, back, d = evaluate(est, env, include_outer)
    with run.open("eval.csv") as fh:
        _write_kv(fh, [("regime", est.regime), ("n_points", len(est)), ("hausdorff", dh),
                       ("estimate_to_barrier", fwd), ("barrier_to_estimate", back),
                       ("false_positive_max", fwd)])
    if section.get("plot", True):
        plotting.plot_distances(run.path("eval_distances.png"), d, title=f"d_H = {dh:.4g}")
        plotting.plot_overlay(run.path("eval_overlay.png"), env, est, title=est.regime)
    run.log(f"d_H = {dh:.6g} (estimate->barrier {fwd:.6g}, barrier->estimate {back:.6g})")


# ---------------------------------------------------------------------------
# covertime

def cmd_covertime(cfg: ExperimentConfig, run: Run):
    env = _need_env(cfg)
    c = cfg.section("covertime")
    eps = [float(e) for e in c.get("eps", [0.1, 0.05])]
    n_paths = int(c.get("n_paths", 200))
    h = float(c.get("h", 1e-4))
    max_time = float(c.get("max_time", 1e4))
    x0 = c.get("x0")
    results = []
    for seed in cfg.seeds:
        results.append(cover_times(env, eps, n_paths, h, np.random.default_rng(seed), x0, max_time))
        run.log(f"seed {seed}: {n_paths} paths")
    res = results[0]
    res.times = np.concatenate([r.times for r in results])
    with run.open("covertime.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("eps", "n_paths", "n_uncovered", "mean", "stderr", "log2", "ratio", "limit"))
        for i, e in enumerate(res.eps):
            col = res.times[:, i]
            w.writerow((repr(float(e)), len(col), int(np.isinf(col).sum()), repr(float(res.mean()[i])),
                        repr(float(res.stderr()[i])), repr(float(math.log(1 / e) ** 2)),
                        repr(float(res.ratio()[i])), repr(float(res.limit))))
    if c.get("plot", True):
        plotting.plot_covertime(run.path("covertime.png"), res)
    for e, r in zip(res.eps, res.ratio()):
        run.log(f"eps={e:g}: ratio {r:.4g} (limit {res.limit:.4g})")


# ---------------------------------------------------------------------------
# ingest

def _safe(name):
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name) or "track"


def cmd_ingest(cfg: ExperimentConfig, run: Run, args):
    c = cfg.section("ingest")
    src = args.input or c.get("input")
    if not src:
        raise ConfigurationError("no input file given")
    if "t" not in c:
        raise ConfigurationError("ingest.t (resampling interval) is required")
    t = float(c["t"])
    ts = load_tracks(src, ingest_schema(c), float(c.get("max_missing_fraction", 0.5)),
                     float(c.get("max_bad_fraction", 0.01)))
    crs = ts.crs
    if crs == LONLAT:
        ts = project_lonlat(ts, c.get("origin"))
    with run.open("tracks.csv") as fh:
        write_tracks_csv(ts, fh)
    paths = []
    counts = {}
    for track in ts.tracks:
        for p in resample(TrackSet([track], ts.crs), t, float(c.get("gap", 3.0))):
            k = counts.get(track.id, 0)
            counts[track.id] = k + 1
            with run.open(f"path_{_safe(track.id)}_{k}.csv") as fh:
                write_path_csv(p, fh)
            paths.append(p)
    rows = [("input_crs", crs), ("n_tracks", len(ts)), ("dropped_rows", ts.dropped_rows),
            ("dropped_tracks", ";".join(ts.dropped_tracks)), ("n_paths", len(paths)),
            ("t", t), ("effective_T", effective_period(paths)), ("raw_span", raw_span(ts))]
    with run.open("ingest_report.csv") as fh:
        _write_kv(fh, rows)
    if c.get("plot", True) and paths:
        plotting.plot_overlay(run.path("tracks.png"), None,
                              samples=np.concatenate([p.samples for p in paths]), title="resampled tracks")
    run.log(f"{len(ts)} tracks -> {len(paths)} paths, effective T = {effective_period(paths):.6g}")


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config 'out')")
    common.add_argument("--seed", type=int, action="append", metavar="N",
                        help="seed (repeatable; overrides config 'seeds')")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. simulation.T=100")
    common.add_argument("--quiet", action="store_true")
    ap = argparse.ArgumentParser(prog="semiperm", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate sample paths")
    for name, hlp in (("recover", "recover barriers (regime from config or --regime)"),
                      ("refine", "refine an initial estimate"),
                      ("recover-hf", "high-frequency recovery")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("paths", nargs="*", help="path CSV files")
        p.add_argument("--initial", metavar="CSV", help="initial estimate for refinement")
        if name == "recover":
            p.add_argument("--regime", help="fixed-freq | refined | high-freq")
    sub.add_parser("covertime", parents=[common], help="Monte-Carlo cover times")
    p = sub.add_parser("eval", parents=[common], help="Hausdorff distance of an estimate")
    p.add_argument("estimate", nargs="?")
    p = sub.add_parser("ingest", parents=[common], help="load and resample tracks")
    p.add_argument("input", nargs="?")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_experiment(args.config, args.set, args.seed, args.out)
        run = Run(args.command, cfg, args.quiet)
        if args.command == "simulate":
            cmd_simulate(cfg, run)
        elif args.command == "recover":
            cmd_recover(cfg, run, args)
        elif args.command == "refine":
            cmd_recover(cfg, run, args, REFINED)
        elif args.command == "recover-hf":
            cmd_recover(cfg, run, args, HIGH)
        elif args.command == "covertime":
            cmd_covertime(cfg, run)
        elif args.command == "eval":
            cmd_eval(cfg, run, args)
        elif args.command == "ingest":
            cmd_ingest(cfg, run, args)
        run.manifest()
    except (SemipermError, OSError) as exc:
        print(f"semiperm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
