"""Experiment configuration files (TOML).

One file describes an experiment::

    seeds = [1, 2]
    out = "runs/disk"

    [environment]
    resolution = 2048
    outer = { kind = "circle", center = [0, 0], radius = 2 }

    [[environment.barriers]]
    kind = "circle"
    center = [0, 0]
    radius = 1
    lambda_plus = 1.0
    lambda_minus = 1.0

    [simulation]
    T = 1000.0
    t = 0.01
    x0 = "stationary"      # or [x, y]

    [recover]
    regime = "fixed-freq"  # fixed-freq | refined | high-freq
    params = "auto"        # or a table of explicit values

Individual keys can be overridden with ``key.path=value`` strings whose
value is parsed as a TOML value (bare words fall back to strings).
"""
from __future__ import annotations

import copy
import dataclasses
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigurationError
from .estimators import FIXED, HIGH, REFINED, REGIMES, FixedFreqParams, HighFreqParams, default_params
from .geometry import DEFAULT_RESOLUTION, Barrier, ClosedCurve, Environment
from .ingest import DEFAULT_SCHEMA, MOVEBANK_SCHEMA
from .process import SimConfig

REGIME_ALIASES = {"fixed": FIXED, "fixed-freq": FIXED, "alg1": FIXED,
                  "refine": REFINED, "refined": REFINED, "alg2": REFINED,
                  "high": HIGH, "high-freq": HIGH, "alg3": HIGH}


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides to a nested dict (copied)."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError(f"override {key!r}: {p!r} is not a table")
            node = nxt
        node[parts[-1]] = _parse_value(value.strip())
    return out


def load_raw(path: Optional[str], overrides=()) -> dict:
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    return apply_overrides(raw, overrides)


# ---------------------------------------------------------------------------
# environment

def _point(v, what):
    try:
        x, y = (float(c) for c in v)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{what} must be a pair of numbers") from None
    return x, y


def _rate(v):
    if isinstance(v, str):
        if v.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigurationError(f"bad rate {v!r}")
    return float(v)


def curve_from_dict(d: dict, resolution=DEFAULT_RESOLUTION) -> ClosedCurve:
    kind = d.get("kind")
    res = int(d.get("resolution", resolution))
    try:
        if kind == "circle":
            return ClosedCurve.circle(_point(d["center"], "center"), float(d["radius"]), res)
        if kind == "ellipse":
            a, b = _point(d["semi_axes"], "semi_axes")
            return ClosedCurve.ellipse(_point(d["center"], "center"), a, b,
                                       float(d.get("rotation", 0.0)), res)
        if kind == "spline":
            return ClosedCurve.spline(d["control_points"], res)
    except KeyError as exc:
        raise ConfigurationError(f"{kind} curve lacks key {exc}") from None
    raise ConfigurationError(f"unknown curve kind {kind!r}")


def curve_to_dict(curve: ClosedCurve) -> dict:
    p = curve.params
    if curve.kind == "circle":
        return {"kind": "circle", "center": list(p["center"]), "radius": p["radius"]}
    if curve.kind == "ellipse":
        return {"kind": "ellipse", "center": list(p["center"]), "semi_axes": [p["a"], p["b"]],
                "rotation": p["rotation"]}
    return {"kind": "spline", "control_points": [list(q) for q in p["control_points"]]}


def environment_from_dict(d: dict) -> Environment:
    if not d or "outer" not in d:
        raise ConfigurationError("[environment] needs an outer curve")
    res = int(d.get("resolution", DEFAULT_RESOLUTION))
    outer = curve_from_dict(d["outer"], res)
    inner = []
    for b in d.get("barriers", []):
        inner.append(Barrier(curve_from_dict(b, res), _rate(b.get("lambda_plus", 1.0)),
                             _rate(b.get("lambda_minus", 1.0))))
    return Environment(Barrier.outer(outer), tuple(inner))


# ---------------------------------------------------------------------------
# experiment

@dataclass
class ExperimentConfig:
    raw: dict
    seeds: List[int]
    out: str
    env: Optional[Environment] = None
    T: Optional[float] = None
    t: Optional[float] = None
    sim: SimConfig = field(default_factory=SimConfig)
    x0: Any = "stationary"
    initial_sides: Optional[list] = None
    pi_min: Optional[float] = None
    t_mix: Optional[float] = None

    def section(self, name) -> dict:
        v = self.raw.get(name, {})
        if not isinstance(v, dict):
            raise ConfigurationError(f"[{name}] must be a table")
        return v

    def sim_config(self, seed) -> SimConfig:
        return SimConfig(h=self.sim.h, burn_in=self.sim.burn_in,
                         record_dense=self.sim.record_dense, seed=int(seed))


def experiment_from_raw(raw: dict, seeds=None, out=None) -> ExperimentConfig:
    seeds = list(seeds) if seeds else list(raw.get("seeds", [0]))
    if not seeds:
        raise ConfigurationError("seeds must be non-empty")
    try:
        seeds = [int(s) for s in seeds]
    except (TypeError, ValueError):
        raise ConfigurationError("seeds must be integers") from None
    out = out or raw.get("out", "out")
    env_d = raw.get("environment")
    env = environment_from_dict(env_d) if env_d else None
    s = raw.get("simulation", {})
    h = s.get("h")
    sim = SimConfig(h=None if h is None else float(h), burn_in=float(s.get("burn_in", 0.0)),
                    record_dense=bool(s.get("record_dense", False)))
    if sim.h is not None and not sim.h > 0:
        raise ConfigurationError("simulation.h must be positive")
    if sim.burn_in < 0:
        raise ConfigurationError("simulation.burn_in must be >= 0")
    T = s.get("T")
    t = s.get("t")
    if T is not None and float(T) < 0:
        raise ConfigurationError("simulation.T must be >= 0")
    if t is not None and not float(t) > 0:
        raise ConfigurationError("simulation.t must be positive")
    x0 = s.get("x0", "stationary")
    if not (x0 == "stationary" or x0 == "centroid"):
        x0 = _point(x0, "simulation.x0")
    env_extra = env_d or {}
    return ExperimentConfig(raw=raw, seeds=seeds, out=out, env=env,
                            T=None if T is None else float(T), t=None if t is None else float(t),
                            sim=sim, x0=x0, initial_sides=s.get("initial_sides"),
                            pi_min=env_extra.get("pi_min"), t_mix=env_extra.get("t_mix"))


def load_experiment(path=None, overrides=(), seeds=None, out=None) -> ExperimentConfig:
    return experiment_from_raw(load_raw(path, overrides), seeds, out)


def regime_name(name) -> str:
    try:
        return REGIME_ALIASES[str(name)]
    except KeyError:
        raise ConfigurationError(f"unknown regime {name!r}; choose one of {', '.join(REGIMES)}") from None


def algorithm_params(cfg: ExperimentConfig, regime: str, t: float, T: Optional[float]):
    """FixedFreqParams / HighFreqParams from [recover], "auto" meaning default_params."""
    rec = cfg.section("recover")
    params = rec.get("params", "auto")
    if params == "auto":
        kappa = rec.get("kappa")
        lam = rec.get("lambda_max")
        rho = rec.get("rho")
        if cfg.env is not None:
            from .geometry import environment_parameters
            ep = environment_parameters(cfg.env)
            kappa = kappa if kappa is not None else ep.kappa
            lam = lam if lam is not None else ep.lambda_max
            rho = rho if rho is not None else ep.rho
        params = default_params(regime, t, T, kappa=kappa, lambda_max=lam, rho=rho,
                                eps=rec.get("eps"), constants=rec.get("constants"))
        if regime == REFINED and "sE" in rec:
            params = dataclasses.replace(params, sE=float(rec["sE"]))
        return params
    if not isinstance(params, dict):
        raise ConfigurationError('recover.params must be "auto" or a table')
    try:
        if regime == HIGH:
            return HighFreqParams(s=float(params["s"]), eps_grid=float(params["eps_grid"]),
                                  ell=float(params["ell"]), n0=float(params["n0"]))
        opt = {k: float(params[k]) for k in ("ell", "sE", "kappa") if k in params}
        return FixedFreqParams(s=float(params["s"]), eps_grid=float(params["eps_grid"]),
                               u=float(params["u"]), **opt)
    except KeyError as exc:
        raise ConfigurationError(f"recover.params lacks {exc}") from None


def ingest_schema(section: dict) -> Dict[str, str]:
    schema = section.get("schema")
    if schema == "movebank":
        return dict(MOVEBANK_SCHEMA)
    if schema is None:
        return dict(MOVEBANK_SCHEMA) if section.get("crs") == "lonlat" else dict(DEFAULT_SCHEMA)
    if not isinstance(schema, dict):
        raise ConfigurationError('ingest.schema must be "movebank" or a column table')
    return {str(k): str(v) for k, v in schema.items()}
