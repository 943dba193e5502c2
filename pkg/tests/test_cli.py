import csv
import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from semiperm.cli import main
from semiperm.config import apply_overrides, environment_from_dict, load_experiment
from semiperm.errors import ConfigurationError
from semiperm.estimators import EstimateSet, write_estimate_csv

from fixtures import THREE_TRACKS, THREE_TRACKS_EFFECTIVE

CONFIG = """
seeds = [1, 2]

[environment]
resolution = 256
outer = {{ kind = "circle", center = [0, 0], radius = 2 }}

[[environment.barriers]]
kind = "circle"
center = [0, 0]
radius = 1
lambda_plus = 1.0
lambda_minus = 1.0

[simulation]
T = {T}
t = 0.01

[recover]
regime = "fixed-freq"
params = "auto"

[covertime]
eps = [0.5, 0.3]
n_paths = 3
h = 0.001
"""


@pytest.fixture
def cfg(tmp_path):
    f = tmp_path / "exp.toml"
    f.write_text(CONFIG.format(T=2.0))
    return str(f)


def files(d):
    return {n: open(os.path.join(d, n), "rb").read() for n in sorted(os.listdir(d))}


def kv(path):
    with open(path) as fh:
        return {r["key"]: r["value"] for r in csv.DictReader(fh)}


def test_simulate_two_seeds(cfg, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    names = set(os.listdir(out))
    assert {"path_seed1.csv", "path_seed2.csv", "manifest.json"} <= names
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"] == [1, 2] and "numpy" in man["versions"]
    assert set(man["outputs"]) == names - {"manifest.json"}


def test_simulate_same_seed_identical(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a), "--seed", "5", "--quiet"]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "5", "--quiet"]) == 0
    assert files(a) == files(b)


def test_simulate_T0_single_row(cfg, tmp_path):
    out = tmp_path / "z"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--seed", "1", "--set", "simulation.T=0",
                 "--quiet"]) == 0
    rows = (out / "path_seed1.csv").read_text().strip().splitlines()
    assert len(rows) == 2


def test_recover_writes_estimate_and_svg(cfg, tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--config", cfg, "--out", str(sim), "--quiet"])
    out = tmp_path / "rec"
    paths = [str(sim / "path_seed1.csv"), str(sim / "path_seed2.csv")]
    assert main(["recover", "--config", cfg, "--out", str(out), "--quiet"] + paths) == 0
    d = kv(out / "diagnostics.csv")
    assert d["regime"] == "fixed-freq" and int(d["n_transitions"]) == 400
    root = ET.parse(out / "overlay.svg").getroot()
    ns = "{http://www.w3.org/2000/svg}"
    vb = [float(v) for v in root.get("viewBox").split()]
    assert vb[2] > 4.0 and vb[3] > 4.0  # data coordinates around a radius-2 disk
    assert len(root.findall(f".//{ns}path")) == 2
    n_flagged = int(d["n_flagged"])
    assert len(root.findall(f".//{ns}g[@id='flagged']/{ns}rect")) == n_flagged
    assert (out / "overlay.png").read_bytes()[:4] == b"\x89PNG"


def test_refine_without_initial_is_configuration_error(cfg, tmp_path, capsys):
    p = tmp_path / "p.csv"
    p.write_text("index,time,x,y\n0,0.0,1.5,0.0\n1,0.01,1.5,0.01\n")
    assert main(["refine", "--config", cfg, "--out", str(tmp_path / "r"), str(p)]) == 1
    assert "initial estimate" in capsys.readouterr().err


def test_recover_empty_path_file(cfg, tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("index,time,x,y\n")
    out = tmp_path / "r"
    assert main(["recover", "--config", cfg, "--out", str(out), "--quiet", str(p)]) == 0
    assert (out / "estimate.csv").read_text() == "x,y,regime,diagnostic,cell_size\n"


def test_eval_empty_estimate_fails(cfg, tmp_path, capsys):
    e = tmp_path / "e.csv"
    e.write_text("x,y,regime,diagnostic,cell_size\n")
    assert main(["eval", "--config", cfg, "--out", str(tmp_path / "ev"), str(e)]) != 0
    assert "empty" in capsys.readouterr().err


def _eval(cfg, tmp_path, pts, name):
    e = tmp_path / f"{name}.csv"
    with open(e, "w", newline="") as fh:
        write_estimate_csv(EstimateSet("refined", pts, np.zeros(len(pts))), fh)
    out = tmp_path / name
    assert main(["eval", "--config", cfg, "--out", str(out), "--quiet", str(e)]) == 0
    return float(kv(out / "eval.csv")["hausdorff"])


def test_eval_exact_and_translated(cfg, tmp_path):
    env = load_experiment(cfg).env
    pts = np.concatenate([b.curve.vertices for b in env.barriers])
    seg = np.linalg.norm(np.diff(env.outer.curve.polyline, axis=0), axis=1).max()
    d0 = _eval(cfg, tmp_path, pts, "exact")
    assert d0 <= seg
    delta = 0.05
    d1 = _eval(cfg, tmp_path, pts + [delta, 0.0], "shifted")
    assert d1 <= d0 + delta + 1e-12


def test_covertime_report(cfg, tmp_path):
    out = tmp_path / "ct"
    env_cfg = tmp_path / "disk.toml"
    env_cfg.write_text(open(cfg).read().split("[[environment.barriers]]")[0]
                       + "\n[covertime]\neps = [0.5, 0.3]\nn_paths = 3\nh = 0.001\n")
    assert main(["covertime", "--config", str(env_cfg), "--out", str(out), "--seed", "1", "--quiet"]) == 0
    with open(out / "covertime.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["eps"]) for r in rows] == [0.3, 0.5]
    assert all(float(r["limit"]) == pytest.approx(2 * 4.0, rel=1e-3) for r in rows)
    assert (out / "covertime.png").exists()


def test_covertime_rejects_inner_barriers(cfg, tmp_path):
    assert main(["covertime", "--config", cfg, "--out", str(tmp_path / "x"), "--quiet"]) == 1


def test_ingest_paths_and_report(tmp_path):
    src = tmp_path / "tracks.csv"
    src.write_text(THREE_TRACKS)
    c = tmp_path / "ing.toml"
    c.write_text("[ingest]\nt = 10.0\n")
    out = tmp_path / "ing"
    assert main(["ingest", "--config", str(c), "--out", str(out), "--quiet", str(src)]) == 0
    rep = kv(out / "ingest_report.csv")
    assert float(rep["effective_T"]) == pytest.approx(THREE_TRACKS_EFFECTIVE)
    assert int(rep["n_paths"]) == 4
    assert {"path_b_0.csv", "path_b_1.csv"} <= set(os.listdir(out))


def test_ingest_lonlat_projected(tmp_path):
    src = tmp_path / "mb.csv"
    src.write_text("individual-local-identifier,timestamp,location-long,location-lat\n"
                   "r1,0,7.0,62.0\nr1,3600,7.01,62.0\nr1,7200,7.02,62.01\n")
    c = tmp_path / "ing.toml"
    c.write_text('[ingest]\nt = 3600.0\ncrs = "lonlat"\n')
    out = tmp_path / "ing"
    assert main(["ingest", "--config", str(c), "--out", str(out), "--quiet", str(src)]) == 0
    rows = (out / "path_r1_0.csv").read_text().splitlines()
    assert rows[0] == "index,time,x,y"
    x = [float(r.split(",")[2]) for r in rows[1:]]
    assert abs(x[0]) < 2.0 and x[2] - x[0] == pytest.approx(6371 * np.cos(np.radians(62.00333)) *
                                                           np.radians(0.02), rel=1e-3)


def test_ingest_malformed_header(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("who,when,x,y\na,0,0,0\n")
    c = tmp_path / "ing.toml"
    c.write_text("[ingest]\nt = 1.0\n")
    assert main(["ingest", "--config", str(c), "--out", str(tmp_path / "o"), str(src)]) != 0
    assert "header" in capsys.readouterr().err


def test_overrides_and_environment():
    raw = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=[1, 2]", "d=word"])
    assert raw == {"a": {"b": 2.5, "c": [1, 2]}, "d": "word"}
    with pytest.raises(ConfigurationError):
        apply_overrides({}, ["novalue"])
    env = environment_from_dict({"outer": {"kind": "ellipse", "center": [0, 0], "semi_axes": [3, 2]},
                                 "barriers": [{"kind": "spline", "control_points": [[0, 0], [1, 0], [1, 1], [0, 1]],
                                               "lambda_plus": "inf", "lambda_minus": 0.5}]})
    assert env.m == 1 and env.inner[0].lambda_plus == float("inf")
    with pytest.raises(ConfigurationError):
        environment_from_dict({"outer": {"kind": "blob"}})


def test_shipped_config_loads():
    path = os.path.join(os.path.dirname(__file__), "..", "configs", "two_circles.toml")
    cfg = load_experiment(path)
    assert cfg.env.m == 1 and cfg.T == 1000.0 and cfg.pi_min == 0.08
