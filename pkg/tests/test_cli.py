import json
import math
import subprocess
import sys

import pytest

from biprune.cli import main, read_config
from biprune.io import bimeasure_to_dict, dumps

from _instances import single_edge


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


@pytest.fixture
def edge_file(tmp_path):
    f = tmp_path / "edge.json"
    f.write_text(dumps(bimeasure_to_dict(single_edge(2.0))))
    return str(f)


@pytest.fixture
def zero_nu_file(tmp_path):
    f = tmp_path / "zero.json"
    f.write_text(dumps(bimeasure_to_dict(single_edge(2.0, nu="zero"))))
    return str(f)


def test_generate_is_deterministic(capsys, tmp_path):
    argv = ["generate", "--seed", "3", "--nodes", "30", "--family", "geometric:0.5"]
    code, a, _ = run(argv, capsys)
    assert code == 0
    _, b, _ = run(argv, capsys)
    assert a == b
    d = json.loads(a)
    assert len(d["nodes"]) == 31 and d["config"]["seed"] == 3
    c = tmp_path / "contour.csv"
    assert main(argv + ["--contour-out", str(c)]) == 0
    lines = c.read_text().splitlines()
    assert lines[0].startswith("# config:") and lines[1] == "time,value" and lines[2] == "0.0,0.0"
    assert len(lines) == 2 + 2 * 30 + 1


def test_prune_zero_nu_gives_empty_log(capsys, zero_nu_file):
    code, out, _ = run(["prune", "--seed", "1", "--tree", zero_nu_file, "--horizon", "5"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 1 and "config" in json.loads(lines[0])


def test_prune_log_records(capsys, edge_file):
    code, out, _ = run(["prune", "--seed", "1", "--tree", edge_file, "--horizon", "50"], capsys)
    assert code == 0
    recs = [json.loads(l) for l in out.splitlines()[1:]]
    assert len(recs) >= 1
    assert set(recs[0]) == {"t", "point", "removed_mu_mass", "removed_nu_mass"}
    assert recs[0]["removed_mu_mass"] == 1.0


def test_semigroup_exact_column(capsys, edge_file):
    code, out, _ = run(
        ["semigroup", "--seed", "2", "--tree", edge_file, "--psi", "mass", "--times", "0.1,0.5,1", "--replicates", "200"],
        capsys,
    )
    assert code == 0
    for r in csv_rows(out):
        assert float(r["exact"]) == pytest.approx(math.exp(-2.0 * float(r["t"])), rel=1e-14)


def test_generator_check_slopes(capsys, edge_file):
    code, out, _ = run(["generator-check", "--seed", "0", "--tree", edge_file, "--psi", "mass"], capsys)
    assert code == 0
    slope = [r for r in csv_rows(out) if r["t"] == "slope"][0]
    assert float(slope["loglog_slope"]) == pytest.approx(1.0, abs=0.1)
    assert float(slope["generator_jump"]) == pytest.approx(-2.0)


def test_cutdown_outputs(capsys, edge_file, tmp_path):
    m = tmp_path / "moments.csv"
    code, out, _ = run(["cutdown", "--seed", "4", "--tree", edge_file, "--replicates", "50", "--moments-out", str(m)], capsys)
    assert code == 0
    assert len(csv_rows(out)) == 50
    mom = csv_rows(m.read_text())
    assert mom[0]["exact_or_mc"] == "exact" and float(mom[0]["value"]) == pytest.approx(0.5)
    code, out, _ = run(["cutdown", "--seed", "4", "--family", "poisson:1", "--nodes", "20", "--replicates", "5"], capsys)
    assert code == 0 and len(csv_rows(out)) == 5


def test_converge_small_run(capsys):
    argv = ["converge", "--seed", "1", "--indices", "10,20", "--replicates", "4", "--draws", "16"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    rows = csv_rows(out)
    assert len(rows) == 2 * 5 * 2
    assert {r["psi_id"] for r in rows} == {"damped_mass", "root_distance", "pair_distance", "nu_path", "nu_spans"}
    code, _, err = run(argv + ["--control", "depth", "--family", "geometric:0.5"], capsys)
    assert code == 2 and "Poisson" in err
    code, _, _ = run(argv + ["--control", "bogus"], capsys)
    assert code == 2


def test_gw_shapes_exact_column(capsys):
    code, out, _ = run(["gw-shapes", "--seed", "0", "--nodes", "2", "--samples", "100"], capsys)
    assert code == 0
    exact = {r["shape"]: float(r["exact"]) for r in csv_rows(out)}
    assert exact == pytest.approx({"((()))": 2 / 3, "(()())": 1 / 3})


def test_exit_codes(capsys, tmp_path, edge_file):
    assert run(["prune", "--tree", edge_file], capsys)[0] == 2  # missing seed
    assert run(["bogus"], capsys)[0] == 2
    assert run(["generate", "--seed", "1", "--nodes", "5", "--family", "nope"], capsys)[0] == 2
    assert run(["generate", "--seed", "1", "--nodes", "5", "--family", "poisson:-1"], capsys)[0] == 2
    assert run(["generate", "--seed", "-1", "--nodes", "5"], capsys)[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nodes": [{"id": 0, "parent": 5}]}))
    assert run(["prune", "--seed", "1", "--tree", str(bad)], capsys)[0] == 3
    assert run(["prune", "--seed", "1", "--tree", edge_file, "--horizon", "-1"], capsys)[0] == 3
    assert run(["prune", "--seed", "1", "--tree", str(tmp_path / "missing.json")], capsys)[0] == 4
    assert run(["prune", "--seed", "1", "--tree", edge_file, "--out", str(tmp_path / "no" / "dir.jsonl")], capsys)[0] == 4


def test_config_overrides_flags_and_reproduces(capsys, tmp_path):
    out1 = tmp_path / "a.json"
    assert main(["generate", "--seed", "5", "--nodes", "12", "--out", str(out1)]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "nodes": 12}))
    out2 = tmp_path / "b.json"
    # flags disagree with the config; the config wins
    assert main(["generate", "--seed", "99", "--nodes", "3", "--config", str(cfg), "--out", str(out2)]) == 0
    assert out1.read_text() == out2.read_text()
    # any output can serve as the config of its own rerun
    out3 = tmp_path / "c.json"
    assert main(["generate", "--config", str(out1), "--out", str(out3)]) == 0
    assert out3.read_text() == out1.read_text()
    assert read_config(str(out1))["nodes"] == 12
    wrong = tmp_path / "w.json"
    wrong.write_text(json.dumps({"command": "prune", "seed": 1}))
    assert main(["generate", "--config", str(wrong), "--nodes", "4"]) == 2


def test_output_independent_of_threads(tmp_path):
    outs = []
    for th in ("1", "3"):
        f = tmp_path / f"c{th}.csv"
        argv = ["cutdown", "--seed", "8", "--family", "poisson:1", "--nodes", "30", "--replicates", "12"]
        assert main(argv + ["--threads", th, "--out", str(f)]) == 0
        outs.append(f.read_text())
    assert outs[0] == outs[1]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "biprune.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("generate", "prune", "semigroup", "generator-check", "cutdown", "converge", "gw-shapes"):
        assert cmd in res.stdout


def test_package_exports_do_not_shadow_submodules():
    import pkgutil

    import biprune

    mods = {m.name for m in pkgutil.iter_modules(biprune.__path__)}
    assert not mods & set(biprune.__all__)
    for name in biprune.__all__:
        assert hasattr(biprune, name)
