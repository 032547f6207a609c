import csv
import json
import os
import subprocess
import sys

import pytest

from thinlayer import __version__
from thinlayer.cli import EXIT_COMPUTE, EXIT_CONFIG, config_hash, main
from thinlayer.parallel import ordered_map, thread_count


def _run(tmp_path, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    out = tmp_path / "out"
    code = main(["--config", str(path), "--output", str(out), *extra])
    return code, out


def _csv_body(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.reader(lines))


def test_constants_run(tmp_path):
    cfg = {"command": "constants", "params": {"N": 1, "Z": 1}}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    [art] = list(out.iterdir())
    assert art.name == f"constants-{config_hash(cfg, 0)}.json"
    doc = json.loads(art.read_text())
    assert doc["version"] == __version__
    assert doc["config_hash"] == config_hash(cfg, 0)
    for key in ("kato", "c1", "c2", "c3", "mu", "e_low"):
        assert key in doc["result"]
    assert doc["result"]["kato"] == pytest.approx(4.376879230452953, rel=1e-15)


def test_constants_with_bounds(tmp_path):
    code, out = _run(tmp_path, {"command": "constants", "params": {"Z": 1, "a": 0.01, "d": 0.1}})
    assert code == 0
    doc = json.loads(next(out.iterdir()).read_text())
    assert set(doc["result"]["bounds"]) >= {"eff_vs_2d", "full_vs_eff", "full_vs_2d"}
    assert doc["result"]["thresholds"]["d"] == 0.1


def test_spectrum2d_run(tmp_path):
    cfg = {"command": "spectrum2d", "params": {"Z": 1, "k": 3}}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    h = config_hash(cfg, 0)
    text = (out / f"spectrum2d-{h}.csv").read_text()
    assert text.startswith(f"# config_hash={h}\n# version={__version__}\n")
    rows = _csv_body(out / f"spectrum2d-{h}.csv")
    assert rows[0] == ["index", "eigenvalue", "residual", "exact"]
    levels = [float(r[1]) for r in rows[1:]]
    assert levels == pytest.approx([-1.0, -1.0 / 9.0, -1.0 / 25.0], rel=5e-3)
    assert json.loads((out / f"spectrum2d-{h}.json").read_text())["config_hash"] == h


def test_converge_rerun_byte_identical(tmp_path):
    cfg = {"command": "converge", "params": {"widths": [0.2, 0.1, 0.05, 0.02, 0.01], "Z": 1}}
    (tmp_path / "one").mkdir()
    (tmp_path / "two").mkdir()
    code1, out1 = _run(tmp_path / "one", cfg)
    code2, out2 = _run(tmp_path / "two", cfg)
    assert code1 == code2 == 0
    names = sorted(p.name for p in out1.iterdir())
    assert [n.rsplit(".", 1)[1] for n in names] == ["csv", "json"]
    for n in names:
        assert (out1 / n).read_bytes() == (out2 / n).read_bytes()
    fit = json.loads((out1 / names[1]).read_text())["result"]["fit"]
    assert fit["gate_quality"] <= 0.15


def test_seed_changes_hash_and_is_reproducible(tmp_path):
    cfg = {"command": "potentials", "params": {"kind": "en", "a": 0.5, "grid": {"rho_min": 0.01, "rho_max": 10, "count": 20}, "samples": 20}}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    code, out_a = _run(tmp_path / "a", cfg, "--seed", "7")
    code_b, out_b = _run(tmp_path / "b", cfg, "--seed", "7")
    assert code == code_b == 0
    files = sorted(out_a.iterdir())
    assert files[0].name.endswith(f"{config_hash(cfg, 7)}.csv")
    assert all(f.read_bytes() == (out_b / f.name).read_bytes() for f in files)
    checks = json.loads(files[1].read_text())["result"]["checks"]
    assert checks["bound_ok"] and checks["max_scaling_rel"] < 1e-10
    assert config_hash(cfg, 7) != config_hash(cfg, 8)


def test_seed_from_config(tmp_path):
    cfg = {"command": "constants", "params": {"Z": 2}, "seed": 5}
    code, out = _run(tmp_path, cfg)
    assert code == 0
    assert json.loads(next(out.iterdir()).read_text())["seed"] == 5


MALFORMED = [
    "{not json",
    "[]",
    {"params": {"Z": 1}},
    {"command": "constants"},
    {"command": "nope", "params": {}},
    {"command": "constants", "params": {"Z": -1}},
    {"command": "constants", "params": {"Z": "one"}},
    {"command": "constants", "params": {"Z": 1, "N": 0}},
    {"command": "constants", "params": {"Z": 1, "a": 0.5}},
    {"command": "constants", "params": {"Z": 1, "extra": 3}},
    {"command": "constants", "params": {"Z": 1}, "unknown": True},
    {"command": "constants", "params": {"Z": 1}, "seed": -4},
    {"command": "spectrum2d", "params": {"Z": 1}},
    {"command": "spectrum2d", "params": {"Z": 1, "k": 0}},
    {"command": "spectrum2d", "params": {"Z": 1, "k": 2, "kind": "en"}},
    {"command": "spectrum-layer", "params": {"a": 1.5, "Z": 1}},
    {"command": "converge", "params": {"widths": [0.2, 0.1, 0.05], "Z": 1}},
    {"command": "converge", "params": {"widths": [0.9, 0.2, 0.1, 0.05], "Z": 1}},
    {"command": "localize", "params": {"a": 0.05, "Z": 1, "lambda": 0.5, "d": 0.3}},
    {"command": "two-electron", "params": {"a": 0.1, "Z": 2, "n_orb": 1}},
    {"command": "potentials", "params": {"kind": "en", "a": 1, "grid": {"rho_min": 5, "rho_max": 1, "count": 10}}},
]


@pytest.mark.parametrize("cfg", MALFORMED, ids=[f"bad{i:02d}" for i in range(len(MALFORMED))])
def test_malformed_config_exit_2(tmp_path, capsys, cfg):
    code, out = _run(tmp_path, cfg)
    assert code == EXIT_CONFIG
    assert not out.exists() or not any(out.iterdir())
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigInvalid" and err["exit_code"] == 2


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json"), "--output", str(tmp_path)]) == EXIT_CONFIG


def test_computation_failure_exit_3(tmp_path, capsys):
    cfg = {"command": "spectrum2d", "params": {"Z": 1, "k": 40, "n_nodes": 16}}
    code, out = _run(tmp_path, cfg)
    assert code == EXIT_COMPUTE
    assert not out.exists() or not any(out.iterdir())
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ComputationFailed"
    assert "InsufficientBoundStates" in err["message"]


def test_layer_and_two_electron_runs(tmp_path):
    code, out = _run(tmp_path, {"command": "spectrum-layer", "params": {"a": 0.1, "Z": 1, "k": 2, "nr": 300}})
    assert code == 0
    code, out = _run(tmp_path, {"command": "two-electron", "params": {"a": 0.1, "Z": 2, "interaction": False}}, name="t.json")
    assert code == 0
    doc = json.loads(next(p for p in out.iterdir() if p.name.startswith("two-electron")).read_text())
    res = doc["result"]
    assert res["symmetry"] == "fermionic"
    assert res["ground_energy"] >= res["e_low"]
    assert res["e_low"] == pytest.approx(res["mu_plus_one"], rel=1e-12)
    assert res["below_threshold"] == (res["ground_energy"] < res["one_electron_threshold"])


def test_localize_run(tmp_path):
    code, out = _run(tmp_path, {"command": "localize", "params": {"a": 0.1, "Z": 1, "lambda": -1, "d": 0.3, "nr": 400}})
    assert code == 0
    res = json.loads(next(out.iterdir()).read_text())["result"]
    assert res["count_inside"] == res["expected"] == 1


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "constants", "params": {"Z": 1}}))
    proc = subprocess.run(
        [sys.executable, "-m", "thinlayer", "--config", str(cfg), "--output", str(tmp_path / "o"), "--verbose"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "running constants" in proc.stderr
    assert proc.stdout.strip().endswith(".json")


def test_thread_env(monkeypatch):
    monkeypatch.setenv("THINLAYER_THREADS", "3")
    assert thread_count(None) == 3
    assert thread_count(2) == 2
    assert thread_count(8) == 3
    monkeypatch.setenv("THINLAYER_THREADS", "0")
    assert thread_count(None) == 1
    assert ordered_map(lambda x: x * x, range(10), 4) == [x * x for x in range(10)]
