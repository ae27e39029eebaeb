import json
import subprocess
import sys

import pytest

from sdedilation.experiments.cli import main


def small_config(tmp_path, **over):
    doc = {"experiment": "pathwise3d", "chain": {"M": 16, "h": 1.0, "p_star": 0.1, "use_mlc": True},
           "dt": 0.01, "T": 0.2, "seed": 4}
    doc.update(over)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def test_list_builtins(capsys):
    assert main(["list-builtins"]) == 0
    out = capsys.readouterr().out
    for name in ("example3d", "weak2", "spde"):
        assert name in out


def test_validate_ok_and_bad(tmp_path, capsys):
    assert main(["validate", "--config", str(small_config(tmp_path))]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"experiment": "pathwise3d", "dt": -1}')
    assert main(["validate", "--config", str(bad)]) == 2
    assert "dt" in capsys.readouterr().err


def test_run_is_deterministic(tmp_path):
    cfg = small_config(tmp_path)
    outs = []
    for k in range(2):
        d = tmp_path / f"out{k}"
        assert main(["run", "--config", str(cfg), "--out-dir", str(d)]) == 0
        outs.append((d / "pathwise3d" / "pathwise_p0.1.csv").read_text())
    assert outs[0] == outs[1]
    summary = json.loads((tmp_path / "out0" / "pathwise3d" / "summary.json").read_text())
    run = summary["results"]["runs"][0]
    assert run["max_rel_dev"] < 1e-9
    assert summary["config"]["seed"] == 4


def test_seed_override_changes_output(tmp_path):
    cfg = small_config(tmp_path)
    main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--seed", "5"])
    a = (tmp_path / "a" / "pathwise3d" / "pathwise_p0.1.csv").read_text()
    b = (tmp_path / "b" / "pathwise3d" / "pathwise_p0.1.csv").read_text()
    assert a != b


def test_lightcone_experiment(tmp_path):
    p = tmp_path / "lc.json"
    p.write_text(json.dumps({"experiment": "lightcone_decay", "samples": 20, "T": 0.1, "m_values": [4, 6, 8, 10]}))
    assert main(["run", "--config", str(p), "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "lightcone_decay" / "lightcone.csv").read_text().splitlines()
    assert rows[0].startswith("m,j_star,error") and len(rows) == 5


def test_invariants_exit_code(tmp_path):
    p = tmp_path / "inv.json"
    p.write_text(json.dumps({"experiment": "invariants", "criteria": [10]}))
    assert main(["run", "--config", str(p), "--out-dir", str(tmp_path)]) == 0
    p.write_text(json.dumps({"experiment": "invariants", "criteria": [1]}))
    assert main(["run", "--config", str(p), "--out-dir", str(tmp_path)]) == 1


def test_config_errors_exit_2(tmp_path):
    assert main(["run", "--out-dir", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["run", "--config", str(small_config(tmp_path)), "--threads", "0"]) == 2


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sdedilation", "list-builtins"], capture_output=True, text=True)
    assert r.returncode == 0 and "spde" in r.stdout


def test_spde_experiment_small(tmp_path):
    p = tmp_path / "spde.json"
    p.write_text(json.dumps({"experiment": "spde_moment", "system": {"builtin": "spde", "params": {"N_grid": 8}},
                             "chain": {"M": 12, "p_star": 1e-3, "use_mlc": False}, "T": 0.25, "tau": 0.125}))
    assert main(["run", "--config", str(p), "--out-dir", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "spde_moment" / "summary.json").read_text())["results"]
    assert s["segments"] == 2 and s["rel_error"] < 1e-2 and s["trace_defect_max"] < 1e-12
    assert (tmp_path / "spde_moment" / "sigma_T.csv").exists()


def test_weak2conv_small_uses_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SDEDILATION_CACHE", str(tmp_path / "cache"))
    p = tmp_path / "w2.json"
    p.write_text(json.dumps({"experiment": "weak2conv", "samples": 200, "reference_samples": 400,
                             "reference_dt": 2.0**-8, "dt_values": [0.25, 0.125, 0.0625, 0.03125]}))
    assert main(["run", "--config", str(p), "--out-dir", str(tmp_path / "a"), "--threads", "2"]) == 0
    assert len(list((tmp_path / "cache").glob("emref-*.json"))) == 1
    assert main(["run", "--config", str(p), "--out-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "weak2conv" / "weak2conv.csv").read_text()
    b = (tmp_path / "b" / "weak2conv" / "weak2conv.csv").read_text()
    assert a == b and a.startswith("dt,mean,stderr,error")
