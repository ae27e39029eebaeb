import json

import numpy as np
import pytest

from sdedilation.experiments.builtins import (
    WEAK2_B,
    builtin_example3d,
    builtin_spde,
    builtin_weak2,
    periodic_differences,
)
from sdedilation.experiments.config import ConfigError, default_config, load_config, parse_config
from sdedilation.experiments.fitting import fit_loglog, fit_semilog
from sdedilation.experiments.io import expand_complex, fmt, to_jsonable, write_csv, write_json
from sdedilation.sde_model import k_max


def test_example3d():
    sys = builtin_example3d(1.0)
    assert sys.n_channels == 3
    assert np.allclose(sum(b.T @ b for b in sys.noise(0.0)), np.eye(3) / 3 * 3)
    assert np.isclose(k_max(sys, 1.0), 7.5710678, atol=1e-6)


def test_weak2_norm_preserving_generator():
    sys = builtin_weak2()
    assert np.allclose(sys.generator(0.0), 0.0)
    assert np.allclose(sys.noise(0.0)[0], WEAK2_B)


def test_spde_builtin():
    D1, D2 = periodic_differences(8)
    x = 2 * np.pi * np.arange(8) / 8
    # central differences are exact to O(dx^2) on sin
    assert np.allclose(D1 @ np.sin(x), np.cos(x), atol=0.11)
    assert np.allclose(D2 @ np.ones(8), 0.0)
    sys = builtin_spde()
    assert sys.dim == 16 and sys.n_channels == 2
    assert np.allclose(sys.X0.real, np.sin(2 * np.pi * np.arange(16) / 16))
    with pytest.raises(ValueError):
        builtin_spde(N_grid=7)


def test_fits():
    x = np.array([0.1, 0.05, 0.025, 0.0125])
    f = fit_loglog(x, 3 * x**2)
    assert np.isclose(f.slope, 2.0) and np.isclose(f.r2, 1.0)
    m = np.array([1, 2, 3, 4])
    s = fit_semilog(m, np.exp(-0.5 * m))
    assert np.isclose(s.slope, -0.5)
    with pytest.raises(ValueError):
        fit_loglog(x[:3], x[:3])
    with pytest.raises(ValueError):
        fit_loglog(x, -x)


def test_io_roundtrip(tmp_path):
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true"
    cols, vals = expand_complex("x", [1 + 2j])
    assert cols == ["x0_re", "x0_im"] and vals == [1.0, 2.0]
    p = write_csv(tmp_path / "a" / "t.csv", ["a", "b"], [[1, 0.5]])
    assert p.read_text() == "a,b\n1,0.5\n"
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", ["a"], [[1, 2]])
    j = write_json(tmp_path / "s.json", {"z": 1j, "arr": np.arange(2), "inf": float("inf")})
    doc = json.loads(j.read_text())
    assert doc == {"arr": [0, 1], "inf": "inf", "z": [0.0, 1.0]}
    assert to_jsonable(np.float64(2.5)) == 2.5


def test_default_configs_validate():
    for name in ("pathwise3d", "weak2conv", "spde_moment", "lightcone_decay", "invariants"):
        cfg = default_config(name)
        assert cfg.experiment == name
    with pytest.raises(ConfigError):
        default_config("nope")


def test_config_errors_are_located(tmp_path):
    with pytest.raises(ConfigError, match=r"cfg:2:"):
        parse_config('{"experiment":\n "pathwise3d",,}', "cfg")
    with pytest.raises(ConfigError, match="chain.M"):
        parse_config('{"experiment": "pathwise3d", "chain": {"M": 1}}', "cfg")
    with pytest.raises(ConfigError, match="does not divide"):
        parse_config('{"experiment": "pathwise3d", "dt": 0.3}', "cfg")
    with pytest.raises(ConfigError, match="unknown builtin"):
        parse_config('{"experiment": "pathwise3d", "system": {"builtin": "x"}}', "cfg")
    with pytest.raises(ConfigError, match="Extra inputs"):
        parse_config('{"experiment": "pathwise3d", "colour": 1}', "cfg")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_config_round_trip(tmp_path):
    cfg = default_config("lightcone_decay")
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.model_dump()))
    assert load_config(p) == cfg
