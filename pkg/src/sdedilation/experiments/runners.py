"""Experiment runners: each writes CSV tables and a JSON summary."""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path
from typing import Optional

import numpy as np

from ..dilation import build_chain, dilate, make_readout, moment_check, project_readout
from ..noise import presample
from ..trajectory.ensemble import cos_affine_quadratic, ensemble_run
from ..trajectory.segmented import advance, make_integrator, run_segmented, steps_for
from .builtins import BUILTINS, builtin_weak2
from .config import ExperimentConfig
from .fitting import fit_loglog, fit_semilog
from .io import expand_complex, write_csv, write_json


# relative deviation at which a pathwise run counts as departed from the classical iterate
BREAKDOWN_TOL = 1e-2


def cache_dir(path=None) -> Path:
    if path is not None:
        return Path(path)
    env = os.environ.get("SDEDILATION_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "sdedilation"


def make_system(cfg: ExperimentConfig):
    if cfg.system is None:
        raise ValueError(f"experiment {cfg.experiment!r} needs a system")
    return BUILTINS[cfg.system.builtin](**cfg.system.params, T=cfg.T)


def em_reference_mean(B, f_name: str, T: float, dt: float, n: int, seed: int, *, cache=None,
                      threads: int = 1, chunk: int = 20000) -> dict:
    """Euler reference ``E f(X_T)`` for the weak-2 builtin, cached on disk by its parameters."""
    key = json.dumps({"B": np.asarray(B).tolist(), "f": f_name, "T": T, "dt": dt, "n": n,
                      "seed": seed, "chunk": chunk}, sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    path = None
    if cache is not False:
        path = cache_dir(cache) / f"emref-{digest}.json"
        if path.exists():
            return json.loads(path.read_text())
    sys = builtin_weak2(B, T=T)
    t0 = time.perf_counter()
    r = ensemble_run(sys, "em", T, dt, n, cos_affine_quadratic(), seed, law="gaussian", chunk=chunk,
                     threads=threads)
    out = {"mean": float(np.real(r.mean)), "stderr": r.stderr, "n": n, "dt": dt, "seed": seed,
           "runtime": time.perf_counter() - t0, "key": key}
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def weak2_convergence(dt_values=None, samples: int = 100000, ref_samples: int = 1000000,
                      ref_dt: float = 2.0**-12, seed: int = 17, T: float = 1.0, B=None, *,
                      scheme: str = "weak2", dilated: bool = False, M: int = 500, h: float = 2.0,
                      p_star: float = 0.1, use_mlc: bool = True, cache_dir=None, threads: int = 1) -> dict:
    """Weak errors ``|E f(X_T^dt) - E f(X_T^ref)|`` with ``f = cos(x1 + x2 + x3^2)``."""
    from .builtins import WEAK2_B

    B = WEAK2_B if B is None else np.asarray(B)
    dt_values = [2.0**-k for k in range(4, 9)] if dt_values is None else list(dt_values)
    f = cos_affine_quadratic()
    sys = builtin_weak2(B, T=T)
    ref = em_reference_mean(B, "cos_x1_x2_x3sq", T, ref_dt, ref_samples, seed + 1, cache=cache_dir,
                            threads=threads)
    model, kw = sys, {}
    if dilated:
        chain = build_chain(M, h)
        ro = make_readout(chain, p_star=p_star)
        model = dilate(sys, chain, use_mlc=use_mlc)
        kw = {"readout": ro, "n_sys": sys.dim}
    rows = []
    for k, dt in enumerate(dt_values):
        r = ensemble_run(model, scheme, T, dt, samples, f, seed + 100 + k, threads=threads, **kw)
        mean = float(np.real(r.mean))
        rows.append({"dt": dt, "mean": mean, "stderr": r.stderr, "error": abs(mean - ref["mean"]),
                     "error_bar": float(np.hypot(r.stderr, ref["stderr"]))})
    errs = [max(r["error"], 1e-300) for r in rows]
    fit = fit_loglog(dt_values, errs)
    return {"rows": rows, "reference": ref, "fit": fit.as_dict(), "scheme": scheme, "dilated": dilated}


def _pathwise(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    sys = make_system(cfg)
    dt = cfg.dt or 1e-3
    steps = steps_for(cfg.T, dt)
    noise = presample(steps, dt, sys.n_channels, "rademacher", cfg.seed)
    classical = [np.asarray(sys.X0, dtype=np.complex128)]
    integ = make_integrator(sys, cfg.scheme, dt)
    advance(integ, classical[0], noise, 0, steps, callback=lambda n, x: classical.append(x.copy()))
    chain = build_chain(cfg.chain.M, cfg.chain.h)
    dil = dilate(sys, chain, use_mlc=cfg.chain.use_mlc)
    runs = []
    for p in cfg.chain.p_values:
        ro = make_readout(chain, p_star=p)
        tau = cfg.tau or cfg.T
        _, diag = run_segmented(dil, ro, cfg.scheme, cfg.T, dt, tau, noise, refresh=cfg.tau is not None,
                                record_every=1, mode=cfg.readout, track_offmode=True)
        dilx = [np.asarray(sys.X0, dtype=np.complex128)]
        dilx += [x for _, x in diag["samples"]]
        header = ["t"]
        for name in ("classical", "dilated"):
            header += expand_complex(name, np.zeros(sys.dim))[0]
        header += ["rel_dev"]
        rows, devs = [], []
        for n, (xc, xd) in enumerate(zip(classical, dilx)):
            dev = float(np.linalg.norm(xd - xc) / max(np.linalg.norm(xc), 1e-300))
            devs.append(dev)
            rows.append([n * dt] + expand_complex("c", xc)[1] + expand_complex("d", xd)[1] + [dev])
        write_csv(out / f"pathwise_p{p:g}.csv", header, rows)
        over = [n for n, d in enumerate(devs) if d > BREAKDOWN_TOL]
        runs.append({"p_star": p, "j_star": ro.j_star, "gamma": complex(ro.gamma), "max_rel_dev": max(devs),
                     "final_rel_dev": devs[-1], "breakdown_time": over[0] * dt if over else None,
                     "breakdown_tol": BREAKDOWN_TOL, "offmode_max": diag["offmode_max"],
                     "g": diag["g"], "q_window": diag["q_window"], "Gamma1": diag["Gamma1"],
                     "Gamma2": diag["Gamma2"], "oaa_rounds": diag["oaa_rounds"],
                     "moment_deviation": moment_check(chain, ro, cfg.chain.use_mlc, 40)})
    return {"runs": runs, "steps": steps}, True


def _weak2(cfg: ExperimentConfig, out: Path, threads: int) -> tuple[dict, bool]:
    params = cfg.system.params if cfg.system else {}
    res = weak2_convergence(cfg.dt_values, cfg.samples, cfg.reference_samples, cfg.reference_dt, cfg.seed, cfg.T,
                            params.get("B"), scheme=cfg.scheme, dilated=cfg.dilated, M=cfg.chain.M, h=cfg.chain.h,
                            p_star=cfg.chain.p_values[0], use_mlc=cfg.chain.use_mlc, threads=threads)
    write_csv(out / "weak2conv.csv", ["dt", "mean", "stderr", "error", "error_bar"],
              [[r[k] for k in ("dt", "mean", "stderr", "error", "error_bar")] for r in res["rows"]])
    return res, True


def _spde(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    from .acceptance import spde_recovery

    params = dict(cfg.system.params) if cfg.system else {}
    r = spde_recovery(cfg.chain.use_mlc, M=cfg.chain.M, h=cfg.chain.h, p_star=cfg.chain.p_values[0], T=cfg.T,
                      tau=cfg.tau, **params)
    led = r["ledger"]
    rows = led.rows()
    cols = ["m", "g_m", "q_window", "q_lh", "lambda_m", "trace_defect", "min_eig"]
    write_csv(out / "segments.csv", cols, [[row[c] for c in cols] for row in rows])
    n = r["Sigma"].shape[0]
    write_csv(out / "sigma_T.csv", ["i", "j", "recovered_re", "recovered_im", "reference_re", "reference_im"],
              [[i, j, r["Sigma"][i, j].real, r["Sigma"][i, j].imag, r["reference"][i, j].real,
                r["reference"][i, j].imag] for i in range(n) for j in range(n)])
    summary = {k: r[k] for k in ("rel_error", "trace_defect_max", "min_eig_min", "tau", "segments", "j_star")}
    summary.update({"beta": r["readout"].beta, "P_win": r["readout"].P_win, "Gamma": led.Gamma,
                    "Lambda_T": led.Lambda_T, "g": led.g})
    return summary, True


def _lightcone(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    from .acceptance import lightcone_measure

    sys = make_system(cfg)
    rows, K = lightcone_measure(sys, cfg.chain.M, cfg.chain.h, cfg.T, cfg.dt or 1e-3,
                                cfg.m_values or [4, 6, 8, 10, 12], cfg.samples, cfg.seed)
    C = rows[0]["error"] / rows[0]["bound"] if np.isfinite(rows[0]["bound"]) else float("nan")
    write_csv(out / "lightcone.csv", ["m", "j_star", "error", "rho", "bound", "C_bound"],
              [[r["m"], r["j_star"], r["error"], r["rho"], r["bound"], C * r["bound"]] for r in rows])
    errs = [r["error"] for r in rows]
    fit = fit_semilog([r["m"] for r in rows], errs) if all(e > 0 for e in errs) and len(rows) >= 4 else None
    return {"K_max": K, "rows": rows, "C": C, "fit": fit.as_dict() if fit else None}, True


def _invariants(cfg: ExperimentConfig, out: Path) -> tuple[dict, bool]:
    from .acceptance import CRITERIA

    results = []
    for c in cfg.criteria or []:
        key = str(c)
        if key not in CRITERIA:
            raise ValueError(f"unknown criterion {c}")
        res = CRITERIA[key]()
        print(res.line(), flush=True)
        results.append(res.as_dict())
    write_csv(out / "invariants.csv", ["criterion", "passed", "runtime"],
              [[r["number"], r["passed"], r["runtime"]] for r in results])
    ok = all(r["passed"] for r in results)
    return {"criteria": results, "all_passed": ok}, ok


def run_experiment(cfg: ExperimentConfig, out_dir, *, threads: int = 1) -> tuple[dict, bool]:
    """Run ``cfg`` and write its tables plus ``summary.json`` under ``out_dir``."""
    out = Path(cfg.output or out_dir) / cfg.experiment
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.experiment == "pathwise3d":
        body, ok = _pathwise(cfg, out)
    elif cfg.experiment == "weak2conv":
        body, ok = _weak2(cfg, out, threads)
    elif cfg.experiment == "spde_moment":
        body, ok = _spde(cfg, out)
    elif cfg.experiment == "lightcone_decay":
        body, ok = _lightcone(cfg, out)
    else:
        body, ok = _invariants(cfg, out)
    summary = {"experiment": cfg.experiment, "config": cfg.model_dump(), "results": body,
               "ok": ok, "runtime": time.perf_counter() - t0}
    write_json(out / "summary.json", summary)
    return summary, ok
