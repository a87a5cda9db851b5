"""Batch front end: model generation, Riccati solving, verification suites,
and assumption metrology.

Exit codes: 0 all checks passed, 1 verification failure, 2 usage or
configuration error. Configuration is a plain-text file with [section]
headers and key = value lines; unknown keys are hard errors. Every random
quantity is seeded from the config, with per-probe substreams expanded by
numpy's SeedSequence (a splitmix-style generator), so reports are
reproducible byte for byte apart from runtime fields.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import are as are_mod
from . import dre as dre_mod
from . import models, semiflow, synthesis
from .numkernel import NumericalError
from .report import VerificationReport

SCHEMA: dict[str, dict[str, type]] = {
    "model": {
        "kind": str, "file": str, "n": int, "beta": float,
        "n_h": int, "n_p": int, "kappa": float, "damping": float,
        "m": int, "p": int, "seed": int, "margin": float, "horizon": str,
    },
    "run": {
        "equation": str, "steps": int, "seed": int, "integrator": str,
        "probes": int, "solution": str, "checks": str, "tuples": int,
        "controls": int,
    },
    "tolerances": {
        "ire": float, "ire_strong": float, "are_integral": float,
        "fundamental": float, "selfconsistency": float,
        "generator_identity": float, "value_sandwich": float,
        "contraction": float, "solver": float,
    },
    "output": {"dir": str, "plot": str, "prefix": str},
}

DEFAULTS = {
    "model": {"kind": "heat", "n": 6, "beta": 0.25, "n_h": 4, "n_p": 4,
              "kappa": 0.5, "damping": 0.3, "m": 2, "p": 2, "seed": 0,
              "margin": 0.5, "horizon": "1.0"},
    "run": {"equation": "dre", "steps": 2000, "seed": 0,
            "integrator": "rk4", "probes": 16, "checks": "all",
            "tuples": 10, "controls": 10},
    "tolerances": {"ire": 1e-6, "ire_strong": 1e-6, "are_integral": 1e-6,
                   "fundamental": 1e-5, "selfconsistency": 1e-5,
                   "generator_identity": 1e-10, "value_sandwich": 1e-6,
                   "contraction": 1.0, "solver": 1e-12},
    "output": {"dir": ".", "plot": "false", "prefix": "run"},
}


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> dict:
    cfg = {s: dict(d) for s, d in DEFAULTS.items()}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside a [section]")
        key, _, val = line.partition("=")
        _set_key(cfg, section, key.strip(), val.strip())
    return cfg


def _set_key(cfg, section, key, val):
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    typ = SCHEMA[section][key]
    try:
        cfg[section][key] = typ(val)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {val!r}") from exc


def apply_overrides(cfg, pairs):
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        dotted, _, val = pair.partition("=")
        section, _, key = dotted.strip().partition(".")
        _set_key(cfg, section, key.strip(), val.strip())
    return cfg


def _horizon(cfg) -> float:
    h = cfg["model"]["horizon"]
    if h in ("inf", "infinite"):
        return math.inf
    try:
        val = float(h)
    except ValueError:
        raise ConfigError(f"bad horizon {h!r}")
    if val <= 0:
        raise ConfigError("horizon must be positive")
    return val


def build_model(cfg) -> models.LqModel:
    mc = cfg["model"]
    if mc.get("file"):
        return models.load(mc["file"])
    kind = mc["kind"]
    horizon = _horizon(cfg)
    if kind == "heat":
        return models.heat_boundary_surrogate(mc["n"], mc["beta"], horizon=horizon)
    if kind == "composite":
        return models.composite_surrogate(mc["n_h"], mc["n_p"], mc["kappa"],
                                          mc["damping"], seed=mc["seed"], horizon=horizon)
    if kind == "random":
        return models.random_stable(mc["n"], mc["m"], mc["p"], mc["seed"],
                                    mc["margin"], horizon=horizon)
    raise ConfigError(f"unknown generator kind {kind!r}")


def _out_path(cfg, outdir, name):
    d = outdir or cfg["output"]["dir"]
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, f"{cfg['output']['prefix']}_{name}")


def cmd_gen(cfg, outdir):
    model = build_model(cfg)
    path = _out_path(cfg, outdir, "model.txt")
    models.save(model, path)
    print(f"model_id {model.model_id()}")
    print(f"wrote {path}")
    return 0


def cmd_solve(cfg, outdir):
    model = build_model(cfg)
    eq = cfg["run"]["equation"]
    report = VerificationReport(model.model_id(), config_echo=_echo(cfg))
    if eq == "dre":
        if not model.finite_horizon:
            raise ConfigError("horizon mismatch: solve dre requires a finite horizon")
        sol = dre_mod.solve_dre(model, cfg["run"]["steps"], cfg["run"]["integrator"])
        path = _out_path(cfg, outdir, "dre.csv")
        dre_mod.save_csv(sol, model, path)
        report.record("terminal_condition", float(np.linalg.norm(sol.P[-1])), 1e-14)
        report.record("p0_norm", 0.0, 1.0)
        print(f"P(0) =\n{sol.P[0]}")
    elif eq == "are":
        if model.finite_horizon:
            raise ConfigError("horizon mismatch: solve are requires an infinite horizon")
        sol = are_mod.solve_are_newton(model, tol=cfg["tolerances"]["solver"])
        path = _out_path(cfg, outdir, "are.csv")
        are_mod.save_csv(sol, model, path)
        scale = max(np.linalg.norm(model.A, 2) * np.linalg.norm(sol.P, 2)
                    + np.linalg.norm(model.R, 2) ** 2, 1.0)
        report.record("are_residual", are_mod.are_residual_norm(sol.P, model) / scale, 1e-9)
        print(f"P =\n{sol.P}")
    else:
        raise ConfigError(f"unknown equation {eq!r}")
    report.save(_out_path(cfg, outdir, f"{eq}_report.json"))
    print(f"wrote {path}")
    return 0


def _echo(cfg):
    return {s: dict(d) for s, d in cfg.items()}


def _check_names(cfg):
    raw = cfg["run"]["checks"].strip()
    if raw in ("", "none"):
        return []
    if raw == "all":
        return ["all"]
    return [c.strip() for c in raw.split(",") if c.strip()]


def cmd_verify(cfg, outdir):
    model = build_model(cfg)
    sol_path = cfg["run"].get("solution")
    if not sol_path or not os.path.exists(sol_path):
        raise ConfigError("run.solution must point to an existing solution file")
    names = _check_names(cfg)
    report = VerificationReport(model.model_id(), config_echo=_echo(cfg))
    if names:
        wanted = None if names == ["all"] else set(names)
        with open(sol_path) as fh:
            meta = fh.readline()
        if "kind=dre" in meta:
            sol = dre_mod.load_csv(sol_path, model.n, model.m)
            _verify_dre(model, sol, cfg, report, wanted)
        elif "kind=are" in meta:
            sol = are_mod.load_csv(sol_path, model)
            _verify_are(model, sol, cfg, report, wanted)
        else:
            raise ConfigError("solution file kind not recognized")
    rpath = _out_path(cfg, outdir, "verify_report.json")
    report.save(rpath)
    if cfg["output"]["plot"].lower() in ("true", "1", "yes"):
        from .plotting import plot_residuals
        plot_residuals(report.to_dict(), _out_path(cfg, outdir, "verify_residuals.png"))
    for name, c in sorted(report.checks.items()):
        print(f"{'PASS' if c.passed else 'FAIL'} {name}: residual={c.residual:.3g} tol={c.tolerance:.3g}")
    print(f"wrote {rpath}")
    return 0 if report.all_passed else 1


def _wants(wanted, name):
    return wanted is None or name in wanted


def _verify_dre(model, sol, cfg, report, wanted=None):
    tol = cfg["tolerances"]
    seed = cfg["run"]["seed"]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    T = sol.T
    if _wants(wanted, "ire"):
        worst = 0.0
        for _ in range(cfg["run"]["tuples"]):
            s, t = np.sort(rng.choice(sol.grid, size=2, replace=False))
            x = rng.standard_normal(model.n)
            y = rng.standard_normal(model.n)
            scale = 1.0 + np.linalg.norm(x) * np.linalg.norm(y)
            worst = max(worst, dre_mod.ire_residual(sol, model, s, t, x, y) / scale)
        report.record("ire", worst, tol["ire"])
    if _wants(wanted, "ire_strong"):
        worst = 0.0
        for _ in range(cfg["run"]["tuples"]):
            s, t = np.sort(rng.choice(sol.grid, size=2, replace=False))
            worst = max(worst, dre_mod.ire_strong_residual(sol, model, s, t))
        report.record("ire_strong", worst, tol["ire_strong"])
    if _wants(wanted, "selfconsistency"):
        report.run("selfconsistency", tol["selfconsistency"],
                   lambda: dre_mod.opric_selfconsistency(sol, model, 0.0, probes=4, seed=seed))
    if _wants(wanted, "fundamental"):
        worst = 0.0
        for k in range(cfg["run"]["controls"]):
            u = random_control(model, np.linspace(0, T, 2001), seed + 1000 + k)
            x = rng.standard_normal(model.n)
            scale = 1e-5 * (1 + np.linalg.norm(x) ** 2 + u.lp_norm(2.0) ** 2)
            res = synthesis.fundamental_identity_residual(sol, model, u, x, 0.0, T,
                                                          precheck=(k == 0))
            worst = max(worst, res / scale * tol["fundamental"])
        report.record("fundamental", worst, tol["fundamental"])
    if _wants(wanted, "contraction"):
        trace = synthesis.closed_loop_fixed_point(model, sol, np.ones(model.n), r=4.0)
        report.record("contraction", 0.0 if trace.converged else 1.0, 0.5)
    if _wants(wanted, "uniqueness"):
        rho = dre_mod.uniqueness_contraction_estimate(
            sol, sol, model, delta=min(0.25 * T, T), probes=4, seed=seed)
        report.record("uniqueness_window_contraction", rho, tol["contraction"])
    if _wants(wanted, "class_qt"):
        dre_mod.check_class_QT(sol, model)
        report.record("class_qt", 0.0, 1.0)


def _verify_are(model, sol, cfg, report, wanted=None):
    tol = cfg["tolerances"]
    seed = cfg["run"]["seed"]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if _wants(wanted, "are_integral"):
        worst = 0.0
        for _ in range(cfg["run"]["tuples"]):
            x = rng.standard_normal(model.n)
            y = rng.standard_normal(model.n)
            scale = 1.0 + np.linalg.norm(x) * np.linalg.norm(y)
            worst = max(worst, are_mod.are_integral_residual(sol, model, 0.0, 5.0, x, y) / scale)
        report.record("are_integral", worst, tol["are_integral"])
    if _wants(wanted, "generator_identity"):
        report.run("generator_identity",
                   tol["generator_identity"] * max(np.linalg.norm(model.A, 2), 1.0),
                   lambda: are_mod.generator_identity_check(sol, model))
    if _wants(wanted, "value_sandwich"):
        x = np.ones(model.n) / np.sqrt(model.n)
        upper, lower = are_mod.value_sandwich_test(sol.P, model, x, reference=sol)
        report.record("value_sandwich", max(abs(upper), abs(lower)), tol["value_sandwich"])
    if _wants(wanted, "fundamental"):
        T = are_mod.truncation_horizon(model)
        worst = 0.0
        for k in range(cfg["run"]["controls"]):
            u = random_control(model, np.linspace(0, T, 2001), seed + 2000 + k)
            x = rng.standard_normal(model.n)
            scale = 1e-5 * (1 + np.linalg.norm(x) ** 2 + u.lp_norm(2.0) ** 2)
            res = synthesis.fundamental_identity_residual(sol, model, u, x, 0.0, T,
                                                          precheck=(k == 0))
            worst = max(worst, res / scale * tol["fundamental"])
        report.record("fundamental", worst, tol["fundamental"])


def random_control(model, grid, seed, blocks: int = 40) -> semiflow.ControlPath:
    """Seeded piecewise-constant control with grid-aligned breakpoints."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    levels = rng.standard_normal((blocks, model.m))
    idx = np.minimum((np.arange(len(grid)) * blocks) // max(len(grid) - 1, 1), blocks - 1)
    return semiflow.ControlPath(grid, levels[idx])


def cmd_assumptions(cfg, outdir):
    model = build_model(cfg)
    seed = cfg["run"]["seed"]
    rep = semiflow.assumption_report(model, seed=seed, probes=cfg["run"]["probes"])
    # duality residuals on a fine grid (infinite-horizon models only)
    a = model.assumption
    if not model.finite_horizon and model.m:
        horizon = 10.0
        grid = np.linspace(0.0, horizon, 1001)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        h = semiflow.ControlPath(grid, rng.standard_normal((len(grid), model.m)))
        g = rng.standard_normal((len(grid), model.n))
        res_s, res_t = semiflow.adjoint_duality_residual(
            model, 0.5 * min(a.omega, a.eta), h, g,
            rng.standard_normal(model.n), rng.standard_normal(model.m), horizon)
        rep["duality_residuals"] = [res_s, res_t]
    path = _out_path(cfg, outdir, "assumptions.json")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(rep, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    # CSV of kernel norm samples for external plotting, plus optional figure
    if model.m:
        ts = np.geomspace(1e-4, 1e-1, 48)
        norms = [float(np.linalg.norm(models.decompose_adjoint_kernel(model, t)[0], 2)) for t in ts]
        csv_path = _out_path(cfg, outdir, "kernel_norms.csv")
        with open(csv_path + ".tmp", "w") as fh:
            fh.write("t,F_norm,fit\n")
            gam = rep.get("gamma_hat")
            for t, v in zip(ts, norms):
                fit = rep["N_hat"] * t ** (-gam) if isinstance(gam, float) else ""
                fh.write(f"{t:.17g},{v:.17g},{fit}\n")
        os.replace(csv_path + ".tmp", csv_path)
        if cfg["output"]["plot"].lower() in ("true", "1", "yes"):
            from .plotting import plot_kernel_decay
            gam = rep.get("gamma_hat")
            gam = gam if isinstance(gam, float) else None
            plot_kernel_decay(ts, norms, gam, rep.get("N_hat"),
                              _out_path(cfg, outdir, "kernel_decay.png"))
    print(json.dumps(rep, indent=2, sort_keys=True))
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="riccati-lab",
        description="Surrogate LQ boundary-control laboratory: generate models, "
                    "solve Riccati equations, verify identities, measure assumptions.")
    parser.add_argument("command", choices=["gen", "solve", "verify", "assumptions"])
    parser.add_argument("--config", help="plain-text config file")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="inline config override")
    args = parser.parse_args(argv)

    threads = os.environ.get("RICCATI_LAB_THREADS")
    if threads is not None:
        try:
            if int(threads) < 1:
                raise ValueError
        except ValueError:
            print(f"error: bad RICCATI_LAB_THREADS value {threads!r}", file=sys.stderr)
            return 2

    try:
        if args.config:
            if not os.path.exists(args.config):
                raise ConfigError(f"config file not found: {args.config}")
            with open(args.config) as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = parse_config("")
        apply_overrides(cfg, args.overrides)
        handler = {"gen": cmd_gen, "solve": cmd_solve,
                   "verify": cmd_verify, "assumptions": cmd_assumptions}[args.command]
        return handler(cfg, args.out)
    except (ConfigError, NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
