"""Command-line runner: ``mslab <subcommand> --config FILE [flags]``.

Exit codes: 0 when every check of the run passes, 1 when a check fails,
2 for usage, configuration, infeasibility or solver errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .calibration import ConstructionError, InfeasibleParameters, calibrate
from .config import ConfigError, RunConfig, load_config
from .fields import GridSpec, NonConvergenceError, datum_field, solve_diagnostics, solve_piecewise, write_field_csv
from .functional import Problem, compare_with_competitors, default_competitors
from .minmov import EvolutionConfig, critical_time, heat_reference, mm_evolve, step_equivalence_probe
from .report import emit_report, write_csv
from .verifier import scaling_study, scan_beta_threshold, verify_all

log = logging.getLogger("mslab")

SUBCOMMANDS = ("solve", "energy", "calibrate", "verify", "scan", "scaling", "evolve", "probe")


class RunFailure(Exception):
    """Usage-level failure of a run (exit code 2)."""


def _setup(cfg: RunConfig):
    g = cfg.datum()
    grid = GridSpec(g.domain, cfg.cells())
    return g, grid, cfg.solver_kw()


def _beta(cfg):
    return cfg.get_float("calibration", "beta", 100.0, positive=True)


def _dump_fields(outdir: Path, prefix: str, u):
    for i in (1, 2):
        write_field_csv(outdir / f"{prefix}_side{i}.csv", u.side(i))


def _calibration_kw(cfg):
    kw = {
        "lambda_rule": cfg.raw("calibration", "lambda_rule", "default"),
        "gamma": cfg.get_float("calibration", "gamma", 0.2),
        "gamma1": cfg.get_float("calibration", "gamma1", 0.35),
    }
    for key, name in (("lam", "lam"), ("eps", "eps"), ("d", "D")):
        v = cfg.get_float("calibration", key)
        if v is not None:
            kw[name] = v
    return kw


def run_solve(cfg, outdir, args):
    g, grid, skw = _setup(cfg)
    beta = _beta(cfg)
    u = solve_piecewise(grid, g, beta, **skw)
    x = grid.centers()
    res = {"beta": beta, "cells": list(grid.cells)}
    ok = True
    for i in (1, 2):
        d = solve_diagnostics(u.side(i), g.values(x, side=i), beta)
        res[f"compat_side{i}"] = d["compat"]
        res[f"maxp_side{i}"] = d["maxp"]
        ok &= d["compat"] <= 1e-10 and d["maxp"] <= 1e-12
    exact = g.exact_solution(beta)
    if exact is not None:
        err = max(float(np.max(np.abs(u.side(i).values[u.side(i).mask]
                                      - exact[i - 1].value(x)[u.side(i).mask.reshape(-1)])))
                  for i in (1, 2))
        res["sup_error_vs_closed_form"] = err
    res["sup_norm"] = u.sup()
    if cfg.get_bool("output", "emit_fields"):
        _dump_fields(outdir, "u", u)
    return ok, {"results": res}


def run_energy(cfg, outdir, args):
    g, grid, skw = _setup(cfg)
    pb = Problem(grid, g, _beta(cfg), skw)
    rows = [["u_beta"] + pb.energy(pb.u_beta).as_row()]
    for label, cand in default_competitors(pb):
        rows.append([label] + pb.energy(cand).as_row())
    write_csv(outdir / "energy.csv", ["candidate", "dirichlet", "jump", "fidelity", "total"], rows)
    cmp = compare_with_competitors(pb)
    return cmp.strict, {"results": {"beta": pb.beta, "energy_u_beta": cmp.energy, "min_competitor_margin": cmp.margin,
                                    "ties": ", ".join(cmp.ties) or "none", "u_beta_strict_minimizer": cmp.strict}}


def _calibrate(cfg, g, grid, beta, enforce):
    try:
        return calibrate(g, beta, grid=grid, enforce=enforce, **_calibration_kw(cfg))
    except (InfeasibleParameters, ConstructionError) as e:
        raise RunFailure(f"calibration infeasible: {e}") from None
    except NotImplementedError as e:
        raise RunFailure(str(e)) from None


def run_calibrate(cfg, outdir, args):
    g, grid, _ = _setup(cfg)
    cal = _calibrate(cfg, g, grid, _beta(cfg), cfg.get_bool("calibration", "enforce", True))
    params = cal.params.as_dict()
    params["d_kink"] = cal.params.d_kink
    return True, {"parameters": params, "warnings": {f"w{i}": w for i, w in enumerate(cal.params.warnings)}}


def run_verify(cfg, outdir, args):
    g, grid, _ = _setup(cfg)
    cal = _calibrate(cfg, g, grid, _beta(cfg), cfg.get_bool("calibration", "enforce", False))
    rep = verify_all(cal, n_x=cfg.get_int("calibration", "n_x", 401), n_z=cfg.get_int("calibration", "n_z", 257),
                     workers=args.workers)
    dim = g.domain.dim
    write_csv(outdir / "margins.csv", ["x", "y"][:dim] + ["z", "margin"], rep.margins.tolist())
    sections = {"parameters": rep.parameters | {"warnings": "; ".join(rep.parameters["warnings"]) or "none"},
                "samples": rep.sample_counts}
    for name, r in rep.conditions.items():
        sections[name] = {"passed": r.passed, "tolerance": r.tolerance, "worst_residual": r.worst_residual,
                          "worst_location": list(r.worst_location)} | r.margin_stats
    sections["summary"] = {"failed": ", ".join(rep.failed()) or "none"}
    return rep.passed, sections


def run_scan(cfg, outdir, args):
    g, grid, skw = _setup(cfg)
    lo = cfg.get_float("scan", "beta_min", 1.0, positive=True)
    hi = cfg.get_float("scan", "beta_max", 1e4, positive=True)
    kw = _calibration_kw(cfg)
    kw["grid"] = grid
    res = scan_beta_threshold(g, (lo, hi), problem_at=lambda b: Problem(grid, g, b, skw), calibrate_kw=kw,
                              iters=cfg.get_int("scan", "iters", 10))
    write_csv(outdir / "scan.csv", ["beta", "passed", "failed_conditions"], res.history)
    return True, {"results": {"beta_threshold": res.beta_threshold, "energy_crossover": res.crossover,
                              "diagnostics": res.diagnostics}}


def run_scaling(cfg, outdir, args):
    g, _, skw = _setup(cfg)
    n = cfg.get_int("scaling", "n", 4096 if g.domain.dim == 1 else 256)
    grid = GridSpec(g.domain, (n,) * g.domain.dim)
    betas = cfg.get_floats("scaling", "betas", [1e2, 1e3, 1e4, 1e5])
    try:
        rep = scaling_study(g, betas, grid, **skw)
    except ValueError as e:
        raise RunFailure(str(e)) from None
    write_csv(outdir / "scaling.csv", ["beta", "sup_err", "l2_err", "grad_sup", "hess_sup"], rep.rows())
    grad_factor = float(rep.grad_sup.max() / rep.grad_sup.min())
    ok = -0.6 <= rep.slopes["sup"] <= -0.4 and grad_factor <= 2 and rep.slopes["hess"] <= 0.6
    return ok, {"slopes": rep.slopes, "fit_residuals": rep.residuals, "results": {"grad_factor": grad_factor}}


def _evolution_config(cfg, g, grid, skw):
    delta = cfg.get_float("evolution", "delta", 1e-3, positive=True)
    horizon = cfg.get_float("evolution", "t", 0.1, positive=True)
    try:
        return EvolutionConfig(g, grid, delta, horizon, skw, cfg.get_int("evolution", "snapshot_every", 0))
    except ValueError as e:
        raise RunFailure(str(e)) from None


def run_evolve(cfg, outdir, args):
    g, grid, skw = _setup(cfg)
    ec = _evolution_config(cfg, g, grid, skw)
    tr = mm_evolve(ec)
    write_csv(outdir / "trace.csv", ["i", "t", "F0", "sup_norm", "lap_sup", "jump_min"], tr.rows())
    if cfg.get_bool("output", "emit_fields") and ec.snapshot_every > 0:
        for i in range(0, len(tr.fields), ec.snapshot_every):
            _dump_fields(outdir, f"v_{i:06d}", tr.fields[i])
    res = {"steps": len(tr.fields) - 1, "delta": ec.delta, "horizon": ec.horizon,
           "lipschitz_excess": tr.lipschitz_excess(), "critical_time": critical_time(tr)}
    ref, label = heat_reference(g, tr.times[-1], grid, ec.delta)
    res["heat_reference"] = label
    res["sup_error_vs_heat"] = float(np.max(np.abs(tr.fields[-1].combined() - ref.combined())))
    ok = tr.ok and res["lipschitz_excess"] <= 1e-8
    return ok, {"results": res, "flags": {f"f{i}": f for i, f in enumerate(tr.flags)}}


def run_probe(cfg, outdir, args):
    g, grid, skw = _setup(cfg)
    delta = cfg.get_float("evolution", "delta", 1e-3, positive=True)
    rep = step_equivalence_probe(datum_field(grid, g), delta, **skw)
    rows = [["fixed_crack", rep.energy]] + [[k, v] for k, v in rep.competitors.items()]
    write_csv(outdir / "probe.csv", ["candidate", "incremental_energy"], rows)
    return rep.strict, {"results": {"delta": delta, "fixed_crack_energy": rep.energy, "margin": rep.margin,
                                    "strict": rep.strict, "ties": ", ".join(rep.ties) or "none"}}


RUNNERS = {
    "solve": run_solve, "energy": run_energy, "calibrate": run_calibrate, "verify": run_verify,
    "scan": run_scan, "scaling": run_scaling, "evolve": run_evolve, "probe": run_probe,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mslab", description=__doc__.splitlines()[0],
                                epilog="Exit codes: 0 pass, 1 checks failed, 2 usage or infeasibility error.")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    helps = {
        "solve": "solve the screened problem on each side",
        "energy": "energies of u_beta and its competitors",
        "calibrate": "compute the calibration parameters",
        "verify": "verify the calibration conditions",
        "scan": "bisect for the smallest beta whose calibration verifies",
        "scaling": "fit beta-scaling slopes of error and derivative norms",
        "evolve": "run the fixed-crack minimizing-movement chain",
        "probe": "compare one movement step with its competitors",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--beta", type=float, help="override [calibration] beta")
        sp.add_argument("--delta", type=float, help="override [evolution] delta")
        sp.add_argument("--out", help="override [output] directory")
        sp.add_argument("--workers", type=int, default=1, help="worker threads for sampling (default 1)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.beta is not None:
            cfg.set("calibration", "beta", repr(args.beta))
        if args.delta is not None:
            cfg.set("evolution", "delta", repr(args.delta))
        if args.out is not None:
            cfg.set("output", "directory", args.out)
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg.validate()
        outdir = Path(cfg.raw("output", "directory", "mslab-out"))
        outdir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        passed, sections = RUNNERS[args.command](cfg, outdir, args)
        elapsed = time.perf_counter() - t0
        path = emit_report(outdir, args.command, cfg.to_ini(), sections, passed, {args.command: elapsed})
    except (ConfigError, RunFailure, NonConvergenceError) as e:
        print(f"mslab: error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"mslab: error: cannot write output: {e}", file=sys.stderr)
        return 2
    status = "pass" if passed else "FAIL"
    failed = sections.get("summary", {}).get("failed")
    print(f"mslab {args.command}: {status}" + (f" (failed: {failed})" if not passed and failed else "")
          + f"; report at {path}")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
