"""Command line front end: ``kpcm {simulate,verify,tau-compare,backlund}``.

Every command reads one JSON configuration (see :mod:`kpcm.config`),
writes CSV tables and a ``summary.json`` into the output directory and,
unless ``--no-figures`` is given, PNG figures next to them.

Exit codes: 0 success, 1 a check or row failed, 2 configuration error,
3 runtime singularity (pole collision, step underflow, ambiguous branch).
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import backlund as bk
from . import kp_tau as kt
from .checks import REGISTRY, configuration_distance, run_check
from .cm_core import PhaseState, hamiltonian_h
from .config import CheckRequest, ConfigError, RunConfig, load_config
from .errors import (BranchAmbiguity, KPCMError, NewtonDivergence, PoleCollision,
                     RootsNotConverged, StepUnderflow)
from .flows import integrate

log = logging.getLogger("kpcm")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SINGULAR = 0, 1, 2, 3
SINGULAR = (PoleCollision, StepUnderflow, BranchAmbiguity, RootsNotConverged)
LOG_LEVELS = {"off": None, "info": logging.INFO, "debug": logging.DEBUG}


# ---------------------------------------------------------------- output helpers

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, cfg: RunConfig, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config sha256={cfg.digest} seed={cfg.seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def write_summary(cfg: RunConfig, command: str, payload: dict, exit_code: int, files) -> Path:
    doc = {"command": command, "config_sha256": cfg.digest, "seed": cfg.seed,
           "exit_code": exit_code, "files": sorted(str(Path(f).name) for f in files)}
    doc.update(payload)
    path = cfg.output_dir / "summary.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _cx(z):
    return [float(np.real(z)), float(np.imag(z))]


def _xp_columns(n, prefix=("x", "p")):
    cols = []
    for name in prefix:
        for i in range(1, n + 1):
            cols += [f"{name}{i}_re", f"{name}{i}_im"]
    return cols


def _xp_values(*arrays):
    out = []
    for a in arrays:
        for z in a:
            out += [float(z.real), float(z.imag)]
    return out


def _initial_state(cfg: RunConfig) -> PhaseState:
    return PhaseState(cfg.gamma, cfg.x0, cfg.p0, cfg.eps_coll)


def _figure(cfg, fn, *args):
    """Render one figure unless disabled; figures never change the exit code."""
    if not cfg.figures:
        return []
    from . import plotting
    try:
        return [getattr(plotting, fn)(*args)]
    except Exception as exc:  # plotting problems must not hide numerical results
        log.warning("figure %s failed: %s", args[0], exc)
        return []


# ---------------------------------------------------------------- simulate

def _trajectory_rows(traj, n, h_ref):
    rows, drift_hist = [], []
    for t, s in zip(traj.t, traj.states):
        h = np.array([hamiltonian_h(s, k) for k in range(1, n + 1)])
        drift = np.abs(h - h_ref) / np.maximum(1.0, np.abs(h_ref))
        drift_hist.append(drift)
        rows.append([t, *_xp_values(s.x, s.p), *drift, "ok"])
    return rows, drift_hist


def cmd_simulate(cfg: RunConfig) -> int:
    """Apply the configured flows one after another and tabulate every accepted step."""
    if not cfg.flows:
        raise ConfigError("simulate needs at least one entry in flows")
    s = _initial_state(cfg)
    n = s.n
    header = ["t", *_xp_columns(n), *[f"drift_H{k}" for k in range(1, n + 1)], "status"]
    files, flows_out = [], []
    code = EXIT_OK
    for idx, f in enumerate(cfg.flows):
        h_ref = np.array([hamiltonian_h(s, k) for k in range(1, n + 1)])
        error = None
        try:
            traj = integrate(s, f.m, f.t, f.rtol)
        except SINGULAR as exc:
            traj = getattr(exc, "trajectory", None)
            error = exc
        rows, drift = _trajectory_rows(traj, n, h_ref) if traj is not None else ([], [])
        entry = {"index": idx, "m": f.m, "t": f.t, "rtol": f.rtol, "steps": max(len(rows) - 1, 0)}
        if error is not None:
            t_fail = getattr(error, "t", None)
            if t_fail is None:
                t_fail = traj.t[-1] if traj is not None and len(traj) else 0.0
            rows.append([t_fail, *([float("nan")] * (4 * n + n)), type(error).__name__])
            entry.update(status=type(error).__name__, failed_at=t_fail, message=str(error))
            code = EXIT_SINGULAR
            log.error("flow m=%d failed at t=%g: %s", f.m, t_fail, error)
        else:
            entry.update(status="ok", max_drift=float(np.max(drift)) if drift else 0.0,
                         final_x=[_cx(z) for z in traj.final.x], final_p=[_cx(z) for z in traj.final.p])
        path = cfg.output_dir / f"trajectory_{idx}_m{f.m}.csv"
        files.append(write_csv(path, cfg, header, rows))
        if traj is not None and len(traj) > 1:
            files += _figure(cfg, "trajectory_figure", path.with_suffix(".png"), traj.t,
                             traj.positions(), np.array(drift), f"flow m={f.m}")
        flows_out.append(entry)
        if error is not None:
            break
        s = traj.final
    files.append(write_summary(cfg, "simulate", {"flows": flows_out}, code, files))
    return code


# ---------------------------------------------------------------- verify

def cmd_verify(cfg: RunConfig, jobs: int = 1) -> int:
    """Run the requested checks (all registered ones by default)."""
    requests = cfg.checks or tuple(_default_checks())
    t0 = time.perf_counter()

    def one(req):
        log.info("check %s started", req.name)
        return run_check(req.name, cfg.seed, req.params, cfg.digest)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        reports = [r for rows in pool.map(one, requests) for r in rows]
    reports.sort(key=lambda r: (r.check, r.row))
    header = ["check", "row", "label", "status", "defect", "tolerance", "samples", "provenance"]
    rows = [[r.check, r.row, r.label, r.status, r.defect, r.tolerance, r.samples, r.provenance]
            for r in reports]
    files = [write_csv(cfg.output_dir / "verify.csv", cfg, header, rows)]
    files += _figure(cfg, "defects_figure", cfg.output_dir / "verify.png",
                     [f"{r.check}/{r.label}" for r in reports], [r.defect for r in reports],
                     [r.tolerance for r in reports])
    failed = [r for r in reports if not r.passed]
    code = EXIT_FAIL if failed else EXIT_OK
    payload = {
        "passed": len(reports) - len(failed), "failed": len(failed),
        "wall_time": time.perf_counter() - t0,
        "reports": [dict(check=r.check, row=r.row, label=r.label, status=r.status, defect=r.defect,
                         tolerance=r.tolerance, samples=r.samples, wall_time=r.wall_time,
                         provenance=r.provenance, error=r.error) for r in reports],
    }
    files.append(write_summary(cfg, "verify", payload, code, files))
    for r in failed:
        log.error("check %s/%s failed: defect %.3e > %.3e %s", r.check, r.label, r.defect,
                  r.tolerance, r.error)
    return code


def _default_checks():
    return [CheckRequest(name) for name in sorted(REGISTRY)]


# ---------------------------------------------------------------- tau-compare

def cmd_tau_compare(cfg: RunConfig) -> int:
    """Integrated pole positions against the determinant formula at matched times.

    Each configured flow starts from the initial state on its own.  Rows are
    equally spaced in t; the integrator continues from the previous row and
    the determinant poles are tracked from the previous row's poles.
    """
    if not cfg.flows:
        raise ConfigError("tau-compare needs at least one entry in flows")
    s0 = _initial_state(cfg)
    s0.check_regular()
    n = s0.n
    fm = kt.FlowMatrixSet.from_state(s0)
    header = ["flow", "m", "t", "deviation", *_xp_columns(n, ("x", "xdet")), "status"]
    rows, series, flows_out = [], {}, []
    code = EXIT_OK
    for idx, f in enumerate(cfg.flows):
        ts = np.linspace(0.0, f.t, cfg.tau_samples)
        s, x_det = s0, s0.x
        devs = []
        try:
            for j, t in enumerate(ts):
                if j:
                    s = integrate(s, f.m, t - ts[j - 1], f.rtol).final
                    x_det = kt.poles_from_times(fm, s0, {f.m: t}, reference=x_det,
                                                steps=cfg.tau_tracking_steps)
                dev = configuration_distance(s.x, x_det, cfg.gamma)
                devs.append(dev)
                rows.append([idx, f.m, float(t), dev, *_xp_values(s.x, x_det), "ok"])
        except SINGULAR as exc:
            t_fail = getattr(exc, "t", None)
            t_fail = float(ts[len(devs)]) if t_fail is None else float(ts[len(devs) - 1] + t_fail)
            rows.append([idx, f.m, t_fail, float("nan"), *([float("nan")] * 4 * n), type(exc).__name__])
            flows_out.append({"index": idx, "m": f.m, "status": type(exc).__name__,
                              "failed_at": t_fail, "message": str(exc)})
            log.error("tau-compare flow m=%d failed at t=%g: %s", f.m, t_fail, exc)
            code = EXIT_SINGULAR
            break
        except ValueError as exc:
            raise ConfigError(f"flows[{idx}]: {exc}") from None
        worst = max(devs)
        ok = worst <= cfg.tau_tol
        if not ok and code == EXIT_OK:
            code = EXIT_FAIL
        flows_out.append({"index": idx, "m": f.m, "t": f.t, "max_deviation": worst,
                          "tolerance": cfg.tau_tol, "status": "pass" if ok else "fail"})
        series[f"m={f.m}"] = (ts[:len(devs)], np.array(devs))
    files = [write_csv(cfg.output_dir / "tau_compare.csv", cfg, header, rows)]
    if series:
        files += _figure(cfg, "deviation_figure", cfg.output_dir / "tau_compare.png", series)
    files.append(write_summary(cfg, "tau-compare", {"flows": flows_out}, code, files))
    return code


# ---------------------------------------------------------------- backlund

def _backlund_row(s, mu, table):
    try:
        pair = bk.backlund_solve(s, mu)
    except (NewtonDivergence, PoleCollision) as exc:
        return {"mu": mu, "status": type(exc).__name__, "message": str(exc),
                "iterations": getattr(exc, "iterations", None) or 0}
    exp = [float(np.max(np.abs(pair.target_y - bk.series_y(s, mu, k, table)))) for k in (1, 2, 3)]
    return {"mu": mu, "status": "ok", "iterations": pair.iterations, "residual": pair.residual,
            "canonical": bk.canonical_defect(pair, relative=True), "expansion": exp,
            "y": pair.target_y, "pt": pair.target_p}


def cmd_backlund(cfg: RunConfig, jobs: int = 1) -> int:
    """Solve the Backlund map for every configured mu and tabulate the defects."""
    if not cfg.mu:
        raise ConfigError("backlund needs a non-empty mu list")
    s = _initial_state(cfg)
    s.check_regular()
    n = s.n
    table = bk.schur_table(s)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda mu: _backlund_row(s, complex(mu), table), cfg.mu))
    header = ["row", "mu_re", "mu_im", "status", "iterations", "newton_residual", "canonical_defect",
              "expansion_K1", "expansion_K2", "expansion_K3", *_xp_columns(n, ("y", "pt"))]
    rows, code = [], EXIT_OK
    nan = float("nan")
    for i, r in enumerate(results):
        mu = r["mu"]
        if r["status"] == "ok":
            passed = r["canonical"] <= cfg.canonical_tol
            status = "ok" if passed else "canonical_fail"
            rows.append([i, mu.real, mu.imag, status, r["iterations"], r["residual"], r["canonical"],
                         *r["expansion"], *_xp_values(r["y"], r["pt"])])
        else:
            passed = False
            rows.append([i, mu.real, mu.imag, r["status"], r["iterations"], nan, nan, nan, nan, nan,
                         *([nan] * 4 * n)])
            log.error("mu=%s: %s", mu, r["message"])
        if not passed:
            code = EXIT_FAIL
    ok = [r for r in results if r["status"] == "ok"]
    slopes = {}
    if len({abs(r["mu"]) for r in ok}) >= 2:
        for j, k in enumerate((1, 2, 3)):
            d = [r["expansion"][j] for r in ok]
            if all(v > 0 for v in d):
                slopes[f"K{k}"] = bk.fit_exponent([r["mu"] for r in ok], d)
    files = [write_csv(cfg.output_dir / "backlund.csv", cfg, header, rows)]
    if len(ok) >= 2:
        files += _figure(cfg, "expansion_figure", cfg.output_dir / "backlund.png",
                         [abs(r["mu"]) for r in ok],
                         {k: [r["expansion"][k - 1] for r in ok] for k in (1, 2, 3)})
    payload = {"rows": len(rows), "failed_rows": sum(1 for r in rows if r[3] != "ok"),
               "expansion_exponents": slopes, "canonical_tolerance": cfg.canonical_tol}
    files.append(write_summary(cfg, "backlund", payload, code, files))
    return code


# ---------------------------------------------------------------- entry point

COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify,
            "tau-compare": cmd_tau_compare, "backlund": cmd_backlund}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kpcm", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=(COMMANDS[name].__doc__ or "").split("\n")[0])
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides seed)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for independent checks/rows")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return ap


def _setup_logging():
    level = os.environ.get("KPCM_LOG", "off").strip().lower()
    if level not in LOG_LEVELS:
        print(f"kpcm: unknown KPCM_LOG={level!r}, using 'off'", file=sys.stderr)
        level = "off"
    root = logging.getLogger("kpcm")
    root.handlers.clear()
    if LOG_LEVELS[level] is None:
        root.setLevel(logging.CRITICAL + 1)
        return
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(h)
    root.setLevel(LOG_LEVELS[level])


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
        cfg = dataclasses.replace(cfg, figures=not args.no_figures)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        code = fn(cfg, args.jobs) if args.command in ("verify", "backlund") else fn(cfg)
    except ConfigError as exc:
        print(f"kpcm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SINGULAR as exc:
        # singular initial data (before any table could be written)
        print(f"kpcm: {type(exc).__name__} at t=0: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except KPCMError as exc:
        print(f"kpcm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"kpcm {args.command}: exit {code}, results in {cfg.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
