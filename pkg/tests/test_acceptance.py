"""Acceptance criteria, one test per criterion.

Every test prints ``PASS``/``FAIL`` lines with the measured value and the
threshold; the lines are collected and repeated in the pytest terminal
summary.  Thresholds are written out here explicitly and passed to the
checks as parameter overrides, so a change of a library default cannot
loosen a criterion.  Run ``python3 tests/test_acceptance.py`` for the table
without pytest.
"""

import json
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import pytest

from kpcm.checks import run_check

SEED = 0
TIME_LIMIT = 60.0
LINES: list[str] = []


def _emit(criterion, label, value, limit, ok, unit=""):
    line = f"{'PASS' if ok else 'FAIL'}  [{criterion:>2}] {label:<48} {value:>11.3e} vs {limit:.1e}{unit}"
    LINES.append(line)
    print(line)
    return ok


def _checks(criterion, runs):
    """runs: list of (check name, overrides, {tol_key: threshold}) triples."""
    t0 = time.perf_counter()
    ok = True
    for name, overrides, limits in runs:
        reports = run_check(name, SEED, {**overrides, **limits})
        for r in reports:
            assert r.tolerance in limits.values()
            ok &= _emit(criterion, f"{name}/{r.label}", r.defect, r.tolerance, r.passed)
            if r.error:
                print("      error:", r.error)
    wall = time.perf_counter() - t0
    ok &= _emit(criterion, "wall time [s]", wall, TIME_LIMIT, wall < TIME_LIMIT)
    return ok


ENSEMBLE_1 = {"states": 200, "n_min": 2, "n_max": 8, "gammas": [1, 0.5, [0, 2]]}


def criterion_1():
    return _checks(1, [("comm_defect", ENSEMBLE_1, {"tol": 1e-12})])


def criterion_2():
    return _checks(2, [("lax_defect", ENSEMBLE_1, {"tol": 1e-10})])


def criterion_3():
    return _checks(3, [
        ("hamiltonian_decomposition", {"n_max": 8}, {"tol": 1e-11}),
        ("gradients", {"m_max": 5, "step": 1e-6}, {"tol": 1e-5}),
    ])


def criterion_4():
    flows = {"flows": [[2, 1.0], [3, 1.0], [4, 1.0]], "rtol": 1e-10}
    return _checks(4, [("isospectral", flows, {"tol_drift": 100.0, "tol_spectrum": 1e-7})])


def criterion_5():
    return _checks(5, [("pole_oracle", {"n_max": 6}, {"tol": 1e-7, "tol_shift": 1e-12})])


def criterion_6():
    return _checks(6, [("bilinear", {"draws": 100, "n_min": 1, "n_max": 5}, {"tol": 1e-10})])


def criterion_7():
    params = {"quad_nodes": 512, "contour_m_max": 3, "contour_n_max": 4, "identity_m_max": 4, "n_max": 5}
    return _checks(7, [("residues", params, {"tol_contour": 1e-9, "tol_identity": 1e-7})])


def criterion_8():
    return _checks(8, [("kp_equation", {"step": 1e-3, "n_max": 3}, {"tol": 1e-4, "tol_order": 1 / 3})])


def criterion_9():
    ens = {"n_max": 5}
    return _checks(9, [
        ("backlund_canonical", {**ens, "pairs": 50}, {"tol": 1e-10}),
        ("backlund_expansion", {**ens, "mu_moduli": [10.0, 20.0, 40.0], "orders": [1, 2, 3]}, {"tol": 0.3}),
        ("backlund_b6", ens, {"tol": 1e-8}),
        ("appendix_flows", ens, {"tol": 1e-10}),
        ("schur_exact", ens, {"tol": 0.0}),
    ])


def criterion_10():
    return _checks(10, [("rational_limit", {"small_gammas": [1e-2, 1e-3]}, {"tol": 0.2})])


# ---------------------------------------------------------------- criterion 11: CLI contract

CLI_CASES = {
    "all pass": (0, "verify", {"gamma": 1, "x0": [0], "p0": [0], "checks": ["comm_defect", "rank_one"]}),
    "check failure": (1, "verify", {"gamma": 1, "x0": [0], "p0": [0],
                                    "checks": [{"name": "rank_one", "params": {"tol": -1.0}}]}),
    "config error (gamma = 0)": (2, "verify", {"gamma": 0, "x0": [0], "p0": [0]}),
    "runtime collision": (3, "simulate", {"gamma": 1, "x0": [-1, 1], "p0": [0, 0],
                                          "flows": [{"m": 2, "t": 5.0}]}),
}

DETERMINISM_DOC = {
    "gamma": [0, 1], "x0": [[-0.8, 0.3], [0.1, 1.4], [0.9, 2.5]],
    "p0": [[0.2, -0.1], [-0.1, 0.15], [0.05, 0.1]],
    "flows": [{"m": 2, "t": 0.3}, {"m": 3, "t": 0.1}], "mu": [10, 20, 40],
    "checks": ["bilinear", "comm_defect", "rank_one"], "seed": 7,
}


def _cli(args):
    return subprocess.run([sys.executable, "-m", "kpcm", *args], capture_output=True, text=True).returncode


def criterion_11():
    t0 = time.perf_counter()
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for label, (want, command, doc) in CLI_CASES.items():
            cfg = tmp / f"{abs(hash(label))}.json"
            cfg.write_text(json.dumps(doc))
            got = _cli([command, "--config", str(cfg), "--out", str(tmp / cfg.stem), "--no-figures"])
            ok &= _emit(11, f"exit code, {label}", got, want, got == want)
        cfg = tmp / "det.json"
        cfg.write_text(json.dumps(DETERMINISM_DOC))
        for command in ("simulate", "verify", "tau-compare", "backlund"):
            outs = [tmp / f"{command}-{i}" for i in range(2)]
            for i, out in enumerate(outs):
                _cli([command, "--config", str(cfg), "--out", str(out), "--jobs", str(1 + 2 * i)])
            files = sorted(p.name for p in outs[0].glob("*.csv"))
            differing = sum((outs[0] / f).read_bytes() != (outs[1] / f).read_bytes() for f in files)
            ok &= _emit(11, f"byte-identical CSV, {command} ({len(files)} files)", differing, 0,
                        differing == 0 and len(files) > 0, unit=" differing")
    wall = time.perf_counter() - t0
    ok &= _emit(11, "wall time [s]", wall, TIME_LIMIT, wall < TIME_LIMIT)
    return ok


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.acceptance
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 12)])
def test_criterion(criterion):
    assert criterion()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
