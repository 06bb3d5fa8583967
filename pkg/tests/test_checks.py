import numpy as np
import pytest

from kpcm.checks import (DEFAULT_SUITE, REGISTRY, CheckReport, as_complex, configuration_distance,
                         merged_params, run_check)
from kpcm.config import ConfigError, digest_of, load_config, parse_config

FAST = ["linalg", "comm_defect", "lax_defect", "hamiltonian_decomposition", "gradients",
        "appendix_hamiltonians", "rational_limit", "bilinear", "wave_functions", "rank_one",
        "tau_consistency", "backlund_canonical", "backlund_b6", "appendix_flows", "schur_exact"]


def test_suite_is_registered():
    assert set(FAST) <= set(REGISTRY)
    assert DEFAULT_SUITE == sorted(REGISTRY)
    for spec in REGISTRY.values():
        assert spec.summary
        assert any(k.startswith("tol") for k in spec.defaults)


def test_as_complex():
    assert as_complex([1, -2]) == 1 - 2j
    assert as_complex(3) == 3
    for bad in ([1, 2, 3], "x", True):
        with pytest.raises(ValueError):
            as_complex(bad)


def test_unknown_parameter_rejected():
    with pytest.raises(ValueError):
        merged_params("comm_defect", {"nope": 1})


def test_tolerance_comes_from_parameters():
    ok = run_check("rank_one", 0)
    assert all(r.passed and r.tolerance == 1e-12 for r in ok)
    # an impossible tolerance fails without the measurement changing
    strict = run_check("rank_one", 0, {"tol": -1.0})
    assert [r.defect for r in strict] == [r.defect for r in ok]
    assert all(r.status == "fail" and r.tolerance == -1.0 for r in strict)


def test_reports_are_seed_deterministic():
    a = run_check("bilinear", 5, {"draws": 5}, provenance="abc")
    b = run_check("bilinear", 5, {"draws": 5}, provenance="abc")
    assert [(r.label, r.defect) for r in a] == [(r.label, r.defect) for r in b]
    assert all(isinstance(r, CheckReport) and r.provenance == "abc" for r in a)
    c = run_check("bilinear", 6, {"draws": 5})
    assert [r.defect for r in a] != [r.defect for r in c]


@pytest.mark.parametrize("name", FAST)
def test_fast_checks_pass_at_seed_zero(name):
    reports = run_check(name, 0)
    assert reports
    bad = [(r.label, r.defect, r.tolerance, r.error) for r in reports if not r.passed]
    assert not bad


@pytest.mark.slow
@pytest.mark.parametrize("name", ["flow_properties", "tau_consistency", "residues"])
def test_flow_suites_pass_at_seed_zero(name):
    bad = [(r.label, r.defect, r.tolerance, r.error) for r in run_check(name, 0) if not r.passed]
    assert not bad


def test_configuration_distance_relabel_and_period():
    g = 1.0
    xa = np.array([0.1 + 0.2j, -0.5, 0.7j])
    xb = xa[[2, 0, 1]] + np.array([1j * np.pi, 0, -2j * np.pi])
    assert configuration_distance(xa, xb, g) <= 1e-15
    assert configuration_distance(xa, xb + 1e-3, g) == pytest.approx(1e-3, rel=1e-6)
    pa = np.array([1.0, 2.0, 3.0])
    assert configuration_distance(xa, xb, g, pa, pa[[2, 0, 1]]) <= 1e-15


# ---------------------------------------------------------------- configuration

BASE = {"gamma": 1, "x0": [-0.5, 0.5], "p0": [0.1, -0.1]}


def test_parse_minimal_config():
    cfg = parse_config(dict(BASE))
    assert cfg.gamma == 1 and cfg.x0.tolist() == [-0.5, 0.5]
    assert cfg.flows == () and cfg.checks == () and cfg.seed == 0


def test_digest_ignores_output_dir_but_not_seed():
    a = parse_config(dict(BASE), output_dir="/tmp/a")
    b = parse_config(dict(BASE), output_dir="/tmp/b")
    c = parse_config(dict(BASE), seed=3)
    assert a.digest == b.digest != c.digest
    assert digest_of({"a": 1, "b": 2}) == digest_of({"b": 2, "a": 1})


@pytest.mark.parametrize("patch", [
    {"gamma": 0},
    {"gamma": [0, 0]},
    {"x0": []},
    {"p0": [0.1]},
    {"x0": ["a", 1]},
    {"flows": [{"m": 9, "t": 0.1}]},
    {"flows": [{"m": 2, "t": 0.1}, {"m": 2, "t": 0.2}]},
    {"flows": [{"m": 2, "t": 0.1, "rtol": 1e-3}]},
    {"flows": [{"m": 2}]},
    {"checks": ["no_such_check"]},
    {"checks": [{"name": "bilinear", "params": {"bogus": 1}}]},
    {"checks": ["bilinear", "bilinear"]},
    {"mu": [0]},
    {"eps_coll": -1},
    {"tau_samples": 1},
    {"seed": 1.5},
    {"extra": 1},
])
def test_invalid_configs(patch):
    doc = dict(BASE)
    doc.update(patch)
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_missing_key_and_bad_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"gamma": 1, "x0": [0]})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
