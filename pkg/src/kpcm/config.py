"""Run configuration: loading, validation and digest.

A run is described by one JSON document::

    {
      "gamma": [0, 1],                 # complex numbers as [re, im] or plain reals
      "x0": [[-0.8, 0.3], [0.1, 1.4]],
      "p0": [[0.2, -0.1], [-0.1, 0.15]],
      "flows": [{"m": 2, "t": 0.5, "rtol": 1e-10}],
      "checks": ["comm_defect", {"name": "bilinear", "params": {"draws": 20}}],
      "mu": [20, 40],
      "seed": 0,
      "output_dir": "kpcm_out"
    }

Only ``gamma``, ``x0`` and ``p0`` are required.  Optional extras:
``eps_coll`` (collision guard), ``tau_samples`` and ``tau_tracking_steps``
(rows and pole tracking steps per flow in tau-compare), ``tau_tol`` and
``canonical_tol`` (row tolerances of tau-compare and backlund).
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checks import REGISTRY, as_complex, merged_params
from .cm_core import EPS_COLL
from .flows import K_MAX

KNOWN_KEYS = {"gamma", "x0", "p0", "flows", "checks", "mu", "seed", "output_dir", "eps_coll",
              "tau_samples", "tau_tracking_steps", "tau_tol", "canonical_tol"}


class ConfigError(ValueError):
    """The configuration violates a RunConfig invariant."""


@dataclass(frozen=True)
class FlowSpec:
    m: int
    t: float
    rtol: float = 1e-10


@dataclass(frozen=True)
class CheckRequest:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    gamma: complex
    x0: np.ndarray
    p0: np.ndarray
    flows: tuple
    checks: tuple
    mu: tuple
    seed: int
    output_dir: Path
    eps_coll: float
    tau_samples: int
    tau_tracking_steps: int
    tau_tol: float
    canonical_tol: float
    digest: str
    figures: bool = True


def _complex_list(raw, key):
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{key} must be a non-empty list")
    try:
        return np.array([as_complex(v) for v in raw], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _number(raw, key, kind=float):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{key} must be a number")
    if kind is int and int(raw) != raw:
        raise ConfigError(f"{key} must be an integer")
    val = kind(raw)
    if not np.isfinite(val):
        raise ConfigError(f"{key} must be finite")
    return val


def digest_of(doc: dict) -> str:
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def parse_config(doc: dict, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    """Validate a decoded JSON document; command line overrides win over the file."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    doc = copy.deepcopy(doc)
    unknown = set(doc) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if seed is not None:
        doc["seed"] = seed
    if output_dir is not None:
        doc["output_dir"] = output_dir
    for key in ("gamma", "x0", "p0"):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")

    try:
        gamma = as_complex(doc["gamma"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"gamma: {exc}") from None
    if gamma == 0 or not np.isfinite(gamma):
        raise ConfigError("gamma must be finite and nonzero")
    x0 = _complex_list(doc["x0"], "x0")
    p0 = _complex_list(doc["p0"], "p0")
    if x0.size != p0.size:
        raise ConfigError(f"x0 and p0 differ in length ({x0.size} vs {p0.size})")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(p0))):
        raise ConfigError("x0 and p0 must be finite")

    flows = []
    for i, f in enumerate(doc.get("flows", [])):
        if not isinstance(f, dict) or not {"m", "t"} <= set(f) or set(f) - {"m", "t", "rtol"}:
            raise ConfigError(f"flows[{i}] must be an object with keys m, t and optional rtol")
        m = _number(f["m"], f"flows[{i}].m", int)
        if not 1 <= m <= K_MAX:
            raise ConfigError(f"flows[{i}].m must lie in 1..{K_MAX}")
        rtol = _number(f.get("rtol", 1e-10), f"flows[{i}].rtol")
        if not 1e-13 <= rtol <= 1e-6:
            raise ConfigError(f"flows[{i}].rtol must lie in [1e-13, 1e-6]")
        flows.append(FlowSpec(m, _number(f["t"], f"flows[{i}].t"), rtol))
    if len({f.m for f in flows}) != len(flows):
        raise ConfigError("flow indices must be distinct")

    checks = []
    for i, c in enumerate(doc.get("checks", [])):
        if isinstance(c, str):
            c = {"name": c}
        if not isinstance(c, dict) or "name" not in c or set(c) - {"name", "params"}:
            raise ConfigError(f"checks[{i}] must be a name or an object with name and params")
        if c["name"] not in REGISTRY:
            raise ConfigError(f"unknown check {c['name']!r}; registered: {', '.join(sorted(REGISTRY))}")
        params = c.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"checks[{i}].params must be an object")
        try:
            merged_params(c["name"], params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks.append(CheckRequest(c["name"], params))
    if len({c.name for c in checks}) != len(checks):
        raise ConfigError("each check may be listed once")

    mu = ()
    if "mu" in doc:
        mu = tuple(_complex_list(doc["mu"], "mu"))
        if any(m == 0 for m in mu):
            raise ConfigError("mu values must be nonzero")

    eps = _number(doc.get("eps_coll", EPS_COLL), "eps_coll")
    if eps <= 0:
        raise ConfigError("eps_coll must be positive")
    samples = _number(doc.get("tau_samples", 11), "tau_samples", int)
    steps = _number(doc.get("tau_tracking_steps", 4), "tau_tracking_steps", int)
    if samples < 2 or steps < 1:
        raise ConfigError("tau_samples must be >= 2 and tau_tracking_steps >= 1")
    return RunConfig(
        gamma=gamma, x0=x0, p0=p0, flows=tuple(flows), checks=tuple(checks), mu=mu,
        seed=_number(doc.get("seed", 0), "seed", int),
        output_dir=Path(doc.get("output_dir", "kpcm_out")),
        eps_coll=eps, tau_samples=samples, tau_tracking_steps=steps,
        tau_tol=_number(doc.get("tau_tol", 1e-7), "tau_tol"),
        canonical_tol=_number(doc.get("canonical_tol", 1e-10), "canonical_tol"),
        # the output location does not change results, so it stays out of the digest
        digest=digest_of({k: v for k, v in doc.items() if k != "output_dir"}),
    )


def load_config(path, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc, seed, output_dir)
