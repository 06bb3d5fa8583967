"""Registered invariant checks over seeded random ensembles.

Every check is a function ``run(rng, params) -> list[Measurement]``.  A
measurement names the tolerance key it is judged against; the runner looks
that key up in the merged parameters (registry defaults overridden by the
caller), so no check body contains a tolerance.  A row passes iff
``defect <= tolerance``.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import backlund as bk
from . import cm_core as cm
from . import kp_tau as kt
from .ensemble import random_points, random_state, rng_for
from .errors import KPCMError
from .flows import conserved_drift, evolve_multi, integrate
from .linalg import (char_poly, det, eigenvalues, lu_solve, mat_exp, norm_inf,
                     poly_roots, polish_eigenvalues)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Measurement:
    label: str
    defect: float
    tol_key: str = "tol"
    samples: int = 1


@dataclass(frozen=True)
class CheckSpec:
    name: str
    run: Callable
    defaults: dict
    summary: str


@dataclass(frozen=True)
class CheckReport:
    check: str
    row: int
    label: str
    status: str
    defect: float
    tolerance: float
    samples: int
    wall_time: float
    provenance: str
    error: str = ""

    @property
    def passed(self):
        return self.status == "pass"


REGISTRY: dict[str, CheckSpec] = {}


def register(name, summary, **defaults):
    def deco(fn):
        REGISTRY[name] = CheckSpec(name, fn, defaults, summary)
        return fn
    return deco


def as_complex(v) -> complex:
    """A JSON scalar or a two-element [re, im] list as a complex number."""
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex values are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, bool) or not isinstance(v, (int, float, complex)):
        raise ValueError(f"not a number: {v!r}")
    return complex(v)


def merged_params(name: str, overrides: dict | None = None) -> dict:
    spec = REGISTRY[name]
    params = dict(spec.defaults)
    for k, v in (overrides or {}).items():
        if k not in params:
            raise ValueError(f"check {name!r} has no parameter {k!r}")
        params[k] = v
    return params


def run_check(name: str, seed: int, overrides: dict | None = None, provenance: str = "") -> list[CheckReport]:
    """Run one registered check and turn its measurements into report rows."""
    spec = REGISTRY[name]
    params = merged_params(name, overrides)
    rng = rng_for(seed, name)
    t0 = time.perf_counter()
    try:
        rows = spec.run(rng, params)
        err = ""
    except (KPCMError, ArithmeticError) as exc:
        log.warning("check %s raised %s: %s", name, type(exc).__name__, exc)
        rows = [Measurement("error", float("inf"))]
        err = f"{type(exc).__name__}: {exc}"
    wall = time.perf_counter() - t0
    out = []
    for i, m in enumerate(rows):
        tol = float(params[m.tol_key])
        ok = bool(np.isfinite(m.defect)) and m.defect <= tol
        out.append(CheckReport(name, i, m.label, "pass" if ok else "fail", float(m.defect), tol,
                               m.samples, wall, provenance, err))
    return out


# ---------------------------------------------------------------- ensembles

def _gammas(p):
    return [as_complex(g) for g in p["gammas"]]


def _ensemble(rng, p, **kw):
    """``p['states']`` states cycling through N in [n_min, n_max] and the gammas."""
    gs = _gammas(p)
    ns = list(range(p["n_min"], p["n_max"] + 1))
    for i in range(p["states"]):
        yield random_state(rng, ns[i % len(ns)], gs[i % len(gs)], **kw)


def _grid(rng, p, **kw):
    """``p['reps']`` states for every (gamma, N) with N in [n_min, n_max]."""
    for g in _gammas(p):
        for n in range(p["n_min"], p["n_max"] + 1):
            for _ in range(p["reps"]):
                yield random_state(rng, n, g, **kw)


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def configuration_distance(xa, xb, gamma, pa=None, pb=None) -> float:
    """Distance between two particle sets, unordered and with positions modulo i pi / gamma.

    Complex trajectories can wind around each other and through the period,
    so flows that agree as maps of configurations need not agree label by
    label.  With momenta given, each pairing costs the larger of the
    position and momentum mismatch.
    """
    xa, xb = np.asarray(xa, dtype=complex), np.asarray(xb, dtype=complex)
    period = 1j * np.pi / complex(gamma)
    nu = (xa[:, None] - xb[None, :]) / period
    cost = np.abs(period) * np.abs(nu - np.round(nu.real))
    if pa is not None:
        cost = np.maximum(cost, np.abs(np.asarray(pa)[:, None] - np.asarray(pb)[None, :]))
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def _matched_distance(a, b):
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


ENSEMBLE = dict(states=200, n_min=2, n_max=8, gammas=[1, 0.5, [0, 2]])


# ---------------------------------------------------------------- linear algebra

def _well_conditioned(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A + 2 * np.sqrt(n) * np.eye(n)


@register("linalg", "LU/det, characteristic roots and matrix exponential identities",
          tol_det=1e-10, tol_roots=1e-8, tol_exp_group=1e-10, tol_exp_commuting=1e-9,
          states=40, n_max=8)
def _check_linalg(rng, p):
    d_det = d_roots = d_grp = d_comm = 0.0
    for i in range(p["states"]):
        n = 1 + i % p["n_max"]
        A = _well_conditioned(rng, n)
        Ainv = np.column_stack([lu_solve(A, e) for e in np.eye(n)])
        d_det = max(d_det, abs(det(A) * det(Ainv) - 1))
        # normal matrix with known spectrum
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        lam = random_points(rng, n, 1.0, spread=1.0)
        N = Q @ np.diag(lam) @ Q.conj().T
        roots = polish_eigenvalues(N, poly_roots(char_poly(N)))
        d_roots = max(d_roots, _matched_distance(roots, lam))
        B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        B *= rng.uniform(0.5, 10.0) / norm_inf(B)
        d_grp = max(d_grp, norm_inf(mat_exp(B) @ mat_exp(-B) - np.eye(n)))
        C = rng.normal(size=(n, n)) / np.sqrt(n)
        X = 0.5 * C + 0.2 * C @ C
        Y = -0.3 * C + 0.1 * C @ C @ C
        ref = mat_exp(X + Y)
        d_comm = max(d_comm, norm_inf(mat_exp(X) @ mat_exp(Y) - ref) / max(1.0, norm_inf(ref)))
    k = p["states"]
    return [Measurement("det_inverse", d_det, "tol_det", k),
            Measurement("char_roots", d_roots, "tol_roots", k),
            Measurement("exp_group", d_grp, "tol_exp_group", k),
            Measurement("exp_commuting", d_comm, "tol_exp_commuting", k)]


# ---------------------------------------------------------------- phase space identities

@register("comm_defect", "[L, W] = 2 gamma (W^1/2 E W^1/2 - W), relative to ||L|| ||W||",
          tol=1e-12, **ENSEMBLE)
def _check_comm(rng, p):
    worst = 0.0
    for s in _ensemble(rng, p):
        scale = norm_inf(cm.build_lax(s)) * norm_inf(cm.build_w(s))
        worst = max(worst, norm_inf(cm.comm_defect(s)) / scale)
    return [Measurement("commutator", worst, samples=p["states"])]


@register("lax_defect", "dL/dt_2 + [L, M] = 0, relative to ||L|| ||M||", tol=1e-10, **ENSEMBLE)
def _check_lax(rng, p):
    worst = 0.0
    for s in _ensemble(rng, p):
        scale = norm_inf(cm.build_lax(s)) * norm_inf(cm.build_m(s))
        worst = max(worst, cm.lax_defect(s) / scale)
    return [Measurement("lax_pair", worst, samples=p["states"])]


def _decomposition_offsets(s):
    g, n = s.gamma, s.n
    return {2: n * g ** 2 / 3,
            3: g ** 2 * cm.hamiltonian_h(s, 1),
            4: 2 * g ** 2 * cm.hamiltonian_h(s, 2) + n * g ** 4 / 5}


@register("hamiltonian_decomposition", "cH_m - H_m for m = 2, 3, 4 against closed forms",
          tol=1e-11, states=60, n_min=1, n_max=8, gammas=[1, 0.5, [0, 2]])
def _check_decomposition(rng, p):
    worst = {2: 0.0, 3: 0.0, 4: 0.0}
    for s in _ensemble(rng, p):
        off = _decomposition_offsets(s)
        for m in worst:
            d = cm.hamiltonian_cal(s, m) - cm.hamiltonian_h(s, m) - off[m]
            worst[m] = max(worst[m], abs(d) / cm.hamiltonian_scale(s, m))
    return [Measurement(f"m{m}", v, samples=p["states"]) for m, v in worst.items()]


def _fd_gradients(s, m, h):
    n = s.n
    gx = np.empty(n, dtype=complex)
    gp = np.empty(n, dtype=complex)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        gx[i] = (cm.hamiltonian_cal(s.replace(x=s.x + e), m)
                 - cm.hamiltonian_cal(s.replace(x=s.x - e), m)) / (2 * h)
        gp[i] = (cm.hamiltonian_cal(s.replace(p=s.p + e), m)
                 - cm.hamiltonian_cal(s.replace(p=s.p - e), m)) / (2 * h)
    return gx, gp


def _componentwise(fd, an):
    # relative per component, absolute below unit size
    return float(np.max(np.abs(fd - an) / np.maximum(1.0, np.abs(an))))


@register("gradients", "grad_x, grad_p against central differences of cH_m, m <= 5",
          tol=1e-5, states=24, n_min=1, n_max=6, gammas=[1, 0.5, [0, 2]], m_max=5, step=1e-6)
def _check_gradients(rng, p):
    dx = dp = 0.0
    for s in _ensemble(rng, p):
        for m in range(1, p["m_max"] + 1):
            gx, gp = _fd_gradients(s, m, p["step"])
            dx = max(dx, _componentwise(gx, cm.grad_x(s, m)))
            dp = max(dp, _componentwise(gp, cm.grad_p(s, m)))
    return [Measurement("grad_x", dx, samples=p["states"]),
            Measurement("grad_p", dp, samples=p["states"])]


@register("appendix_hamiltonians", "explicit H_1..H_4 sums against traces of L",
          tol=1e-10, states=40, n_min=1, n_max=6, gammas=[1, 0.5, [0, 2]])
def _check_appendix_h(rng, p):
    d_low = d_h4 = 0.0
    for s in _ensemble(rng, p):
        a = cm.appendix_hamiltonians(s)
        for k in (1, 2, 3):
            d_low = max(d_low, abs(a[k - 1] - cm.hamiltonian_h(s, k)) / cm.hamiltonian_scale(s, k))
        # H_4 differs from tr L^4 by a constant: compare two states of the same N and gamma
        s2 = random_state(rng, s.n, s.gamma)
        a2 = cm.appendix_hamiltonians(s2)
        c1 = a[3] - cm.hamiltonian_h(s, 4)
        c2 = a2[3] - cm.hamiltonian_h(s2, 4)
        d_h4 = max(d_h4, abs(c1 - c2) / max(cm.hamiltonian_scale(s, 4), cm.hamiltonian_scale(s2, 4)))
    return [Measurement("h1_h3", d_low, samples=p["states"]),
            Measurement("h4_constant", d_h4, samples=p["states"])]


def _rational_state(rng, n, gamma, box=2.0, sep=0.5, p_scale=1.0):
    """Positions drawn directly in x (not gamma x), so the state has a gamma -> 0 limit."""
    for _ in range(10_000):
        x = rng.uniform(-box, box, n) + 1j * rng.uniform(-box, box, n)
        d = np.abs(x[:, None] - x[None, :])
        np.fill_diagonal(d, np.inf)
        if d.min() >= sep:
            break
    p = (rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)) * p_scale
    return x, p


@register("rational_limit", "|cH_m - H_m| ~ gamma^2 as gamma -> 0",
          tol=0.2, states=12, n_min=2, n_max=6, small_gammas=[1e-2, 1e-3])
def _check_rational(rng, p):
    g1, g2 = (float(g) for g in p["small_gammas"])
    worst = {2: 0.0, 3: 0.0, 4: 0.0}
    ns = list(range(p["n_min"], p["n_max"] + 1))
    for i in range(p["states"]):
        x, mom = _rational_state(rng, ns[i % len(ns)], g1)
        for m in worst:
            d = [abs(cm.hamiltonian_cal(cm.PhaseState(g, x, mom), m)
                     - cm.hamiltonian_h(cm.PhaseState(g, x, mom), m)) for g in (g1, g2)]
            slope = np.log(d[0] / d[1]) / np.log(g1 / g2)
            worst[m] = max(worst[m], abs(slope - 2))
    return [Measurement(f"m{m}", v, samples=p["states"]) for m, v in worst.items()]


# ---------------------------------------------------------------- flows

FLOW_ENSEMBLE = dict(gammas=[1, [0, 1]], n_min=2, n_max=6, n_step=2, reps=1, rtol=1e-10)


def _flow_states(rng, p):
    for g in _gammas(p):
        for n in range(p["n_min"], p["n_max"] + 1, p["n_step"]):
            for _ in range(p["reps"]):
                yield random_state(rng, n, g)


@register("isospectral", "conservation of H_1..H_N and of the spectrum of L along flows",
          tol_drift=100.0, tol_spectrum=1e-7, flows=[[2, 1.0], [3, 1.0], [4, 1.0]], **FLOW_ENSEMBLE)
def _check_isospectral(rng, p):
    drift = spec = 0.0
    count = 0
    for s in _flow_states(rng, p):
        ev0 = eigenvalues(cm.build_lax(s))
        scale = max(abs(h) for h in (cm.hamiltonian_h(s, k) for k in range(1, s.n + 1)))
        for m, t in p["flows"]:
            traj = integrate(s, int(m), float(t), p["rtol"])
            drift = max(drift, conserved_drift(traj, s.n) / (p["rtol"] * max(1.0, scale)))
            spec = max(spec, _matched_distance(eigenvalues(cm.build_lax(traj.final)), ev0))
            count += 1
    return [Measurement("drift_over_rtol_scale", drift, "tol_drift", count),
            Measurement("spectrum", spec, "tol_spectrum", count)]


@register("flow_properties", "commutativity, time reversal and the m=2 equation of motion",
          tol_commute=1e-7, tol_reversal=1e-9, tol_accel=1e-5, t_commute=0.2, t_reverse=0.5,
          accel_step=1e-3, gammas=[1, [0, 1]], n_min=2, n_max=4, reps=2, rtol=1e-10)
def _check_flow_props(rng, p):
    d_c = d_r = d_a = 0.0
    count = 0
    for s in _grid(rng, p):
        tc = p["t_commute"]
        times = {2: tc * rng.uniform(-1, 1), 3: tc * rng.uniform(-1, 1), 4: tc * rng.uniform(-1, 1)}
        a = evolve_multi(s, times, p["rtol"])
        b = evolve_multi(s, times, p["rtol"], order=[4, 2, 3])
        d_c = max(d_c, configuration_distance(a.x, b.x, s.gamma, a.p, b.p))
        tr = p["t_reverse"]
        back = integrate(integrate(s, 2, tr, p["rtol"]).final, 2, -tr, p["rtol"]).final
        d_r = max(d_r, float(max(np.max(np.abs(back.x - s.x)), np.max(np.abs(back.p - s.p)))))
        h = p["accel_step"]
        xs = [integrate(s, 2, k * h, p["rtol"] / 10).final.x if k else s.x for k in (-2, -1, 0, 1, 2)]
        fd = (-xs[0] + 16 * xs[1] - 30 * xs[2] + 16 * xs[3] - xs[4]) / (12 * h ** 2)
        d_a = max(d_a, _rel(fd, cm.eom_accel(s)))
        count += 1
    return [Measurement("commutativity", d_c, "tol_commute", count),
            Measurement("time_reversal", d_r, "tol_reversal", count),
            Measurement("m2_acceleration", d_a, "tol_accel", count)]


# ---------------------------------------------------------------- tau-function and poles

@register("pole_oracle", "determinant-formula poles against integrated flows",
          tol=1e-7, tol_shift=1e-12, t_max=[[1, 0.5], [2, 0.5], [3, 0.2], [4, 0.2]],
          budget=8.0, tracking_steps=20, gammas=[1, [0, 1], 0.5], n_min=1, n_max=6, reps=1,
          rtol=1e-12)
def _check_pole_oracle(rng, p):
    worst = {}
    count = 0
    for s in _grid(rng, p):
        fm = kt.FlowMatrixSet.from_state(s)
        for m, tmax in p["t_max"]:
            m = int(m)
            t = kt.conditioned_time(fm, m, float(tmax) * rng.choice([-1, 1]), p["budget"])
            xi = integrate(s, m, t, p["rtol"]).final.x
            xo = kt.poles_from_times(fm, s, {m: t}, steps=p["tracking_steps"])
            worst[m] = max(worst.get(m, 0.0), float(np.max(np.abs(xi - xo))))
        count += 1
    return [Measurement(f"m{m}", v, "tol_shift" if m == 1 else "tol", count)
            for m, v in sorted(worst.items())]


TAU_ENSEMBLE = dict(gammas=[1, [0, 1], 0.5], n_min=1, n_max=5, times=[[2, 0.1], [3, 0.05]])


def _times(p):
    return {int(m): float(t) for m, t in p["times"]}


def _evolved(rng, p, n, g):
    s0 = random_state(rng, n, g)
    fm = kt.FlowMatrixSet.from_state(s0)
    return fm, kt.evolved_state(fm, _times(p))


def _spectator_w(rng, s, sep=0.3):
    """A random w = exp(2 u) kept away from the poles of ``s``."""
    u0 = s.gamma * s.x
    for _ in range(1000):
        u = rng.uniform(-1.5, 1.5) + 1j * rng.uniform(0, np.pi)
        if np.min(np.abs(np.sinh(u - u0))) >= sep:
            return complex(np.exp(2 * u))
    raise RuntimeError("no evaluation point away from the poles")


def _spectral_param(rng, s, radius, sep=0.5):
    """Random lambda with lambda +- gamma away from the spectrum of L."""
    ev = eigenvalues(cm.build_lax(s))
    for _ in range(1000):
        z = complex(random_points(rng, 1, radius)[0])
        if np.min(np.abs(np.concatenate([z + s.gamma - ev, z - s.gamma - ev]))) >= sep:
            return z
    raise RuntimeError("no spectral parameter away from the spectrum")


@register("tau_consistency", "root product, determinant and shifted-time reconstructions of tau",
          tol_det=1e-12, tol_series=1e-6, tol_u=1e-6, draws=20, shift_radius=12.0,
          series_terms=12, fd_step=3e-3, **TAU_ENSEMBLE)
def _check_tau(rng, p):
    d_det = d_ser = d_u = 0.0
    count = 0
    for g in _gammas(p):
        for n in range(p["n_min"], p["n_max"] + 1):
            s0 = random_state(rng, n, g)
            fm = kt.FlowMatrixSet.from_state(s0)
            for _ in range(p["draws"]):
                w = _spectator_w(rng, s0)
                a, b = kt.tau_det(fm, {}, w), kt.tau_from_roots(s0, w)
                d_det = max(d_det, abs(a - b) / max(1.0, float(np.prod(np.abs(w) + np.abs(s0.w)))))
            fm, st = _evolved(rng, p, n, g)
            for _ in range(3):
                w = _spectator_w(rng, st)
                lam = _spectral_param(rng, st, p["shift_radius"])
                mu = _spectral_param(rng, st, p["shift_radius"])
                exact = kt.tau_shift(fm, _times(p), w, lam, mu, state=st)
                approx = kt.tau_shift_series(fm, _times(p), w, lam, mu, p["series_terms"])
                d_ser = max(d_ser, abs(exact - approx) / abs(exact))
                # u = d^2/dx^2 log tau with w = exp(2 gamma x), five-point stencil
                xq = np.log(w) / (2 * g)
                h = p["fd_step"]
                lt = np.array([np.log(kt.tau_det(fm, _times(p), np.exp(2 * g * (xq + k * h))))
                               for k in (-2, -1, 0, 1, 2)])
                lt = lt.real + 1j * np.unwrap(lt.imag)
                fd = (-lt[0] + 16 * lt[1] - 30 * lt[2] + 16 * lt[3] - lt[4]) / (12 * h ** 2)
                u = kt.u1_eval(st, xq)
                d_u = max(d_u, abs(fd - u) / max(1.0, abs(u)))
                count += 1
    return [Measurement("det_vs_roots", d_det, "tol_det", count),
            Measurement("shift_series", d_ser, "tol_series", count),
            Measurement("u_log_tau", d_u, "tol_u", count)]


@register("bilinear", "bilinear identity for double-shifted tau-functions",
          tol=1e-10, draws=100, shift_radius=3.0, **TAU_ENSEMBLE)
def _check_bilinear(rng, p):
    worst = 0.0
    count = 0
    gs = _gammas(p)
    for n in range(p["n_min"], p["n_max"] + 1):
        st = None
        for i in range(p["draws"]):
            if i % 10 == 0:
                _, st = _evolved(rng, p, n, gs[(i // 10) % len(gs)])
            w = _spectator_w(rng, st)
            lam = _spectral_param(rng, st, p["shift_radius"])
            mu = _spectral_param(rng, st, p["shift_radius"])
            res, scale = kt.bilinear_terms(st, w, lam, mu)
            worst = max(worst, abs(res) / scale)
            count += 1
    return [Measurement("residual", worst, samples=count)]


@register("residues", "contour and finite-difference forms of the pole velocities",
          tol_contour=1e-9, tol_identity=1e-7, quad_nodes=512, radius_margins=[2.0, 6.0],
          contour_m_max=3, contour_n_max=4, identity_m_max=4, identity_step=1e-6,
          gammas=[1, [0, 1], 0.5], n_min=1, n_max=5)
def _check_residues(rng, p):
    d_c = d_i = 0.0
    count = 0
    for g in _gammas(p):
        for n in range(p["n_min"], p["n_max"] + 1):
            s = random_state(rng, n, g)
            if n <= p["contour_n_max"]:
                L = cm.build_lax(s)
                bound = max(np.max(np.abs(eigenvalues(L + g * np.eye(n)))),
                            np.max(np.abs(eigenvalues(L - g * np.eye(n)))))
                for margin in p["radius_margins"]:
                    for m in range(1, p["contour_m_max"] + 1):
                        val = kt.contour_residue(s, m, bound + margin, p["quad_nodes"])
                        d_c = max(d_c, _rel(val, cm.grad_p(s, m)))
            fm = kt.FlowMatrixSet.from_state(s)
            for m in range(1, p["identity_m_max"] + 1):
                d_i = max(d_i, kt.residue_identity_defect(fm, s, m, p["identity_step"]))
            count += 1
    return [Measurement("contour", d_c, "tol_contour", count),
            Measurement("identity", d_i, "tol_identity", count)]


@register("wave_functions", "t_2 evolution of the wave and adjoint wave coefficients",
          tol=1e-6, step=1e-4, gammas=[1, [0, 1], 0.5], n_min=1, n_max=5, reps=1, rtol=1e-13)
def _check_wave(rng, p):
    d_w = d_a = 0.0
    count = 0
    for s in _grid(rng, p):
        z = _spectral_param(rng, s, 3.0)
        d_w = max(d_w, kt.wave_evolution_defect(s, z, p["step"], False, p["rtol"]))
        d_a = max(d_a, kt.wave_evolution_defect(s, z, p["step"], True, p["rtol"]))
        count += 1
    return [Measurement("wave", d_w, samples=count), Measurement("adjoint", d_a, samples=count)]


@register("rank_one", "X Z - Y X has rank one", tol=1e-12, **ENSEMBLE)
def _check_rank_one(rng, p):
    worst = max(kt.rank_one_defect(s) for s in _ensemble(rng, p))
    return [Measurement("minors", worst, samples=p["states"])]


@register("kp_equation", "KP residual of u from the determinant formula, and its h^2 decay",
          tol=1e-4, tol_order=1 / 3, step=1e-3, gammas=[1, [0, 1]], n_min=1, n_max=3, reps=6,
          probe_offset=2.5, base_times=[[], [[2, 0.05], [3, -0.03]]], p_scale=0.3, p_floor=0.1,
          box=2.0, sep=1.5)
def _check_kp(rng, p):
    worst = ratio = 0.0
    count = 0
    h = p["step"]
    for s in _grid(rng, p, p_scale=p["p_scale"], p_floor=p["p_floor"], box=p["box"], sep=p["sep"]):
        fm = kt.FlowMatrixSet.from_state(s)
        xq = (p["probe_offset"] + 1j * rng.uniform(0, np.pi)) / s.gamma
        for base in p["base_times"]:
            bt = {int(m): float(t) for m, t in base}
            terms = kt.kp_terms(fm, s, bt, xq, h)
            r1 = abs(terms.sum())
            r2 = abs(kt.kp_residual(fm, s, bt, xq, h / 2))
            worst = max(worst, r1 / float(np.max(np.abs(terms))))
            ratio = max(ratio, r2 / r1)
            count += 1
    return [Measurement("residual", worst, "tol", count),
            Measurement("halving_ratio", ratio, "tol_order", count)]


# ---------------------------------------------------------------- Backlund transformation

BK_ENSEMBLE = dict(gammas=[1, [0, 1], 0.5], n_min=1, n_max=5, p_scale=1.0, p_floor=0.5)


def _bk_states(rng, p, total):
    gs = _gammas(p)
    ns = list(range(p["n_min"], p["n_max"] + 1))
    for i in range(total):
        yield random_state(rng, ns[i % len(ns)], gs[(i // len(ns)) % len(gs)],
                           p_scale=p["p_scale"], p_floor=p["p_floor"])


@register("backlund_canonical", "the Backlund pair derives from the generating function",
          tol=1e-10, pairs=50, mu_radius=10.0, **BK_ENSEMBLE)
def _check_bk_canonical(rng, p):
    worst = 0.0
    for s in _bk_states(rng, p, p["pairs"]):
        mu = complex(random_points(rng, 1, p["mu_radius"], spread=2.0)[0])
        worst = max(worst, bk.canonical_defect(bk.backlund_solve(s, mu), relative=True))
    return [Measurement("generating_function", worst, samples=p["pairs"])]


@register("backlund_expansion", "order of the large-mu expansion of the Backlund shift",
          tol=0.3, mu_moduli=[10.0, 20.0, 40.0], orders=[1, 2, 3], reps=4, **BK_ENSEMBLE)
def _check_bk_expansion(rng, p):
    total = p["reps"] * len(p["gammas"]) * (p["n_max"] - p["n_min"] + 1)
    worst = {int(k): 0.0 for k in p["orders"]}
    for s in _bk_states(rng, p, total):
        phase = np.exp(2j * np.pi * rng.uniform())
        mus = [r * phase for r in p["mu_moduli"]]
        pairs = [bk.backlund_solve(s, mu) for mu in mus]
        table = bk.schur_table(s)
        for k in worst:
            d = [float(np.max(np.abs(pr.target_y - bk.series_y(s, mu, k, table))))
                 for mu, pr in zip(mus, pairs)]
            worst[k] = max(worst[k], abs(bk.fit_exponent(mus, d) + (k + 1)))
    return [Measurement(f"K{k}", v, samples=total) for k, v in worst.items()]


@register("backlund_b6", "subtracted equation from the forward and backward shifts",
          tol=1e-8, states=30, mu_radius=20.0, **BK_ENSEMBLE)
def _check_bk_b6(rng, p):
    worst = 0.0
    for s in _bk_states(rng, p, p["states"]):
        mu = complex(random_points(rng, 1, p["mu_radius"])[0])
        worst = max(worst, bk.b6_defect(s, mu))
    return [Measurement("subtracted", worst, samples=p["states"])]


@register("appendix_flows", "explicit t_3, t_4 velocities against grad_p",
          tol=1e-10, states=40, **BK_ENSEMBLE)
def _check_appendix_flows(rng, p):
    d3 = d4 = 0.0
    for s in _bk_states(rng, p, p["states"]):
        a, b = bk.appendix_flow_check(s)
        d3 = max(d3, a / max(1.0, float(np.max(np.abs(cm.grad_p(s, 3))))))
        d4 = max(d4, b / max(1.0, float(np.max(np.abs(cm.grad_p(s, 4))))))
    return [Measurement("t3", d3, samples=p["states"]), Measurement("t4", d4, samples=p["states"])]


@register("schur_exact", "h_1 x = -1 and h_2 x = p exactly", tol=0.0, states=20, **BK_ENSEMBLE)
def _check_schur(rng, p):
    d1 = d2 = 0.0
    for s in _bk_states(rng, p, p["states"]):
        t = bk.schur_table(s)
        d1 = max(d1, float(np.max(np.abs(t.action(1) + 1))))
        d2 = max(d2, float(np.max(np.abs(t.action(2) - s.p))))
    return [Measurement("h1", d1, samples=p["states"]), Measurement("h2", d2, samples=p["states"])]


DEFAULT_SUITE = sorted(REGISTRY)
