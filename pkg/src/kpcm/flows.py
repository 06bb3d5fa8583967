"""Hamiltonian flows of the hierarchy and conservation monitoring.

The m-th flow is  dx/dt_m = dcH_m/dp,  dp/dt_m = -dcH_m/dx.  Flows are
integrated with classical RK4 and step-doubling error control; every
accepted step is kept so that finite-difference checks downstream have
dense samples to work with.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .cm_core import PhaseState, flow_rhs, grad_p, grad_x, hamiltonian_h
from .errors import PoleCollision, StepUnderflow

log = logging.getLogger(__name__)

K_MAX = 8
H_MIN = 1e-12
ROUNDOFF_FLOOR = 8 * np.finfo(float).eps


class HierarchyTimes(dict):
    """Finite map ``flow index m -> time t_m``.

    At most eight entries, keys positive integers, values finite reals.
    """

    def __init__(self, entries=None, **kw):
        super().__init__()
        items = dict(entries or {}, **kw)
        if len(items) > K_MAX:
            raise ValueError(f"at most {K_MAX} hierarchical times are supported")
        for m, t in items.items():
            m = int(m)
            if m < 1:
                raise ValueError(f"flow index must be >= 1, got {m}")
            t = float(t)
            if not np.isfinite(t):
                raise ValueError(f"time t_{m} is not finite")
            dict.__setitem__(self, m, t)

    @classmethod
    def coerce(cls, times):
        return times if isinstance(times, cls) else cls(times)

    def __setitem__(self, key, value):
        raise TypeError("HierarchyTimes is immutable; build a new one")

    def shifted(self, m, dt):
        """Copy with ``t_m`` moved by ``dt`` (entry created if absent)."""
        out = dict(self)
        out[m] = out.get(m, 0.0) + dt
        return HierarchyTimes(out)

    def __hash__(self):
        return hash(tuple(sorted(self.items())))


@dataclass
class Trajectory:
    """Accepted samples of one flow.

    Times are monotone in the direction of integration (increasing for a
    forward run, decreasing for a backward one).
    """

    m: int
    t: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def append(self, t, state):
        self.t.append(float(t))
        self.states.append(state)

    @property
    def final(self):
        return self.states[-1]

    def __len__(self):
        return len(self.t)

    def positions(self):
        return np.array([s.x for s in self.states])

    def momenta(self):
        return np.array([s.p for s in self.states])


def flow_derivative(s: PhaseState, m: int):
    """(dx/dt_m, dp/dt_m) at ``s``."""
    return grad_p(s, m), -grad_x(s, m)


def _rk4(s, m, h, k1=None):
    g, eps = s.gamma, s.eps_coll

    def f(x, p):
        return flow_rhs(g, x, p, m, eps)

    x, p = s.x, s.p
    k1x, k1p = f(x, p) if k1 is None else k1
    k2x, k2p = f(x + 0.5 * h * k1x, p + 0.5 * h * k1p)
    k3x, k3p = f(x + 0.5 * h * k2x, p + 0.5 * h * k2p)
    k4x, k4p = f(x + h * k3x, p + h * k3p)
    return (x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
            p + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p))


def integrate(s0: PhaseState, m: int, t_end: float, rtol: float = 1e-10,
              h0: float | None = None) -> Trajectory:
    """Integrate the m-th flow from ``t = 0`` to ``t_end``.

    A full RK4 step is compared against two half steps; the local error
    estimate ``|y_half - y_full| / 15`` must stay below
    ``rtol * |h| * max(1, |y|, |dy/dt|)`` (error per unit time).  Including
    the rate in the scale keeps fast flows (large m or |gamma|) above the
    roundoff floor.  Accepted steps use the Richardson-extrapolated value.
    """
    if not (1e-13 <= rtol <= 1e-6):
        raise ValueError("rtol must lie in [1e-13, 1e-6]")
    s0.check_regular()
    traj = Trajectory(m)
    traj.append(0.0, s0)
    t_end = float(t_end)
    if t_end == 0.0:
        return traj
    try:
        _advance(traj, s0, m, t_end, rtol, h0)
    except (PoleCollision, StepUnderflow) as exc:
        # callers that report partial runs (the CLI) need the accepted samples
        exc.trajectory = traj
        raise
    log.debug("flow m=%d: %d steps to t=%g", m, len(traj) - 1, t_end)
    return traj


def _advance(traj, s0, m, t_end, rtol, h0):
    direction = np.sign(t_end)
    h = direction * min(abs(t_end), h0 if h0 else 0.01)
    t = 0.0
    s = s0
    while direction * (t_end - t) > 0:
        if direction * (t + h - t_end) > 0:
            h = t_end - t
        try:
            k1 = flow_rhs(s.gamma, s.x, s.p, m, s.eps_coll)
            xf, pf = _rk4(s, m, h, k1)
            mid = s.replace(*_rk4(s, m, h / 2, k1))
            xh, ph = _rk4(mid, m, h / 2)
        except PoleCollision:
            err = np.inf
        else:
            dx, dp = xh - xf, ph - pf
            scale = max(1.0, np.max(np.abs(s.x)), np.max(np.abs(s.p)),
                        np.max(np.abs(k1[0])), np.max(np.abs(k1[1])))
            err = max(np.max(np.abs(dx)), np.max(np.abs(dp))) / 15
            # never ask for less than a few ulps per step
            tol = max(rtol * abs(h), ROUNDOFF_FLOOR) * scale
        if np.isfinite(err) and err <= tol:
            cand = s.replace(xh + dx / 15, ph + dp / 15)
            if not cand.is_regular():
                cand.check_regular()
            t = t_end if abs(t_end - (t + h)) <= 1e-14 * max(1.0, abs(t_end)) else t + h
            s = cand
            traj.append(t, s)
            fac = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * (tol / err) ** 0.25))
            h = h * fac
        else:
            h = h * (0.25 if not np.isfinite(err) else max(0.1, 0.9 * (tol / err) ** 0.25))
        if abs(h) < H_MIN:
            # a step controller that keeps shrinking means we are running into a pole
            sep = s.min_separation()
            raise StepUnderflow(
                f"step size {abs(h):.2e} below {H_MIN:g} at t={t:.6g} (min |sinh| = {sep:.2e})", t=t)


def evolve_multi(s0: PhaseState, times, rtol: float = 1e-10, order=None) -> PhaseState:
    """Apply the flows listed in ``times`` one after another.

    The default order is ascending m.  Because the flows commute the order
    should not matter; ``order`` lets callers check that.
    """
    times = HierarchyTimes.coerce(times)
    seq = sorted(times) if order is None else list(order)
    if sorted(seq) != sorted(times):
        raise ValueError("order must be a permutation of the flow indices in times")
    s = s0
    for m in seq:
        s = integrate(s, m, times[m], rtol).final
    return s


def conserved_drift(traj: Trajectory, k_max: int) -> float:
    """max_{k <= k_max, samples} |H_k(sample) - H_k(first sample)|."""
    if not len(traj):
        raise ValueError("empty trajectory")
    ref = np.array([hamiltonian_h(traj.states[0], k) for k in range(1, k_max + 1)])
    worst = 0.0
    for s in traj.states[1:]:
        vals = np.array([hamiltonian_h(s, k) for k in range(1, k_max + 1)])
        worst = max(worst, float(np.max(np.abs(vals - ref))))
    return worst


def hamiltonian_values(s: PhaseState, k_max: int) -> np.ndarray:
    return np.array([hamiltonian_h(s, k) for k in range(1, k_max + 1)])
