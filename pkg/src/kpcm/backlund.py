"""Bäcklund transformation of the Calogero-Moser system and its mu-expansion.

For a spectral parameter mu the map (x, p) -> (y, pt) is defined by

    p_i  = -mu + g sum_{k!=i} coth(g x_ik) - g sum_k coth(g (x_i - y_k))
    pt_i = -mu - g sum_{k!=i} coth(g y_ik) + g sum_k coth(g (y_i - x_k))

(g = gamma).  The first set is solved for y by Newton's method, the second
then gives pt.  For large |mu| the solution is a time shift of x along the
whole hierarchy, y = exp(-D(mu)) x with D(mu) = sum_k mu^-k d_{t_k} / k,
whose first terms are expressed through the flow velocities of module
``cm_core``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .cm_core import PhaseState, c_prime, csch_coth, eom_accel, grad_p
from .errors import NewtonDivergence, PoleCollision, SingularLinearSystem
from .flows import integrate
from .linalg import lu_solve

log = logging.getLogger(__name__)

MAX_ITER = 50
NEWTON_RTOL = 1e-12


@dataclass(frozen=True)
class BacklundPair:
    source: PhaseState
    target_y: np.ndarray
    target_p: np.ndarray
    mu: complex
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True)
class SchurOperatorTable:
    """Actions h_k(d~) x_i for k = 1..order, rows indexed by k - 1.

    ``xddot`` is the second t_2-derivative used in h_4.  ``fd_defect`` is
    the largest mismatch between the analytic flow velocities and central
    differences of integrated trajectories (NaN when not computed).
    """

    order: int
    h: np.ndarray
    xddot: np.ndarray
    fd_defect: float = float("nan")

    def action(self, k: int) -> np.ndarray:
        return self.h[k - 1]


def _coth(z):
    with np.errstate(over="ignore"):
        return csch_coth(z)[1]


def _csch2(z):
    with np.errstate(over="ignore"):
        return csch_coth(z)[0] ** 2


def _self_sum(g, x):
    """g sum_{k != i} coth(g (x_i - x_k)) for every i."""
    n = x.size
    off = ~np.eye(n, dtype=bool)
    z = np.where(off, g * (x[:, None] - x[None, :]), 1.0)
    return g * np.where(off, _coth(z), 0.0).sum(axis=1)


def _cross(g, x, y):
    """Matrix z_ik = g (x_i - y_k) after checking the collision guard."""
    z = g * (x[:, None] - y[None, :])
    with np.errstate(over="ignore"):
        sep = np.abs(np.sinh(z)).min()
    return z, sep


def _check_cross(z, sep, eps):
    if not sep >= eps:
        raise PoleCollision(f"|sinh(gamma (x_i - y_k))| = {sep:.3e} below guard {eps:g}", min_sinh=sep)


def _scale(s, mu):
    return max(1.0, abs(mu), float(np.max(np.abs(s.p))), abs(s.gamma) * s.n)


def _newton(residual, jacobian, y0, tol, eps):
    """Damped Newton iteration with backtracking on ||F||_2."""
    y = np.array(y0, dtype=complex)
    try:
        f = residual(y)
    except PoleCollision as exc:
        raise NewtonDivergence("initial guess violates the collision guard", 0, np.inf) from exc
    fn = np.linalg.norm(f)
    for it in range(1, MAX_ITER + 1):
        if np.max(np.abs(f)) <= tol:
            return y, it - 1, float(np.max(np.abs(f)))
        try:
            step = lu_solve(jacobian(y), -f)
        except SingularLinearSystem as exc:
            raise NewtonDivergence("singular Jacobian", it, float(np.max(np.abs(f)))) from exc
        lam = 1.0
        for _ in range(40):
            cand = y + lam * step
            try:
                fc = residual(cand)
            except PoleCollision:
                fc = None
            if fc is not None and np.all(np.isfinite(fc)) and np.linalg.norm(fc) < fn * (1 - 1e-4 * lam) + tol:
                break
            lam *= 0.5
        else:
            raise NewtonDivergence("line search failed", it, float(np.max(np.abs(f))))
        y, f = cand, fc
        fn = np.linalg.norm(f)
    if np.max(np.abs(f)) <= tol:
        return y, MAX_ITER, float(np.max(np.abs(f)))
    raise NewtonDivergence(f"no convergence in {MAX_ITER} iterations", MAX_ITER, float(np.max(np.abs(f))))


def series_seed(s: PhaseState, mu) -> np.ndarray:
    """First two terms of y = exp(-D(mu)) x, namely x + 1/mu - p/mu^2."""
    mu = complex(mu)
    return s.x + 1 / mu - s.p / mu ** 2


def forward_residual(s: PhaseState, mu, y) -> np.ndarray:
    g = s.gamma
    z, sep = _cross(g, s.x, y)
    _check_cross(z, sep, s.eps_coll)
    return -mu + _self_sum(g, s.x) - g * _coth(z).sum(axis=1) - s.p


def backward_residual(s: PhaseState, mu, z_pos) -> np.ndarray:
    """Second equation with (y, pt) -> (x, p): p = -mu - g sum coth(g x_ik) + g sum coth(g (x_i - z_k))."""
    g = s.gamma
    z, sep = _cross(g, s.x, z_pos)
    _check_cross(z, sep, s.eps_coll)
    return -mu - _self_sum(g, s.x) + g * _coth(z).sum(axis=1) - s.p


def backlund_solve(s: PhaseState, mu, y_init=None) -> BacklundPair:
    """Solve the first equation set for y and evaluate pt from the second."""
    s.check_regular()
    mu = complex(mu)
    g = s.gamma
    y0 = series_seed(s, mu) if y_init is None else np.asarray(y_init, dtype=complex)
    tol = NEWTON_RTOL * _scale(s, mu)

    def jac(y):
        # d/dy_k of -g coth(g (x_i - y_k)) is -g^2 csch^2(g (x_i - y_k))
        return -g ** 2 * _csch2(g * (s.x[:, None] - y[None, :]))

    y, its, res = _newton(lambda y: forward_residual(s, mu, y), jac, y0, tol, s.eps_coll)
    ys = PhaseState(g, y, np.zeros_like(y), s.eps_coll)
    ys.check_regular()
    pt = -mu - _self_sum(g, y) + g * _coth(g * (y[:, None] - s.x[None, :])).sum(axis=1)
    log.debug("backlund mu=%s: %d Newton iterations, residual %.2e", mu, its, res)
    return BacklundPair(s, y, pt, mu, its, res)


def backward_solve(s: PhaseState, mu, z_init=None) -> np.ndarray:
    """Positions z = exp(+D(mu)) x solving the second equation with x as the target."""
    s.check_regular()
    mu = complex(mu)
    g = s.gamma
    z0 = s.x - 1 / mu + s.p / mu ** 2 if z_init is None else np.asarray(z_init, dtype=complex)
    tol = NEWTON_RTOL * _scale(s, mu)

    def jac(z):
        return g ** 2 * _csch2(g * (s.x[:, None] - z[None, :]))

    z, _, _ = _newton(lambda z: backward_residual(s, mu, z), jac, z0, tol, s.eps_coll)
    return z


# ---------------------------------------------------------------- generating function

def gen_function(x, y, mu, gamma) -> complex:
    """F = sum_{i<j} log[sinh(g x_ij) sinh(g y_ij)] - sum_{i,j} log sinh(g (x_i - y_j)) - mu sum (x_i - y_i).

    Principal logarithms; only derivatives of F are meaningful.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    g = complex(gamma)
    iu = np.triu_indices(x.size, 1)
    sx = np.sinh(g * (x[:, None] - x[None, :]))[iu]
    sy = np.sinh(g * (y[:, None] - y[None, :]))[iu]
    sxy = np.sinh(g * (x[:, None] - y[None, :]))
    if np.any(np.abs(sxy) == 0) or np.any(np.abs(sx) == 0) or np.any(np.abs(sy) == 0):
        raise PoleCollision("generating function evaluated at coinciding positions", min_sinh=0.0)
    return complex(np.log(sx).sum() + np.log(sy).sum() - np.log(sxy).sum() - mu * (x - y).sum())


def gen_function_grad(x, y, mu, gamma):
    """(dF/dx, dF/dy) in closed form."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    g = complex(gamma)
    cross = g * _coth(g * (x[:, None] - y[None, :]))
    dx = _self_sum(g, x) - cross.sum(axis=1) - mu
    dy = _self_sum(g, y) + cross.sum(axis=0) + mu
    return dx, dy


def canonical_defect(pair: BacklundPair, relative: bool = False) -> float:
    """max_i of |p_i - dF/dx_i| and |pt_i + dF/dy_i|."""
    s = pair.source
    dx, dy = gen_function_grad(s.x, pair.target_y, pair.mu, s.gamma)
    dev = max(float(np.max(np.abs(s.p - dx))), float(np.max(np.abs(pair.target_p + dy))))
    if relative:
        dev /= _scale(s, pair.mu)
    return dev


# ---------------------------------------------------------------- mu-expansion

def schur_table(s0: PhaseState, rtol: float = 1e-12, fd_step: float | None = None) -> SchurOperatorTable:
    """h_1 .. h_4 acting on the positions of ``s0``.

    h_1 = -1, h_2 = p (stored as the momenta themselves), h_3 = dx/dt_3 / 3
    and h_4 = dx/dt_4 / 4 + xddot / 8.  With ``fd_step`` the analytic flow
    velocities are also compared with central differences of trajectories
    integrated at tolerance ``rtol``.
    """
    s0.check_regular()
    n = s0.n
    h = np.empty((4, n), dtype=complex)
    h[0] = -1.0
    h[1] = s0.p
    v3 = grad_p(s0, 3)
    v4 = grad_p(s0, 4)
    xdd = eom_accel(s0)
    h[2] = v3 / 3
    h[3] = v4 / 4 + xdd / 8
    fd = float("nan")
    if fd_step is not None:
        fd = 0.0
        for m, v in ((1, grad_p(s0, 1)), (2, 2 * s0.p), (3, v3), (4, v4)):
            xp = integrate(s0, m, fd_step, rtol).final.x
            xm = integrate(s0, m, -fd_step, rtol).final.x
            fd = max(fd, float(np.max(np.abs((xp - xm) / (2 * fd_step) - v))))
    return SchurOperatorTable(4, h, xdd, fd)


def series_y(s: PhaseState, mu, K: int, table: SchurOperatorTable | None = None) -> np.ndarray:
    """y = exp(-D(mu)) x truncated after mu^-K.

    exp(-D) - 1 = sum_k h_k(-d~) mu^-k; on the positions h_k(-d~) x = -h_k(d~) x
    for k <= 3, while h_4(-d~) x = -h_4(d~) x + xddot / 4 because the
    d_{t_2}^2 part of h_4 is even in the sign of d~.
    """
    if not 0 <= K <= 4:
        raise ValueError("K must lie in 0..4")
    mu = complex(mu)
    t = schur_table(s) if table is None else table
    y = np.array(s.x, dtype=complex)
    for k in range(1, K + 1):
        coef = -t.action(k)
        if k == 4:
            coef = coef + t.xddot / 4
        y = y + coef * mu ** (-k)
    return y


def expansion_defect(s: PhaseState, mu, K: int, pair: BacklundPair | None = None) -> float:
    """max_i |y_i - series_y_i|; of order |mu|^-(K+1)."""
    if pair is None:
        pair = backlund_solve(s, mu)
    return float(np.max(np.abs(pair.target_y - series_y(s, mu, K))))


def fit_exponent(mus, defects) -> float:
    """Least-squares slope of log(defect) against log|mu|."""
    return float(np.polyfit(np.log(np.abs(np.asarray(mus, dtype=complex))), np.log(defects), 1)[0])


def b6_defect(s: PhaseState, mu, relative: bool = True) -> float:
    """Subtracted equation at s: forward shift y and backward shift z of x.

    sum_k coth(g (x_i - y_k)) + sum_k coth(g (x_i - z_k)) - 2 sum_{k!=i} coth(g x_ik),
    multiplied by g so every term is on the scale of mu.
    """
    g = s.gamma
    y = backlund_solve(s, mu).target_y
    z = backward_solve(s, mu)
    a = g * _coth(g * (s.x[:, None] - y[None, :])).sum(axis=1)
    b = g * _coth(g * (s.x[:, None] - z[None, :])).sum(axis=1)
    c = 2 * _self_sum(g, s.x)
    dev = float(np.max(np.abs(a + b - c)))
    if relative:
        dev /= max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))), float(np.max(np.abs(c))))
    return dev


def appendix_t3_velocity(s: PhaseState) -> np.ndarray:
    cp = c_prime(s)
    return -3 * s.p ** 2 - 3 * cp.sum(axis=1) - s.gamma ** 2


def appendix_t4_velocity(s: PhaseState) -> np.ndarray:
    cp = c_prime(s)
    p = s.p
    return 4 * p ** 3 + 4 * ((2 * p[:, None] + p[None, :]) * cp).sum(axis=1) + 4 * s.gamma ** 2 * p


def appendix_flow_check(s: PhaseState):
    """Deviations of the explicit t_3 and t_4 velocities from grad_p(s, 3), grad_p(s, 4)."""
    d3 = float(np.max(np.abs(appendix_t3_velocity(s) - grad_p(s, 3))))
    d4 = float(np.max(np.abs(appendix_t4_velocity(s) - grad_p(s, 4))))
    return d3, d4
