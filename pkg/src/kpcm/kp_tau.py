"""KP side of the correspondence: tau-functions, poles, shifts and residues.

The tau-function of an N-pole trigonometric solution is the polynomial
``tau(w) = prod_i (w - w_i)`` in ``w = exp(2 gamma x)``.  Its dependence on
the hierarchical times is given in closed form by

    tau(t) = det(w I - exp(-sum_k t_k calL_k) W_0),
    calL_k = (L_0 + gamma)^k - (L_0 - gamma)^k,

so the pole positions at any time are eigenvalues of a known matrix.  Most
functions below either evaluate that formula or check one of its
consequences against an independent route (integrated flows, explicit
determinants, quadrature, finite differences).
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import linear_sum_assignment

from .cm_core import PhaseState, build_lax, csch_coth, build_m, build_m_tilde, build_w, grad_p
from .errors import BranchAmbiguity, EvaluationAtPole
from .flows import HierarchyTimes, integrate
from .linalg import det, eigenvalues, eigenvector, inv, lu_solve, mat_exp, norm_inf

EXPONENT_BOUND = 100.0
BRANCH_TOL = 1e-9
POLE_GUARD = 1e-8


class TauSource(Enum):
    ROOT_PRODUCT = "RootProduct"
    DETERMINANT = "Determinant"


@dataclass(frozen=True)
class TauEvaluation:
    value: complex
    w: complex
    times: HierarchyTimes
    source: TauSource


@dataclass(frozen=True)
class WaveCoeffs:
    z: complex
    c_tilde: np.ndarray
    c_tilde_star: np.ndarray


@dataclass
class FlowMatrixSet:
    """L_0, W_0 and the generators calL_k of one initial state."""

    state: PhaseState
    L0: np.ndarray = field(init=False)
    W0: np.ndarray = field(init=False)
    _cache: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        self.L0 = build_lax(self.state)
        self.W0 = build_w(self.state)
        c1 = self.calL(1)
        if norm_inf(c1 - 2 * self.gamma * np.eye(self.n)) > 1e-14 * max(1.0, abs(self.gamma)):
            raise AssertionError("calL_1 differs from 2 gamma I")

    @classmethod
    def from_state(cls, s: PhaseState) -> "FlowMatrixSet":
        return cls(s)

    @property
    def gamma(self):
        return self.state.gamma

    @property
    def n(self):
        return self.state.n

    def calL(self, k: int) -> np.ndarray:
        if k < 1:
            raise ValueError("k must be >= 1")
        if k not in self._cache:
            eye = np.eye(self.n)
            Lp = self.L0 + self.gamma * eye
            Lm = self.L0 - self.gamma * eye
            Pp, Pm = Lp.copy(), Lm.copy()
            for _ in range(k - 1):
                Pp, Pm = Pp @ Lp, Pm @ Lm
            self._cache[k] = Pp - Pm
        return self._cache[k]

    def exponent(self, coeffs) -> np.ndarray:
        """-sum_k t_k calL_k for a mapping ``k -> t_k`` (any number of terms)."""
        A = np.zeros((self.n, self.n), dtype=complex)
        for k, t in coeffs.items():
            if t != 0:
                A -= t * self.calL(int(k))
        return A

    def evolution_matrix(self, coeffs) -> np.ndarray:
        """exp(-sum_k t_k calL_k) W_0."""
        A = self.exponent(coeffs)
        if norm_inf(A) > EXPONENT_BOUND:
            raise ValueError(f"||sum t_k calL_k|| = {norm_inf(A):.3g} exceeds {EXPONENT_BOUND:g}")
        return mat_exp(A) @ self.W0


def conditioned_time(fm: FlowMatrixSet, m: int, t_max: float, budget: float = 8.0) -> float:
    """Largest |t| <= t_max with ||t calL_m||_inf <= budget (sign of t_max kept).

    The eigenvalues of exp(-t calL_m) W_0 spread over roughly
    exp(+-||t calL_m||); capping the exponent keeps the smallest of them
    resolvable in double precision.
    """
    nrm = norm_inf(fm.calL(m))
    if nrm == 0 or abs(t_max) * nrm <= budget:
        return float(t_max)
    return float(np.sign(t_max) * budget / nrm)


# ---------------------------------------------------------------- tau values

def tau_from_roots(s: PhaseState, w) -> complex:
    return complex(np.prod(complex(w) - s.w))


def tau_det(fm: FlowMatrixSet, times, w) -> complex:
    times = HierarchyTimes.coerce(times)
    A = fm.evolution_matrix(times)
    return det(complex(w) * np.eye(fm.n) - A)


def evaluate_tau(fm: FlowMatrixSet, times, w, source=TauSource.DETERMINANT) -> TauEvaluation:
    times = HierarchyTimes.coerce(times)
    if source is TauSource.DETERMINANT:
        value = tau_det(fm, times, w)
    else:
        value = tau_from_roots(evolved_state(fm, times), w)
    return TauEvaluation(complex(value), complex(w), times, source)


# ---------------------------------------------------------------- poles

def branch_positions(w_roots, x_ref, gamma):
    """Match roots w to reference positions and pick the log branch of each.

    Every root w has the candidate positions (log w + 2 pi i n) / (2 gamma);
    the cost of pairing it with reference x_j is the distance from x_j to
    the nearest candidate.  The optimal assignment is returned as positions
    ordered like ``x_ref``.
    """
    w_roots = np.asarray(w_roots, dtype=complex)
    x_ref = np.asarray(x_ref, dtype=complex)
    gamma = complex(gamma)
    period = 1j * np.pi / gamma
    xc = np.log(w_roots) / (2 * gamma)
    nu = (x_ref[None, :] - xc[:, None]) / period
    shift = np.round(nu.real)
    cost = np.abs(period) * np.abs(nu - shift)
    rows, cols = linear_sum_assignment(cost)
    out = np.empty_like(x_ref)
    for r, c in zip(rows, cols):
        frac = nu[r, c].real - np.floor(nu[r, c].real)
        d1 = np.abs(period) * abs(complex(frac, nu[r, c].imag))
        d2 = np.abs(period) * abs(complex(1 - frac, nu[r, c].imag))
        if abs(d1 - d2) <= BRANCH_TOL:
            raise BranchAmbiguity(
                f"root {w_roots[r]:.6g} is equidistant from two branches near x = {x_ref[c]:.6g}")
        out[c] = xc[r] + shift[r, c] * period
    return out


def _scaled_times(times, frac):
    return {k: frac * t for k, t in times.items()}


def _poles_and_vectors(fm, coeffs, x_ref):
    A = fm.evolution_matrix(coeffs)
    roots = eigenvalues(A)
    x = branch_positions(roots, x_ref, fm.gamma)
    return A, x


def poles_from_times(fm: FlowMatrixSet, s0: PhaseState, times, reference=None,
                     steps: int = 1) -> np.ndarray:
    """Pole positions x_i(t) from the eigenvalues of exp(-sum t_k calL_k) W_0.

    Roots are paired with ``reference`` (default: the positions of ``s0``)
    and each log branch is the one nearest to its partner.  With
    ``steps > 1`` the times are followed along a straight path from 0 and
    every intermediate pole set serves as reference for the next, which is
    how particles are tracked over long times.
    """
    times = HierarchyTimes.coerce(times)
    x_ref = np.asarray(s0.x if reference is None else reference, dtype=complex)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    for j in range(1, steps + 1):
        _, x_ref = _poles_and_vectors(fm, _scaled_times(times, j / steps), x_ref)
    return x_ref


def evolved_state(fm: FlowMatrixSet, times, reference=None, steps: int = 1) -> PhaseState:
    """Phase state at ``times`` reconstructed from the determinant formula.

    Positions come from :func:`poles_from_times`.  Momenta are read off the
    diagonal of V L_0 V^-1 where V diagonalises exp(-sum t calL) W_0; the
    diagonal does not depend on how the rows of V are scaled.
    """
    times = HierarchyTimes.coerce(times)
    s0 = fm.state
    x = poles_from_times(fm, s0, times, reference, steps)
    A = fm.evolution_matrix(times)
    w = np.exp(2 * fm.gamma * x)
    R = np.column_stack([eigenvector(A, wi) for wi in w])
    Lt = lu_solve(R, fm.L0 @ R)
    return PhaseState(fm.gamma, x, -np.diag(Lt), s0.eps_coll)


# ---------------------------------------------------------------- u and its x-derivatives

def _check_off_pole(s, xq):
    sh = np.abs(np.sinh(s.gamma * (complex(xq) - s.x)))
    if np.any(sh < POLE_GUARD):
        raise EvaluationAtPole(f"x = {complex(xq):.6g} is within the pole guard of a particle")


def _coth_polys(gamma, order):
    # d^n u / dx^n = sum_i csch^2(z_i) Q_n(coth z_i), z_i = gamma (x - x_i).
    # With c = coth z, dc/dz = -csch^2 and d csch^2/dz = -2 c csch^2, so
    # Q_{n+1} = gamma (-2 c Q_n - (c^2 - 1) Q_n').  Keeping csch^2 as a
    # factor avoids the cancellation in 1 - c^2 far from the poles.
    polys = [np.array([-gamma ** 2], dtype=complex)]
    c2m1 = np.array([-1, 0, 1], dtype=complex)
    for _ in range(order):
        q = polys[-1]
        polys.append(gamma * P.polysub(P.polymul([0, -2], q), P.polymul(c2m1, P.polyder(q))))
    return polys


def u1_derivatives(s: PhaseState, xq, order: int = 4) -> np.ndarray:
    """[u, u_x, ..., d^order u / dx^order] at ``xq``, all analytic."""
    _check_off_pole(s, xq)
    csch, coth, _ = csch_coth(s.gamma * (complex(xq) - s.x))
    s2 = csch ** 2
    return np.array([(s2 * P.polyval(coth, q)).sum() for q in _coth_polys(s.gamma, order)])


def u1_eval(s: PhaseState, xq) -> complex:
    """u(x) = -sum_i gamma^2 / sinh^2(gamma (x - x_i))."""
    _check_off_pole(s, xq)
    return complex(-(s.gamma ** 2 / np.sinh(s.gamma * (complex(xq) - s.x)) ** 2).sum())


# ---------------------------------------------------------------- shifted tau-functions

def _frame(state, w):
    n = state.n
    L = build_lax(state)
    h = state.w_half
    W = state.w
    G = 1 / (complex(w) - W)
    return L, h, W, G, np.eye(n)


def shift_ratios(state: PhaseState, w, lam=None, mu=None) -> dict:
    """Ratios tau(t + [1/lam] - [1/mu]) / tau(t) from the finite trace formulas.

    ``state`` is the particle configuration at time t (positions and
    momenta); ``W`` and ``L`` are built from it.  Keys present: ``"lam"``,
    ``"mu"``, ``"both"`` (each only when the needed parameters were given)
    and ``"dboth_dw"``, the w-derivative of the double-shift ratio.
    """
    L, h, W, G, eye = _frame(state, w)
    g = state.gamma
    out = {}
    if lam is not None:
        # tr[R_lam G Et] = (h^T R_lam)(G h)
        a = lu_solve(((lam + g) * eye - L).T, h)
        out["lam"] = 1 + 2 * g * (a @ (G * h))
    if mu is not None:
        b = lu_solve((mu - g) * eye - L, h)
        out["mu"] = 1 - 2 * g * ((G * h) @ b)
    if lam is not None and mu is not None:
        out["both"] = 1 - 2 * g * (lam - mu) * ((a * G) @ b)
        out["dboth_dw"] = 2 * g * (lam - mu) * ((a * G ** 2) @ b)
    return out


def tau_shift(fm: FlowMatrixSet, times, w, lam=None, mu=None, state=None) -> complex:
    """tau(t + [1/lam] - [1/mu]) by the trace formulas; either shift may be None."""
    times = HierarchyTimes.coerce(times)
    if state is None:
        state = evolved_state(fm, times)
    tau = tau_from_roots(state, w)
    if lam is None and mu is None:
        return tau
    r = shift_ratios(state, w, lam, mu)
    key = "both" if (lam is not None and mu is not None) else ("lam" if lam is not None else "mu")
    return tau * r[key]


def shift_operator(fm: FlowMatrixSet, lam=None, mu=None) -> np.ndarray:
    """exp of the exact time shift by [1/lam] - [1/mu] in the L_0 frame.

    sum_k lam^-k calL_k / k = log((lam - gamma - L_0)^-1 (lam + gamma - L_0)),
    so the shift multiplies exp(-sum t calL) by
    ((lam - gamma) - L_0)((lam + gamma) - L_0)^-1, and the -[1/mu] shift by
    the inverse of the same expression at mu.
    """
    g = fm.gamma
    eye = np.eye(fm.n)
    S = eye.astype(complex)
    if lam is not None:
        S = S @ ((lam - g) * eye - fm.L0) @ inv((lam + g) * eye - fm.L0)
    if mu is not None:
        S = S @ ((mu + g) * eye - fm.L0) @ inv((mu - g) * eye - fm.L0)
    return S


def tau_shift_det(fm: FlowMatrixSet, times, w, lam=None, mu=None) -> complex:
    """Independent route: the shifted determinant with the exact shift operator."""
    times = HierarchyTimes.coerce(times)
    A = mat_exp(fm.exponent(times)) @ shift_operator(fm, lam, mu) @ fm.W0
    return det(complex(w) * np.eye(fm.n) - A)


def shifted_times_series(times, lam=None, mu=None, k_terms: int = 12) -> dict:
    """t + [1/lam] - [1/mu] truncated to k <= k_terms (a plain dict; may exceed K_MAX)."""
    out = dict(HierarchyTimes.coerce(times))
    for k in range(1, k_terms + 1):
        d = 0.0
        if lam is not None:
            d += lam ** (-k) / k
        if mu is not None:
            d -= mu ** (-k) / k
        out[k] = out.get(k, 0.0) + d
    return out


def tau_shift_series(fm: FlowMatrixSet, times, w, lam=None, mu=None, k_terms: int = 12) -> complex:
    """Shifted tau from the product over poles at truncated shifted times."""
    coeffs = shifted_times_series(times, lam, mu, k_terms)
    A = fm.evolution_matrix(coeffs)
    return complex(np.prod(complex(w) - eigenvalues(A)))


def bilinear_terms(state: PhaseState, w, lam, mu):
    """Residual of the bilinear identity and the size of its largest term.

    The identity (divided by tau) reads

        d_x tau_lm / tau - (d_x tau / tau)(tau_lm / tau)
            - (lam - mu)(tau_lm / tau - tau_l tau_m / tau^2) = 0,

    with d_x = 2 gamma w d_w.  Shifted values come from :func:`shift_ratios`.
    """
    w = complex(w)
    g = state.gamma
    r = shift_ratios(state, w, lam, mu)
    tau = tau_from_roots(state, w)
    dlog_tau = 2 * g * w * np.sum(1 / (w - state.w))
    tau_lm = tau * r["both"]
    dtau_lm = tau * (dlog_tau * r["both"] + 2 * g * w * r["dboth_dw"])
    terms = np.array([
        dtau_lm / tau,
        -dlog_tau * tau_lm / tau,
        -(lam - mu) * tau_lm / tau,
        (lam - mu) * (tau * r["lam"]) * (tau * r["mu"]) / tau ** 2,
    ])
    return complex(terms.sum()), float(np.max(np.abs(terms)))


def bilinear_residual(fm: FlowMatrixSet, times, w, lam, mu, state=None) -> complex:
    times = HierarchyTimes.coerce(times)
    if state is None:
        state = evolved_state(fm, times)
    dmin = np.min(np.abs(complex(w) - state.w))
    if dmin < 1e-6:
        raise EvaluationAtPole(f"w is {dmin:.2e} from a pole")
    return bilinear_terms(state, w, lam, mu)[0]


# ---------------------------------------------------------------- wave functions

def wave_coeffs(s: PhaseState, z) -> WaveCoeffs:
    """c~ = -((z - gamma) - L)^-1 W^1/2 e and c~* = e^T W^1/2 ((z + gamma) - L)^-1."""
    z = complex(z)
    L = build_lax(s)
    eye = np.eye(s.n)
    h = s.w_half
    c = -lu_solve((z - s.gamma) * eye - L, h)
    cs = lu_solve(((z + s.gamma) * eye - L).T, h)
    return WaveCoeffs(z, c, cs)


def wave_evolution_defect(s: PhaseState, z, h: float = 1e-4, adjoint: bool = False,
                          rtol: float = 1e-13) -> float:
    """Check d c~/dt_2 = M c~ (or d c~*/dt_2 = -c~* M~) by central differences.

    Returns the largest deviation divided by max(1, |M c~|).
    """
    if not (1e-6 <= h <= 1e-3):
        raise ValueError("h must lie in [1e-6, 1e-3]")
    fwd = integrate(s, 2, h, rtol).final
    bwd = integrate(s, 2, -h, rtol).final
    c0 = wave_coeffs(s, z)
    cp, cm = wave_coeffs(fwd, z), wave_coeffs(bwd, z)
    if adjoint:
        deriv = (cp.c_tilde_star - cm.c_tilde_star) / (2 * h)
        target = -c0.c_tilde_star @ build_m_tilde(s)
    else:
        deriv = (cp.c_tilde - cm.c_tilde) / (2 * h)
        target = build_m(s) @ c0.c_tilde
    return float(np.max(np.abs(deriv - target)) / max(1.0, float(np.max(np.abs(target)))))


def residue_identity_defect(fm: FlowMatrixSet, s0: PhaseState, m: int, h: float = 1e-6,
                            relative: bool = True) -> float:
    """Velocity of the determinant-formula poles along t_m versus grad_p.

    The poles at t_m = +-h are central-differenced.  With ``relative`` the
    maximum deviation is divided by max(1, |grad_p|).
    """
    if not 1 <= m <= 4:
        raise ValueError("m must lie in 1..4")
    xp = poles_from_times(fm, s0, {m: h})
    xm = poles_from_times(fm, s0, {m: -h})
    v = (xp - xm) / (2 * h)
    target = grad_p(s0, m)
    dev = float(np.max(np.abs(v - target)))
    if relative:
        dev /= max(1.0, float(np.max(np.abs(target))))
    return dev


def contour_residue(s: PhaseState, m: int, R: float, Q: int = 512) -> np.ndarray:
    """(1/2 pi i) contour integral of z^m c~*_i c~_i / w_i over |z| = R.

    With z = R e^(i theta) and dz = i z d theta the trapezoid rule is the
    mean over nodes of z^(m+1) c~*_i c~_i / w_i (counterclockwise).
    """
    if Q < 64:
        raise ValueError("Q must be >= 64")
    L = build_lax(s)
    eye = np.eye(s.n)
    bound = max(np.max(np.abs(eigenvalues(L + s.gamma * eye))),
                np.max(np.abs(eigenvalues(L - s.gamma * eye))))
    if R <= bound + 1:
        raise ValueError(f"radius {R} must exceed spectral bound {bound:.3g} + 1")
    acc = np.zeros(s.n, dtype=complex)
    for q in range(Q):
        z = R * np.exp(2j * np.pi * q / Q)
        wc = wave_coeffs(s, z)
        acc += z ** (m + 1) * wc.c_tilde_star * wc.c_tilde / s.w
    return acc / Q


# ---------------------------------------------------------------- KP equation

def kp_terms(fm: FlowMatrixSet, s0: PhaseState, base_times, xq, h: float = 1e-3):
    """Individual terms of the KP equation at (xq, base_times).

    x-derivatives are exact (polynomials in coth); the t_2 second derivative
    and the mixed t_3 x derivative are second-order central differences of
    u and u_x over pole sets from the determinant formula.
    Returns (3 u_t2t2, -4 u_t3x, 12 u_x^2, 12 u u_xx, u_xxxx).
    """
    if not (1e-4 <= h <= 1e-2):
        raise ValueError("h must lie in [1e-4, 1e-2]")
    base = HierarchyTimes.coerce(base_times)
    # keep the reference on the same branch as the base point
    x_base = poles_from_times(fm, s0, base) if base else s0.x
    ref_state = PhaseState(fm.gamma, x_base, np.zeros_like(x_base), s0.eps_coll)

    def u_at(t2, t3):
        times = dict(base)
        times[2] = times.get(2, 0.0) + t2
        times[3] = times.get(3, 0.0) + t3
        x = poles_from_times(fm, s0, times, reference=x_base)
        return u1_derivatives(ref_state.replace(x=x, p=np.zeros_like(x)), xq, 4)

    d0 = u_at(0.0, 0.0)
    u, ux, uxx, _, uxxxx = d0
    u_t2t2 = (u_at(h, 0.0)[0] - 2 * u + u_at(-h, 0.0)[0]) / h ** 2
    u_t3x = (u_at(0.0, h)[1] - u_at(0.0, -h)[1]) / (2 * h)
    return np.array([3 * u_t2t2, -4 * u_t3x, 12 * ux ** 2, 12 * u * uxx, uxxxx])


def kp_residual(fm: FlowMatrixSet, s0: PhaseState, base_times, xq, h: float = 1e-3) -> complex:
    """3 u_t2t2 - (4 u_t3 - 12 u u_x - u_xxx)_x; zero up to O(h^2)."""
    return complex(kp_terms(fm, s0, base_times, xq, h).sum())


def kp_scale(fm, s0, base_times, xq, h=1e-3) -> float:
    return float(np.max(np.abs(kp_terms(fm, s0, base_times, xq, h))))


# ---------------------------------------------------------------- rank one condition

def minor_ratio(C: np.ndarray) -> float:
    """max |2x2 minor| / max |entry|; zero exactly when C has rank <= 1."""
    C = np.asarray(C, dtype=complex)
    n = C.shape[0]
    if n < 2:
        return 0.0
    scale = np.max(np.abs(C))
    if scale == 0:
        return 0.0
    # all minors C_ij C_kl - C_il C_kj at once
    M = np.einsum("ij,kl->ikjl", C, C) - np.einsum("il,kj->ikjl", C, C)
    return float(np.max(np.abs(M)) / scale)


def rank_one_matrix(W: np.ndarray, L: np.ndarray, gamma) -> np.ndarray:
    """X Z - Y X with X = -W, Z = L - gamma, Y = L + gamma."""
    eye = np.eye(L.shape[0])
    X = -np.asarray(W)
    return X @ (L - gamma * eye) - (L + gamma * eye) @ X


def rank_one_defect(s: PhaseState) -> float:
    return minor_ratio(rank_one_matrix(build_w(s), build_lax(s), s.gamma))
