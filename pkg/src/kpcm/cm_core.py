"""Phase space objects of the trigonometric Calogero-Moser system.

Conventions
-----------
The coupling ``gamma`` is complex: real values give the hyperbolic model,
imaginary values the trigonometric one.  Positions and momenta are complex.

    L_ij = -p_i delta_ij - (1 - delta_ij) gamma / sinh(gamma (x_i - x_j))
    W    = diag(exp(2 gamma x_i))
    H_k  = tr L^k
    cH_m = tr((L + gamma)^(m+1) - (L - gamma)^(m+1)) / (2 (m+1) gamma)

The half powers ``w_i^(1/2)`` that appear in M and in the rank-one matrix
``W^(1/2) E W^(1/2)`` are always ``exp(gamma x_i)``; the branch is fixed by
x, never by taking a square root of w.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PoleCollision
from .linalg import mat_poly_apply, norm_inf

EPS_COLL = 1e-8


@dataclass(frozen=True)
class PhaseState:
    """Coupling plus complex positions and momenta of N particles."""

    gamma: complex
    x: np.ndarray
    p: np.ndarray
    eps_coll: float = field(default=EPS_COLL, compare=False)

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=complex)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=complex)).copy()
        g = complex(self.gamma)
        if x.ndim != 1 or x.shape != p.shape or x.size < 1:
            raise ValueError(f"x and p must be equal-length 1-d sequences (got {x.shape}, {p.shape})")
        if g == 0 or not np.isfinite(g):
            raise ValueError("gamma must be a finite nonzero complex number")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("positions and momenta must be finite")
        x.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return self.x.size

    @property
    def w(self):
        return np.exp(2 * self.gamma * self.x)

    @property
    def w_half(self):
        return np.exp(self.gamma * self.x)

    def replace(self, x=None, p=None):
        return PhaseState(self.gamma, self.x if x is None else x,
                          self.p if p is None else p, self.eps_coll)

    def min_separation(self):
        """min over i != j of |sinh(gamma (x_i - x_j))| (inf for N = 1)."""
        if self.n < 2:
            return np.inf
        with np.errstate(over="ignore"):
            s = np.abs(np.sinh(self.gamma * (self.x[:, None] - self.x[None, :])))
        s[np.diag_indices(self.n)] = np.inf
        return float(s.min())

    def is_regular(self):
        return self.min_separation() >= self.eps_coll

    def check_regular(self):
        sep = self.min_separation()
        if not sep >= self.eps_coll:
            raise PoleCollision(
                f"|sinh(gamma x_ij)| = {sep:.3e} below collision guard {self.eps_coll:g}",
                min_sinh=sep)


def csch_coth(z):
    """(1/sinh z, coth z, e^z/sinh z) without overflow for large |Re z|.

    Written through e^(-2|z|) on the half plane Re z >= 0 and extended by
    parity, so particles that drift far apart (hyperbolic odd flows) give
    exponentially small interactions instead of inf/nan.
    """
    z = np.asarray(z, dtype=complex)
    sgn = np.where(z.real >= 0, 1.0, -1.0)
    a = sgn * z
    e = np.exp(-2 * a)
    den = 1.0 - e
    csch = sgn * 2 * np.exp(-a) / den
    coth = sgn * (1 + e) / den
    # e^z csch z = 2 / (1 - e^{-2z}); for Re z < 0 use 2 e^{2z} / (e^{2z} - 1)
    ez_csch = np.where(sgn > 0, 2 / den, -2 * e / den)
    return csch, coth, ez_csch


def _pair_terms(s):
    s.check_regular()
    dx = s.x[:, None] - s.x[None, :]
    off = ~np.eye(s.n, dtype=bool)
    # shift the diagonal off zero so the helpers stay finite; callers mask it out
    z = np.where(off, s.gamma * dx, 1.0)
    with np.errstate(over="ignore"):
        csch, coth, ez_csch = csch_coth(z)
    return csch, coth, ez_csch, off


def build_lax(s: PhaseState) -> np.ndarray:
    csch, _, _, off = _pair_terms(s)
    L = np.where(off, -s.gamma * csch, 0.0).astype(complex)
    L[np.diag_indices(s.n)] = -s.p
    return L


def build_w(s: PhaseState) -> np.ndarray:
    return np.diag(s.w)


def build_w_half(s: PhaseState) -> np.ndarray:
    return np.diag(s.w_half)


def build_m(s: PhaseState) -> np.ndarray:
    """The second Lax partner M, written in sinh form.

    w_i w_k / (w_i - w_k)^2 = 1 / (4 sinh^2(gamma x_ik)) and
    w_i^(3/2) w_j^(1/2) / (w_i - w_j)^2 = exp(gamma x_ij) / (4 sinh^2(gamma x_ij)),
    which avoids overflow in w for large |Re(gamma x)|.
    """
    csch, _, ez_csch, off = _pair_terms(s)
    g = s.gamma
    inv_sh2 = np.where(off, csch ** 2, 0.0)
    M = np.where(off, 2 * g ** 2 * ez_csch * csch, 0.0).astype(complex)
    M[np.diag_indices(s.n)] = 2 * g * s.p - 2 * g ** 2 * inv_sh2.sum(axis=1)
    return M


def build_m_tilde(s: PhaseState) -> np.ndarray:
    M = build_m(s)
    return np.diag(-4 * s.gamma * s.p) + M.T


def rank_one_e_tilde(s: PhaseState) -> np.ndarray:
    """W^(1/2) E W^(1/2) with E the all-ones matrix."""
    h = s.w_half
    return np.outer(h, h)


def comm_defect(s: PhaseState) -> np.ndarray:
    """[L, W] - 2 gamma (W^(1/2) E W^(1/2) - W); zero for every regular state."""
    L = build_lax(s)
    W = build_w(s)
    return L @ W - W @ L - 2 * s.gamma * (rank_one_e_tilde(s) - W)


def hamiltonian_h(s: PhaseState, k: int) -> complex:
    if k < 1:
        raise ValueError("k must be >= 1")
    return complex(np.trace(mat_poly_apply(build_lax(s), k)))


def hamiltonian_cal(s: PhaseState, m: int) -> complex:
    """cH_m, the Hamiltonian generating the m-th hierarchical flow."""
    if m < 1:
        raise ValueError("m must be >= 1")
    L = build_lax(s)
    g = s.gamma
    eye = np.eye(s.n)
    diff = mat_poly_apply(L + g * eye, m + 1) - mat_poly_apply(L - g * eye, m + 1)
    return complex(np.trace(diff) / (2 * (m + 1) * g))


def _shifted_power_diff(L, g, m):
    eye = np.eye(L.shape[0])
    return mat_poly_apply(L + g * eye, m) - mat_poly_apply(L - g * eye, m)


def grad_p(s: PhaseState, m: int) -> np.ndarray:
    """dcH_m/dp_i = -(1/(2 gamma)) [((L+gamma)^m)_ii - ((L-gamma)^m)_ii]."""
    if m < 1:
        raise ValueError("m must be >= 1")
    B = _shifted_power_diff(build_lax(s), s.gamma, m)
    return -np.diag(B) / (2 * s.gamma)


def dlax_dx_weights(s: PhaseState) -> np.ndarray:
    """D_ik = gamma^2 cosh(gamma x_ik) / sinh^2(gamma x_ik), zero diagonal.

    dL/dx_i has row i equal to D[i, :] and column i equal to -D[:, i]; D is
    symmetric.
    """
    csch, coth, _, off = _pair_terms(s)
    return np.where(off, s.gamma ** 2 * coth * csch, 0.0)


def dlax_dx(s: PhaseState, i: int) -> np.ndarray:
    """Dense dL/dx_i; only used by tests and diagnostics."""
    D = dlax_dx_weights(s)
    out = np.zeros((s.n, s.n), dtype=complex)
    out[i, :] += D[i, :]
    out[:, i] -= D[:, i]
    return out


def grad_x(s: PhaseState, m: int) -> np.ndarray:
    """dcH_m/dx_i = (1/(2 gamma)) tr(dL/dx_i [(L+gamma)^m - (L-gamma)^m]).

    With the sparse form of dL/dx_i the trace collapses to
    sum_k D_ik (B_ki - B_ik), so the whole gradient is O(N^2) once B is known.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    B = _shifted_power_diff(build_lax(s), s.gamma, m)
    D = dlax_dx_weights(s)
    return np.sum(D * (B.T - B), axis=1) / (2 * s.gamma)


def flow_rhs(gamma, x, p, m, eps_coll=EPS_COLL):
    """(dcH_m/dp, -dcH_m/dx) from raw arrays, sharing L and B.

    This is the integrator's inner loop, so it skips PhaseState validation
    and builds each matrix once.  Raises PoleCollision like the public
    builders.
    """
    n = x.size
    dx = x[:, None] - x[None, :]
    off = ~np.eye(n, dtype=bool)
    z = np.where(off, gamma * dx, 1.0)
    with np.errstate(over="ignore"):
        csch, coth, _ = csch_coth(z)
    if n > 1:
        # |sinh z| >= eps  <=>  |csch z| <= 1/eps
        big = np.abs(csch[off]).max()
        if not big <= 1.0 / eps_coll:
            sep = 1.0 / big if big > 0 else 0.0
            raise PoleCollision(
                f"|sinh(gamma x_ij)| = {sep:.3e} below collision guard {eps_coll:g}", min_sinh=sep)
    L = np.where(off, -gamma * csch, 0.0).astype(complex)
    L[np.diag_indices(n)] = -p
    eye = np.eye(n)
    Lp, Lm = L + gamma * eye, L - gamma * eye
    Pp, Pm = Lp, Lm
    for _ in range(m - 1):
        Pp, Pm = Pp @ Lp, Pm @ Lm
    B = Pp - Pm
    D = np.where(off, gamma ** 2 * coth * csch, 0.0)
    dxdt = -np.diag(B) / (2 * gamma)
    dpdt = -np.sum(D * (B.T - B), axis=1) / (2 * gamma)
    return dxdt, dpdt


def eom_accel(s: PhaseState) -> np.ndarray:
    """Second t_2-derivative of the positions, -8 g^3 sum cosh/sinh^3."""
    csch, coth, _, off = _pair_terms(s)
    terms = np.where(off, coth * csch ** 2, 0.0)
    return -8 * s.gamma ** 3 * terms.sum(axis=1)


def lax_dot(s: PhaseState) -> np.ndarray:
    """dL/dt_2 assembled entrywise from xdot = 2p, pdot = -dcH_2/dx."""
    D = dlax_dx_weights(s)
    xdot = 2 * s.p
    pdot = -grad_x(s, 2)
    Ldot = D * (xdot[:, None] - xdot[None, :])
    Ldot[np.diag_indices(s.n)] = -pdot
    return Ldot


def lax_defect(s: PhaseState) -> float:
    """||dL/dt_2 + [L, M]||_inf along the t_2 flow."""
    L = build_lax(s)
    M = build_m(s)
    return norm_inf(lax_dot(s) + L @ M - M @ L)


def c_prime(s: PhaseState) -> np.ndarray:
    """c'(x_ij) = -gamma^2 / sinh^2(gamma x_ij) with zero diagonal."""
    csch, _, _, off = _pair_terms(s)
    return np.where(off, -s.gamma ** 2 * csch ** 2, 0.0)


def appendix_hamiltonians(s: PhaseState, triple="distinct"):
    """H_1 .. H_4 as explicit sums over particles.

    ``triple`` selects how the index constraint of the c'(x_ij) c'(x_jk)
    sum in H_4 is read: ``"distinct"`` (i, j, k pairwise distinct) or
    ``"adjacent"`` (only i != j and j != k).  The pairwise distinct reading
    is the one that differs from tr L^4 by a state independent constant;
    the other is kept so the tests can show it does not.
    """
    p = s.p
    cp = c_prime(s)
    H1 = -p.sum()
    H2 = (p ** 2).sum() + cp.sum()
    H3 = -(p ** 3).sum() - 3 * (p[:, None] * cp).sum()
    pair4 = ((4 * p[:, None] ** 2 + 2 * p[:, None] * p[None, :]) * cp).sum()
    # sum_{i,j,k} c'_ij c'_jk = sum_j (row sum of c' at j)^2 (c' symmetric, zero diagonal)
    chain = (cp.sum(axis=0) ** 2).sum()
    if triple == "distinct":
        chain = chain - (cp ** 2).sum()  # drop k == i
    elif triple != "adjacent":
        raise ValueError("triple must be 'distinct' or 'adjacent'")
    H4 = (p ** 4).sum() + pair4 + 2 * chain + (cp ** 2).sum()
    return complex(H1), complex(H2), complex(H3), complex(H4)


def hamiltonian_scale(s: PhaseState, m: int) -> float:
    """Natural magnitude for cH_m: sum of |gamma|^j ||L||^(m-j) over the expansion."""
    a = norm_inf(build_lax(s))
    g = abs(s.gamma)
    return float(sum(a ** (m - j) * g ** j for j in range(m + 1)) * s.n)
