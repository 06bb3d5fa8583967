"""Dense complex linear algebra for small matrices.

Everything here works on plain ``numpy`` complex arrays; numpy is used for
storage and vectorised row operations only.  The factorisations, the matrix
exponential, the characteristic polynomial and the root finder are written
out so that their numerical behaviour is fully under our control.

Matrices are expected to be small (n <= 16 or so).  Nothing is cached and
there is no module level state.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, RootsNotConverged, SingularLinearSystem

PIVOT_RTOL = 1e-14


def as_matrix(A):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def norm_inf(A):
    """Maximum absolute row sum (vector: maximum modulus)."""
    A = np.asarray(A)
    if A.ndim == 1:
        return float(np.max(np.abs(A))) if A.size else 0.0
    return float(np.max(np.sum(np.abs(A), axis=1)))


def lu_factor(A):
    """LU factorisation with partial pivoting, ``P A = L U``.

    Returns ``(lu, perm, sign)``: ``lu`` holds the unit lower factor below
    the diagonal and ``U`` on and above it, ``perm`` is the row order and
    ``sign`` the parity of the permutation.  Zero pivots are left in place;
    callers decide whether that is an error.
    """
    lu = np.array(as_matrix(A), copy=True)
    n = lu.shape[0]
    perm = np.arange(n)
    sign = 1
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        piv = lu[k, k]
        if piv == 0:
            continue
        if k + 1 < n:
            lu[k + 1:, k] /= piv
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm, sign


def _lu_substitute(lu, perm, b):
    n = lu.shape[0]
    y = np.array(b[perm], dtype=complex, copy=True)
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def lu_solve(A, b):
    """Solve ``A x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector of length n or an (n, k) block of right-hand
    sides.  Raises :class:`SingularLinearSystem` if a pivot falls below
    ``1e-14 * ||A||_inf``.
    """
    A = as_matrix(A)
    b = np.asarray(b, dtype=complex)
    n = A.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, matrix is {n}x{n}")
    lu, perm, _ = lu_factor(A)
    anorm = norm_inf(A)
    pivots = np.abs(np.diag(lu))
    if anorm == 0 or pivots.min() < PIVOT_RTOL * anorm:
        raise SingularLinearSystem(
            f"pivot {pivots.min():.3e} below {PIVOT_RTOL:g} * ||A|| = {PIVOT_RTOL * anorm:.3e}")
    return _lu_substitute(lu, perm, b)


def inv(A):
    A = as_matrix(A)
    return lu_solve(A, np.eye(A.shape[0], dtype=complex))


def det(A):
    """Determinant from the LU factors; exactly 0 when a pivot vanishes."""
    lu, _, sign = lu_factor(A)
    d = np.diag(lu)
    if np.any(d == 0):
        return 0j
    return complex(sign * np.prod(d))


def mat_poly_apply(A, k):
    """``A**k`` by repeated multiplication (``A**0`` is the identity)."""
    A = as_matrix(A)
    if k < 0:
        raise ValueError("k must be >= 0")
    out = np.eye(A.shape[0], dtype=complex)
    for _ in range(int(k)):
        out = out @ A
    return out


def mat_exp(A, tol=1e-16, max_terms=60):
    """Matrix exponential by scaling and squaring with a Taylor core.

    ``A`` is scaled by ``2**-s`` until its norm is at most 1/2, the Taylor
    series is summed until a term drops below ``tol`` relative to the
    partial sum, and the result is squared ``s`` times.
    """
    A = as_matrix(A)
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.shape[0]
    anorm = norm_inf(A)
    s = 0
    if anorm > 0.5:
        s = int(np.ceil(np.log2(anorm / 0.5)))
    B = A / 2.0 ** s
    eye = np.eye(n, dtype=complex)
    total = eye.copy()
    term = eye.copy()
    for j in range(1, max_terms + 1):
        term = term @ B / j
        total = total + term
        if norm_inf(term) <= tol * norm_inf(total):
            break
    else:
        raise ConvergenceFailure(f"Taylor series did not reach tol={tol:g} in {max_terms} terms")
    for _ in range(s):
        total = total @ total
    return total


@dataclass(frozen=True)
class Polynomial:
    """Complex polynomial, coefficients in ascending degree."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in self.coeffs[::-1]:
            out = out * z + c
        return out

    def derivative(self):
        if self.degree == 0:
            return Polynomial([0])
        return Polynomial(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def scale(self, z):
        """sum_k |a_k| |z|^k, the natural size against which |p(z)| is judged."""
        r = np.abs(np.asarray(z, dtype=complex))
        out = np.zeros_like(r)
        for c in np.abs(self.coeffs[::-1]):
            out = out * r + c
        return out


def char_poly(A):
    """det(wI - A) via the Faddeev-LeVerrier recursion.

    Limited to n <= 64; beyond that the recursion loses too many digits to
    be worth returning.
    """
    A = as_matrix(A)
    n = A.shape[0]
    if n > 64:
        raise ValueError("char_poly is limited to n <= 64")
    c = np.zeros(n + 1, dtype=complex)
    c[n] = 1.0
    eye = np.eye(n, dtype=complex)
    Mk = eye.copy()
    for k in range(1, n + 1):
        AM = A @ Mk
        c[n - k] = -np.trace(AM) / k
        Mk = AM + c[n - k] * eye
    return Polynomial(c)


def poly_roots(p, tol=1e-12, max_iter=200):
    """All roots of ``p`` (with multiplicity) by Aberth-Ehrlich iteration.

    Starting points sit on a circle whose radius is the Cauchy bound
    ``1 + max |a_k / a_n|``.  A root ``r`` is accepted once
    ``|p(r)| <= tol * sum_k |a_k| |r|^k``.  Exact zero roots (vanishing low
    order coefficients) are split off before iterating.
    """
    if not isinstance(p, Polynomial):
        p = Polynomial(p)
    if p.degree < 1:
        raise ValueError("polynomial must have degree >= 1")
    c = p.coeffs
    nzero = int(np.flatnonzero(c)[0])
    zeros = np.zeros(nzero, dtype=complex)
    q = Polynomial(c[nzero:] / c[-1])
    n = q.degree
    if n == 0:
        return zeros
    if n == 1:
        return np.concatenate([zeros, [-q.coeffs[0]]])
    dq = q.derivative()
    radius = 1.0 + np.max(np.abs(q.coeffs[:-1]))
    # a small angular offset keeps real-coefficient symmetry from trapping pairs
    angles = 2 * np.pi * np.arange(n) / n + 0.4
    z = radius * np.exp(1j * angles)
    offdiag = ~np.eye(n, dtype=bool)
    for it in range(max_iter):
        pv = q(z)
        ok = np.abs(pv) <= tol * q.scale(z)
        if np.all(ok):
            # one more sweep tightens roots that only just passed
            if it > 0:
                z = _aberth_step(q, dq, z, offdiag, np.ones(n, dtype=bool))
            return np.concatenate([zeros, z])
        z = _aberth_step(q, dq, z, offdiag, ~ok)
    raise RootsNotConverged(f"Aberth iteration did not converge in {max_iter} iterations")


def _aberth_step(q, dq, z, offdiag, active):
    pv = q(z)
    dv = dq(z)
    diff = z[:, None] - z[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_diff = np.where(offdiag, 1.0 / np.where(offdiag, diff, 1.0), 0.0)
        ratio = pv / dv
        corr = ratio / (1.0 - ratio * inv_diff.sum(axis=1))
    bad = ~np.isfinite(corr)
    if np.any(bad):
        # stationary point or coincident iterates: nudge instead of dividing by zero
        corr = np.where(bad, -1e-3 * (1 + np.abs(z)) * np.exp(1j * np.arange(len(z))), corr)
    corr = np.where(active | (pv == 0), np.where(pv == 0, 0, corr), 0)
    return z - corr


def polish_eigenvalues(A, guesses, max_iter=8):
    """Refine eigenvalue estimates by Newton's method on det(wI - A).

    Uses d/dw log det(wI - A) = tr((wI - A)^-1), evaluated through an LU
    solve, so the refined values do not depend on how accurately the
    characteristic polynomial coefficients were formed.
    """
    A = as_matrix(A)
    n = A.shape[0]
    eye = np.eye(n, dtype=complex)
    out = np.array(guesses, dtype=complex, copy=True)
    anorm = max(norm_inf(A), 1e-300)
    for k, w in enumerate(out):
        for _ in range(max_iter):
            lu, perm, _ = lu_factor(w * eye - A)
            piv = np.abs(np.diag(lu))
            if piv.min() <= 1e-15 * anorm:
                break
            tr = np.trace(_lu_substitute(lu, perm, eye))
            if tr == 0:
                break
            step = 1.0 / tr
            w = w - step
            if abs(step) <= 4e-16 * max(abs(w), anorm * 1e-3):
                break
        out[k] = w
    return out


def eigenvalues(A, tol=1e-12):
    """Eigenvalues as polished roots of the characteristic polynomial."""
    A = as_matrix(A)
    return polish_eigenvalues(A, poly_roots(char_poly(A), tol=tol))


def eigenvector(A, lam, iters=3):
    """Right eigenvector for a known eigenvalue by inverse iteration.

    Tiny pivots of ``A - lam I`` are replaced by ``eps * ||A||`` (the usual
    inverse-iteration trick), so an essentially exact ``lam`` is fine.
    """
    A = as_matrix(A)
    n = A.shape[0]
    lu, perm, _ = lu_factor(A - lam * np.eye(n))
    floor = np.finfo(float).eps * max(norm_inf(A), 1e-300)
    d = np.diag(lu).copy()
    small = np.abs(d) < floor
    d[small] = floor
    lu[np.diag_indices(n)] = d
    v = np.ones(n, dtype=complex) / np.sqrt(n)
    for _ in range(iters):
        v = _lu_substitute(lu, perm, v)
        v = v / v[np.argmax(np.abs(v))]
    return v
