import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kpcm.errors import ConvergenceFailure, RootsNotConverged, SingularLinearSystem
from kpcm.linalg import (Polynomial, char_poly, det, eigenvalues, eigenvector, inv, lu_factor,
                         lu_solve, mat_exp, mat_poly_apply, norm_inf, poly_roots)


def sorted_c(z):
    return np.array(sorted(np.asarray(z, dtype=complex), key=lambda v: (round(v.real, 8), v.imag)))


# ---------------------------------------------------------------- worked examples

@pytest.mark.parametrize("A, b, x", [
    (np.eye(2), [3, 4], [3, 4]),
    (np.diag([2.0, 5.0]), [2, 5], [1, 1]),
    ([[0, 1], [1, 0]], [7 + 1j, -2], [-2, 7 + 1j]),
])
def test_lu_solve_examples(A, b, x):
    assert np.allclose(lu_solve(A, b), x, atol=1e-15)


@pytest.mark.parametrize("A, d", [(np.eye(3), 1), (np.diag([2.0, 3.0]), 6), ([[0, 1], [1, 0]], -1)])
def test_det_examples(A, d):
    assert det(A) == pytest.approx(d, abs=1e-15)


def test_det_frozen_value():
    A = np.array([[2, 1j, 0], [1, 3, -1], [0.5, 0, 1 + 1j]])
    # cofactor expansion along the first row
    ref = 2 * (3 * (1 + 1j) - 0) - 1j * (1 * (1 + 1j) + 0.5) + 0
    assert abs(det(A) - ref) < 1e-14


def test_mat_exp_examples():
    assert np.allclose(mat_exp(np.zeros((3, 3))), np.eye(3), atol=0)
    assert np.allclose(mat_exp([[0, 1], [0, 0]]), [[1, 1], [0, 1]], atol=1e-15)
    E = mat_exp(np.diag([1.0, -1.0]))
    assert E[0, 0] == pytest.approx(2.718282, abs=1e-6)
    assert E[1, 1] == pytest.approx(0.367879, abs=1e-6)
    # rotation generator
    R = mat_exp([[0, -0.7], [0.7, 0]])
    assert np.allclose(R, [[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]], atol=1e-15)


def test_char_poly_examples():
    assert np.allclose(char_poly(np.diag([1.0, 2.0])).coeffs, [2, -3, 1])
    assert np.allclose(char_poly(np.zeros((2, 2))).coeffs, [0, 0, 1])
    assert np.allclose(char_poly([[0, 1], [-1, 0]]).coeffs, [1, 0, 1])


def test_poly_roots_examples():
    assert np.allclose(sorted_c(poly_roots([-1, 0, 1])), [-1, 1], atol=1e-13)
    assert np.allclose(sorted_c(poly_roots([2, -3, 1])), [1, 2], atol=1e-13)
    r = sorted_c(poly_roots([-1, 0, 0, 1]))
    assert np.allclose(r, [-0.5 - 0.8660254037844386j, -0.5 + 0.8660254037844386j, 1], atol=1e-12)


def test_poly_roots_zero_roots_and_linear():
    assert np.allclose(sorted_c(poly_roots([0, 0, -2, 1])), [0, 0, 2], atol=1e-14)
    assert np.allclose(poly_roots([3, 1]), [-3])
    with pytest.raises(ValueError):
        poly_roots([5])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_poly_roots_reports_nonconvergence():
    with pytest.raises(RootsNotConverged):
        poly_roots(np.poly(np.arange(1, 21))[::-1], max_iter=2)


def test_mat_poly_apply_examples():
    A = np.array([[0, 1], [0, 0]])
    assert np.allclose(mat_poly_apply(A, 0), np.eye(2))
    assert np.allclose(mat_poly_apply(np.diag([2.0]), 1), [[2.0]])
    assert np.allclose(mat_poly_apply(A, 2), 0)
    with pytest.raises(ValueError):
        mat_poly_apply(A, -1)


def test_polynomial_trims_and_evaluates():
    p = Polynomial([1, 2, 0, 0])
    assert p.degree == 1
    assert p(3) == 7
    assert p.derivative().coeffs.tolist() == [2]


# ---------------------------------------------------------------- errors

def test_singular_system_raises():
    with pytest.raises(SingularLinearSystem):
        lu_solve([[1, 2], [2, 4]], [1, 1])


def test_singular_det_is_zero_not_error():
    assert det([[1, 2], [2, 4]]) == 0


def test_bad_shapes():
    with pytest.raises(ValueError):
        lu_solve(np.ones((2, 3)), [1, 1])
    with pytest.raises(ValueError):
        lu_solve(np.eye(2), [1, 2, 3])
    with pytest.raises(ValueError):
        det([[np.nan]])
    with pytest.raises(ValueError):
        char_poly(np.eye(65))


def test_mat_exp_series_budget():
    with pytest.raises(ConvergenceFailure):
        mat_exp(np.eye(2) * 0.4, max_terms=2)


# ---------------------------------------------------------------- properties

def complex_matrices(n_max=8):
    def build(n):
        elems = st.floats(-3, 3, allow_nan=False)
        return st.tuples(arrays(float, (n, n), elements=elems), arrays(float, (n, n), elements=elems))
    return st.integers(1, n_max).flatmap(build).map(lambda ab: ab[0] + 1j * ab[1])


def well_conditioned(A):
    n = A.shape[0]
    return A + (norm_inf(A) + 1) * np.eye(n)


@settings(max_examples=60, deadline=None)
@given(complex_matrices())
def test_det_inverse_consistency(A):
    A = well_conditioned(A)
    Ainv = np.column_stack([lu_solve(A, e) for e in np.eye(A.shape[0])])
    assert abs(det(A) * det(Ainv) - 1) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(complex_matrices(), complex_matrices())
def test_det_multiplicative(A, B):
    n = min(A.shape[0], B.shape[0])
    A, B = A[:n, :n], B[:n, :n]
    lhs, rhs = det(A @ B), det(A) * det(B)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs), norm_inf(A) ** n * norm_inf(B) ** n)


@settings(max_examples=60, deadline=None)
@given(complex_matrices())
def test_lu_residual_and_sign(A):
    A = well_conditioned(A)
    b = np.arange(1, A.shape[0] + 1) * (1 - 0.5j)
    x = lu_solve(A, b)
    assert norm_inf((A @ x - b)[:, None]) <= 1e-12 * norm_inf(A) * max(1, np.abs(x).max())
    assert np.allclose(inv(A) @ A, np.eye(A.shape[0]), atol=1e-11)
    lu, perm, sign = lu_factor(A)
    assert sign in (1, -1)


@settings(max_examples=60, deadline=None)
@given(complex_matrices())
def test_mat_exp_group_property(A):
    A = A * (min(10.0, norm_inf(A)) / max(norm_inf(A), 1e-300))
    assert norm_inf(mat_exp(A) @ mat_exp(-A) - np.eye(A.shape[0])) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(complex_matrices(), st.floats(-1, 1), st.floats(-1, 1))
def test_mat_exp_commuting_product(C, a, b):
    C = C / max(1.0, norm_inf(C))
    X = a * C + 0.3 * C @ C
    Y = b * C - 0.2 * C @ C @ C
    ref = mat_exp(X + Y)
    assert norm_inf(mat_exp(X) @ mat_exp(Y) - ref) <= 1e-9 * max(1.0, norm_inf(ref))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_char_poly_roots_match_spectrum(n, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    lam = rng.uniform(0.5, 2, n) * np.exp(2j * np.pi * rng.uniform(size=n))
    A = Q @ np.diag(lam) @ Q.conj().T
    ev = eigenvalues(A)
    cost = np.abs(ev[:, None] - lam[None, :])
    from scipy.optimize import linear_sum_assignment
    r, c = linear_sum_assignment(cost)
    assert cost[r, c].max() <= 1e-8


def test_eigenvector_of_known_eigenvalue():
    A = np.array([[2, 1], [0, 3]], dtype=complex)
    v = eigenvector(A, 3.0)
    assert np.allclose(A @ v, 3 * v, atol=1e-12)
