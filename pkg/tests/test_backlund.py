import numpy as np
import pytest

from kpcm.backlund import (BacklundPair, appendix_flow_check, appendix_t3_velocity, appendix_t4_velocity,
                           b6_defect, backlund_solve, backward_residual, backward_solve, canonical_defect,
                           expansion_defect, fit_exponent, forward_residual, gen_function, gen_function_grad,
                           schur_table, series_seed, series_y)
from kpcm.cm_core import PhaseState, grad_p
from kpcm.ensemble import random_points, random_state
from kpcm.errors import NewtonDivergence, PoleCollision

GAMMAS = [1.0, 1j, 0.5]
HALF_LN3 = 0.5 * np.log(3.0)


def bk_state(seed, n, gamma=1.0):
    return random_state(np.random.default_rng(seed), n, gamma, p_scale=1.0, p_floor=0.5)


# ---------------------------------------------------------------- solver

def test_single_particle_closed_form():
    s = PhaseState(1, [0], [0])
    pair = backlund_solve(s, -2)
    assert pair.target_y[0] == pytest.approx(-HALF_LN3, abs=1e-13)
    assert pair.target_y[0].real == pytest.approx(-0.549306, abs=1e-6)
    assert pair.target_p[0] == pytest.approx(0, abs=1e-13)
    assert np.abs(forward_residual(s, -2, pair.target_y)).max() <= 1e-12
    assert pair.iterations >= 1


def test_single_particle_generating_function():
    s = PhaseState(1, [0], [0])
    pair = backlund_solve(s, -2)
    x, y = s.x, pair.target_y
    F = gen_function(x, y, -2, 1)
    assert F == pytest.approx(-np.log(np.sinh(x[0] - y[0])) + 2 * (x[0] - y[0]))
    dx, dy = gen_function_grad(x, y, -2, 1)
    assert dx[0] == pytest.approx(0, abs=1e-12)
    assert canonical_defect(pair) <= 1e-12


def test_seed_follows_large_mu_branch():
    s = bk_state(1, 3)
    mu = 200.0
    pair = backlund_solve(s, mu)
    assert np.abs(pair.target_y - (s.x + 1 / mu)).max() <= 5 / abs(mu) ** 2
    assert np.allclose(series_seed(s, mu), s.x + 1 / mu - s.p / mu ** 2)


def test_translation_invariance():
    rng = np.random.default_rng(4)
    x = rng.normal(size=3) + 1j * rng.normal(size=3)
    y = x + 0.3 + 0.1j
    c = 0.7 - 0.2j
    a = gen_function(x, y, 5.0, 0.8)
    b = gen_function(x + c, y + c, 5.0, 0.8)
    # principal logs may jump by 2 pi i
    d = (a - b) / (2j * np.pi)
    assert abs(d - round(d.real)) <= 1e-12


def test_gen_function_rejects_coincidence():
    with pytest.raises(PoleCollision):
        gen_function([0.0, 1.0], [0.0, 2.0], 1.0, 1.0)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_canonical_structure(gamma):
    rng = np.random.default_rng(11)
    for n in (1, 2, 3, 4, 5):
        s = random_state(rng, n, gamma, p_scale=1.0, p_floor=0.5)
        mu = random_points(rng, 1, 10.0, 2.0)[0]
        pair = backlund_solve(s, mu)
        assert canonical_defect(pair, relative=True) <= 1e-10


def test_broken_pair_is_detected():
    s = bk_state(2, 3)
    pair = backlund_solve(s, 12.0)
    y = pair.target_y.copy()
    y[0] += 0.1
    broken = BacklundPair(s, y, pair.target_p, pair.mu)
    assert canonical_defect(broken) >= 1e-3


def test_newton_divergence_reported():
    s = PhaseState(1, [0.0, 0.1], [0.0, 0.0])
    with pytest.raises(NewtonDivergence):
        # seed far from any solution on a tiny parameter
        backlund_solve(s, 1e-3, y_init=[50.0, -50.0])


def test_backward_solve_residual():
    s = bk_state(3, 3, 1j)
    z = backward_solve(s, 15.0)
    assert np.abs(backward_residual(s, 15.0, z)).max() <= 1e-10


# ---------------------------------------------------------------- Schur actions and series

def test_schur_table_examples():
    s = bk_state(5, 4, 0.5)
    t = schur_table(s)
    assert np.all(t.action(1) == -1)
    assert np.array_equal(t.action(2), s.p)
    one = schur_table(PhaseState(1, [0.2], [0]))
    assert one.action(3)[0] == pytest.approx(-1 / 3)
    assert one.action(4)[0] == pytest.approx(0)


def test_schur_table_finite_difference_cross_check():
    s = bk_state(6, 3)
    coarse = schur_table(s, rtol=1e-12, fd_step=1e-4).fd_defect
    fine = schur_table(s, rtol=1e-12, fd_step=1e-5).fd_defect
    # central differences: the mismatch is pure O(h^2) truncation
    assert 50 <= coarse / fine <= 200
    assert schur_table(s, rtol=1e-12, fd_step=3e-6).fd_defect <= 1e-6


@pytest.mark.parametrize("gamma", GAMMAS)
def test_expansion_orders(gamma):
    s = bk_state(8, 3, gamma)
    phase = np.exp(0.4j)
    mus = [10 * phase, 20 * phase, 40 * phase]
    pairs = [backlund_solve(s, mu) for mu in mus]
    for K in (1, 2, 3):
        d = [expansion_defect(s, mu, K, pair) for mu, pair in zip(mus, pairs)]
        assert abs(fit_exponent(mus, d) + (K + 1)) <= 0.3
    d1 = expansion_defect(s, mus[2], 1, pairs[2])
    d2 = expansion_defect(s, mus[2], 2, pairs[2])
    assert d2 < d1


def test_odd_only_single_particle_series():
    s = PhaseState(1, [0.1], [0])
    for mu in (20.0, 40.0):
        y = backlund_solve(s, mu).target_y
        # h_2 = 0 and h_3 = -1/3 at p = 0
        approx = s.x + 1 / mu + 1 / (3 * mu ** 3)
        assert np.abs(y - approx).max() <= 10 / mu ** 4
    assert series_y(s, 20.0, 3)[0] == pytest.approx(0.1 + 1 / 20 + 1 / (3 * 20 ** 3))
    with pytest.raises(ValueError):
        series_y(s, 20.0, 5)


def test_fit_exponent_exact_power():
    mus = np.array([10, 20, 40.0])
    assert fit_exponent(mus, 3 * mus ** -2.5) == pytest.approx(-2.5)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_subtracted_equation(gamma):
    for n in (1, 3, 5):
        assert b6_defect(bk_state(20 + n, n, gamma), 15.0 * np.exp(0.3j)) <= 1e-8


# ---------------------------------------------------------------- appendix flows

def test_appendix_single_particle():
    s = PhaseState(1, [0.0], [1.0])
    assert appendix_t3_velocity(s)[0] == pytest.approx(-4)
    assert grad_p(s, 3)[0] == pytest.approx(-4)
    assert appendix_t4_velocity(s)[0] == pytest.approx(8)
    assert grad_p(s, 4)[0] == pytest.approx(8)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_appendix_flows_match_gradients(gamma):
    for seed in range(5):
        s = bk_state(seed, 4, gamma)
        d3, d4 = appendix_flow_check(s)
        scale = max(1.0, np.abs(grad_p(s, 4)).max())
        assert d3 <= 1e-10 * scale and d4 <= 1e-10 * scale
