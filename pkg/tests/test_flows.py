import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from kpcm.checks import configuration_distance
from kpcm.cm_core import PhaseState, build_lax, eom_accel
from kpcm.errors import PoleCollision, StepUnderflow
from kpcm.flows import (HierarchyTimes, Trajectory, conserved_drift, evolve_multi, flow_derivative,
                        hamiltonian_values, integrate)
from kpcm.linalg import eigenvalues


def test_hierarchy_times_validation():
    t = HierarchyTimes({2: 0.1}, **{})
    assert t == {2: 0.1}
    with pytest.raises(ValueError):
        HierarchyTimes({0: 1.0})
    with pytest.raises(ValueError):
        HierarchyTimes({2: np.nan})
    with pytest.raises(ValueError):
        HierarchyTimes({k: 0.1 for k in range(1, 10)})
    with pytest.raises(TypeError):
        t[3] = 1.0
    assert t.shifted(3, 0.5) == {2: 0.1, 3: 0.5}
    assert t.shifted(2, 0.1)[2] == pytest.approx(0.2)


def test_flow_derivative_examples():
    s = PhaseState(1, [0.2, 1.1, -0.9], [0.3, -0.1, 0.2])
    dx, dp = flow_derivative(s, 1)
    assert np.allclose(dx, -1) and np.allclose(dp, 0, atol=1e-14)
    dx, dp = flow_derivative(PhaseState(1, [0], [0.5]), 2)
    assert np.allclose(dx, 1.0) and np.allclose(dp, 0)
    dx, dp = flow_derivative(PhaseState(1, [0], [1]), 3)
    assert np.allclose(dx, -4) and np.allclose(dp, 0)


def test_free_particle():
    traj = integrate(PhaseState(1, [0.25j], [0.3]), 2, 1.0)
    assert traj.t[0] == 0 and traj.t[-1] == 1.0
    assert traj.final.x[0] == pytest.approx(0.25j + 0.6, abs=1e-13)
    assert traj.final.p[0] == 0.3


def test_constant_t3_velocity():
    traj = integrate(PhaseState(1, [0.4], [0]), 3, 0.1)
    assert traj.final.x[0] == pytest.approx(0.3, abs=1e-13)


def test_symmetric_pair_center_of_mass():
    traj = integrate(PhaseState(1, [-1.0, 1.0], [-1.0, 1.0]), 2, 1.0)
    com = traj.positions().sum(axis=1)
    assert np.max(np.abs(com)) <= 1e-10
    assert len(traj) > 2


def test_backward_run_times_decrease():
    s = PhaseState(1, [-1.0, 1.0], [1.0, -0.5])
    traj = integrate(s, 2, -0.4)
    assert np.all(np.diff(traj.t) < 0) and traj.t[-1] == -0.4


def test_zero_time_and_rtol_guard():
    s = PhaseState(1, [0.0], [0.1])
    assert len(integrate(s, 2, 0.0)) == 1
    with pytest.raises(ValueError):
        integrate(s, 2, 1.0, rtol=1e-3)


def test_time_reversal(state_factory):
    s = state_factory(4)
    back = integrate(integrate(s, 2, 0.5, 1e-10).final, 2, -0.5, 1e-10).final
    assert max(np.abs(back.x - s.x).max(), np.abs(back.p - s.p).max()) <= 10 * 1e-10


def test_evolve_multi_examples(state_factory):
    s = state_factory(3)
    assert evolve_multi(s, {}) is s
    shifted = evolve_multi(s, {1: 0.37})
    assert np.allclose(shifted.x, s.x - 0.37, atol=1e-13)
    assert np.allclose(shifted.p, s.p, atol=1e-13)


def test_evolve_multi_order_independent(state_factory):
    s = state_factory(3)
    a = evolve_multi(s, {2: 0.1, 3: 0.05})
    b = evolve_multi(s, {2: 0.1, 3: 0.05}, order=[3, 2])
    assert configuration_distance(a.x, b.x, s.gamma, a.p, b.p) <= 1e-7
    with pytest.raises(ValueError):
        evolve_multi(s, {2: 0.1}, order=[3])


@pytest.mark.parametrize("n, m", [(2, 2), (3, 3), (4, 4)])
def test_isospectral_drift(n, m, state_factory):
    s = state_factory(n, 1.0)
    traj = integrate(s, m, 1.0 if m == 2 else 0.3, 1e-10)
    scale = max(1.0, np.abs(hamiltonian_values(s, n)).max())
    assert conserved_drift(traj, n) <= 100 * 1e-10 * scale
    ev0, ev1 = eigenvalues(build_lax(s)), eigenvalues(build_lax(traj.final))
    cost = np.abs(ev0[:, None] - ev1[None, :])
    r, c = linear_sum_assignment(cost)
    assert cost[r, c].max() <= 1e-7


def test_single_sample_drift_is_zero():
    traj = Trajectory(2)
    traj.append(0.0, PhaseState(1, [0, 1], [0, 0]))
    assert conserved_drift(traj, 2) == 0
    with pytest.raises(ValueError):
        conserved_drift(Trajectory(2), 2)


def test_second_difference_matches_acceleration(state_factory):
    s = state_factory(3)
    h = 1e-3
    xs = [integrate(s, 2, k * h, 1e-12).final.x if k else s.x for k in (-2, -1, 0, 1, 2)]
    acc = (-xs[0] + 16 * xs[1] - 30 * xs[2] + 16 * xs[3] - xs[4]) / (12 * h * h)
    assert np.abs(acc - eom_accel(s)).max() <= 1e-5 * max(1, np.abs(eom_accel(s)).max())


def test_collision_keeps_partial_trajectory():
    # two particles at rest attract on the real line and meet in finite time
    s = PhaseState(1.0, [-1.0, 1.0], [0, 0])
    with pytest.raises((PoleCollision, StepUnderflow)) as info:
        integrate(s, 2, 5.0)
    traj = info.value.trajectory
    assert len(traj) > 1 and 0 < traj.t[-1] < 5.0
    assert traj.final.min_separation() < 0.1
