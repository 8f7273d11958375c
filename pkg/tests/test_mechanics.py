"""Tests for the mechanics layer.

Oracles: hand-derived momenta/accelerations, closed-form trajectories
(uniform gravity is integrated exactly by RK4; the harmonic oscillator has
a cosine solution), and hand-computed conserved charges evaluated along
integrated motion.
"""

import math

import numpy as np
import pytest

from noetherlab import (
    coord, diff, equal_numeric, evaluate, num, parse_expr, substitute,
    time_var, to_string, vel,
)
from noetherlab.mechanics import (
    ChargeDrift, Lagrangian, MechanicsError, Trajectory,
    acceleration_function, check_charge_conserved, conjugate_momenta,
    euler_lagrange, integrate_trajectory, load_trajectory_csv,
    noether_charge, save_trajectory_csv, total_time_derivative,
    velocity_hessian,
)


def gravity_1d(m=1.0, g=1.0) -> Lagrangian:
    return Lagrangian.from_dsl("m/2*v1^2 - m*g*q1", n_dof=1,
                               constants={"m": m, "g": g})


def gravity_2d(m=1.0, g=1.0) -> Lagrangian:
    return Lagrangian.from_dsl("m/2*(v1^2 + v2^2) - m*g*q2", n_dof=2,
                               constants={"m": m, "g": g})


def harmonic(m=1.0, k=1.0) -> Lagrangian:
    return Lagrangian.from_dsl("m/2*v1^2 - k/2*q1^2", n_dof=1,
                               constants={"m": m, "k": k})


# ---------------------------------------------------------------------------
# structure


def test_conjugate_momentum_is_mass_times_velocity():
    p, = conjugate_momenta(gravity_1d())
    assert equal_numeric(p, parse_expr("m*v1", n_dof=1))


def test_velocity_hessian_gravity_2d():
    H = velocity_hessian(gravity_2d())
    assert equal_numeric(H[0][0], parse_expr("m", n_dof=2))
    assert equal_numeric(H[1][1], parse_expr("m", n_dof=2))
    assert H[0][1] == num(0) and H[1][0] == num(0)


def test_euler_lagrange_gravity():
    a, = euler_lagrange(gravity_1d())
    assert equal_numeric(a, parse_expr("-g", n_dof=1))


def test_euler_lagrange_harmonic():
    a, = euler_lagrange(harmonic())
    assert equal_numeric(a, parse_expr("-k/m*q1", n_dof=1))


def test_euler_lagrange_gravity_2d():
    a1, a2 = euler_lagrange(gravity_2d())
    assert equal_numeric(a1, num(0))
    assert equal_numeric(a2, parse_expr("-g", n_dof=2))


def test_euler_lagrange_rejects_coupled_hessian():
    L = Lagrangian.from_dsl("1/2*v1^2 + 1/2*v2^2 + 1/4*v1*v2 - q1^2",
                            n_dof=2, constants={})
    with pytest.raises(MechanicsError):
        euler_lagrange(L)


def test_pointwise_acceleration_handles_coupled_hessian():
    # M = [[1, 1/4], [1/4, 1]], rhs = (-2 q1, 0)
    # => a = (16/15) * (-2 q1, q1 / 2)
    L = Lagrangian.from_dsl("1/2*v1^2 + 1/2*v2^2 + 1/4*v1*v2 - q1^2",
                            n_dof=2, constants={})
    accel = acceleration_function(L)
    a = accel(np.array([1.0, 0.3]), np.array([0.0, 0.0]), 0.0)
    assert a == pytest.approx([-32.0 / 15.0, 8.0 / 15.0])


def test_lagrangian_rejects_unknown_symbols_when_constants_given():
    with pytest.raises(Exception):
        Lagrangian.from_dsl("m*v1^2 - zz*q1", n_dof=1, constants={"m": 1.0})


# ---------------------------------------------------------------------------
# integration


def test_gravity_trajectory_matches_closed_form_exactly():
    # q(t) = q0 + v0 t - g t^2 / 2 is quadratic: RK4 integrates it exactly
    L = gravity_1d(m=2.0, g=9.8)
    tr = integrate_trajectory(L, q0=[1.0], v0=[3.0], t0=0.0, t1=2.0, n_steps=40)
    expected_q = 1.0 + 3.0 * tr.times - 0.5 * 9.8 * tr.times ** 2
    expected_v = 3.0 - 9.8 * tr.times
    assert np.allclose(tr.coords[:, 0], expected_q, atol=1e-12)
    assert np.allclose(tr.vels[:, 0], expected_v, atol=1e-12)


def test_harmonic_trajectory_matches_cosine():
    L = harmonic()
    T = 2 * math.pi
    tr = integrate_trajectory(L, q0=[1.0], v0=[0.0], t0=0.0, t1=T, n_steps=1000)
    assert np.allclose(tr.coords[:, 0], np.cos(tr.times), atol=1e-8)
    assert np.allclose(tr.vels[:, 0], -np.sin(tr.times), atol=1e-8)


def test_rk4_fourth_order_convergence():
    # endpoint away from a full period, where the h^4 term does not cancel
    L = harmonic()
    T = 2.3

    def endpoint_error(n_steps):
        tr = integrate_trajectory(L, q0=[1.0], v0=[0.0], t0=0.0, t1=T,
                                  n_steps=n_steps)
        return abs(tr.coords[-1, 0] - math.cos(T))

    e1, e2 = endpoint_error(50), endpoint_error(100)
    assert 12 < e1 / e2 < 22  # fourth order: ratio ~ 16


def test_integration_with_nonzero_start_time():
    L = gravity_1d()
    tr = integrate_trajectory(L, q0=[0.0], v0=[0.0], t0=1.0, t1=3.0, n_steps=20)
    # a = -g regardless of clock offset
    expected = -0.5 * (tr.times - 1.0) ** 2
    assert np.allclose(tr.coords[:, 0], expected, atol=1e-12)


# ---------------------------------------------------------------------------
# total time derivative


def test_total_time_derivative_of_gauge_function():
    # D(-m q1 + m g t^2 / 2) = -m v1 + m g t
    e = parse_expr("-m*q1 + m*g/2*t^2", n_dof=1)
    d = total_time_derivative(e, n_dof=1)
    assert equal_numeric(d, parse_expr("-m*v1 + m*g*t", n_dof=1))


def test_total_time_derivative_rejects_velocity_dependence():
    with pytest.raises(MechanicsError):
        total_time_derivative(parse_expr("v1*t", n_dof=1), n_dof=1)


# ---------------------------------------------------------------------------
# conserved charges


def test_time_translation_charge_is_minus_energy():
    # xi = 1, eta = 0, G = 0  =>  Q = L - p v = -(m v^2/2 + m g q)
    L = gravity_1d()
    Q = noether_charge(L, xi=num(1), eta=[num(0)])
    assert equal_numeric(Q, parse_expr("-(m/2*v1^2 + m*g*q1)", n_dof=1))
    tr = integrate_trajectory(L, q0=[0.5], v0=[2.0], t0=0.0, t1=3.0, n_steps=300)
    drift = check_charge_conserved(L, Q, tr)
    assert drift.rel_drift < 1e-9
    assert drift.initial == pytest.approx(-(0.5 * 4.0 + 0.5))


def test_boost_charge_on_gravity_recovers_initial_position():
    # xi = 0, eta = -t, G = -m q1 + m g t^2/2
    # => Q = -m v1 t + m q1 - m g t^2 / 2, equal to m q0 on shell
    L = gravity_1d(m=2.0, g=3.0)
    Q = noether_charge(L, xi=num(0), eta=[-time_var()],
                       gauge=parse_expr("-m*q1 + m*g/2*t^2", n_dof=1))
    assert equal_numeric(
        Q, parse_expr("-m*v1*t + m*q1 - m*g/2*t^2", n_dof=1))
    tr = integrate_trajectory(L, q0=[0.7], v0=[-1.2], t0=0.0, t1=2.0, n_steps=200)
    drift = check_charge_conserved(L, Q, tr)
    assert drift.rel_drift < 1e-10
    assert drift.initial == pytest.approx(2.0 * 0.7)


def test_rotation_charge_on_planar_gravity():
    # xi = 0, eta = (q2 + g t^2/2, -q1), G = m g t q1
    # => Q = m v1 (q2 + g t^2/2) - m v2 q1 - m g t q1
    L = gravity_2d(m=1.5, g=2.0)
    eta1 = parse_expr("q2 + g/2*t^2", n_dof=2)
    eta2 = parse_expr("-q1", n_dof=2)
    G = parse_expr("m*g*t*q1", n_dof=2)
    Q = noether_charge(L, xi=num(0), eta=[eta1, eta2], gauge=G)
    expected = parse_expr("m*v1*(q2 + g/2*t^2) - m*v2*q1 - m*g*t*q1", n_dof=2)
    assert equal_numeric(Q, expected)
    tr = integrate_trajectory(L, q0=[0.4, -0.8], v0=[1.1, 0.6],
                              t0=0.0, t1=2.5, n_steps=250)
    drift = check_charge_conserved(L, Q, tr)
    assert drift.rel_drift < 1e-10


def test_rotation_charge_without_gravity_is_angular_momentum():
    L = gravity_2d(m=1.0, g=0.0)
    eta1 = parse_expr("q2", n_dof=2)
    eta2 = parse_expr("-q1", n_dof=2)
    Q = noether_charge(L, xi=num(0), eta=[eta1, eta2])
    assert equal_numeric(Q, parse_expr("-m*(q1*v2 - q2*v1)", n_dof=2))


def test_non_conserved_control_quantity_shows_drift():
    # momentum is not conserved in uniform gravity: dp/dt = -m g
    L = gravity_1d()
    p = parse_expr("m*v1", n_dof=1)
    tr = integrate_trajectory(L, q0=[0.0], v0=[1.0], t0=0.0, t1=2.0, n_steps=100)
    drift = check_charge_conserved(L, p, tr)
    assert drift.rel_drift > 0.1
    assert not drift.conserved(1e-6)


def test_noether_charge_validates_eta_length():
    with pytest.raises(MechanicsError):
        noether_charge(gravity_2d(), xi=num(0), eta=[num(1)])


# ---------------------------------------------------------------------------
# CSV round trip


def test_trajectory_csv_round_trip(tmp_path):
    L = gravity_2d()
    tr = integrate_trajectory(L, q0=[0.1, 0.2], v0=[0.3, -0.4],
                              t0=0.0, t1=1.0, n_steps=17)
    path = tmp_path / "trajectory.csv"
    save_trajectory_csv(tr, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,q1,q2,v1,v2"
    back = load_trajectory_csv(path)
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.coords, tr.coords)
    assert np.array_equal(back.vels, tr.vels)


def test_load_trajectory_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(MechanicsError):
        load_trajectory_csv(path)
