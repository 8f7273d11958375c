"""Tests for transformation families, gauge extraction, and symmetry checks.

Gauge construction is checked three independent ways: hand-derived closed
forms, a scipy.quad line-integral oracle for the homotopy formula, and a
round-trip property (differentiate a random polynomial gauge, then
reconstruct it).
"""

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from noetherlab import (
    coord, diff, equal_numeric, evaluate, num, parse_expr, pow_,
    substitute, time_var, to_string, vel,
)
from noetherlab.mechanics import (
    Lagrangian, check_charge_conserved, integrate_trajectory,
    total_time_derivative,
)
from noetherlab.symmetry import (
    GaugeExtraction, InfinitesimalGenerator, PointFamily, PointTransform,
    SymmetryCertificate, SymmetryError, check_equivalence,
    check_infinitesimal, check_variational_symmetry, extract_gauge,
    infinitesimal_of, is_unimodular, jacobian_determinant,
    pullback_lagrangian,
)

M, G = 1.0, 1.0
CONSTS = {"m": M, "g": G}


def gravity_1d() -> Lagrangian:
    return Lagrangian.from_dsl("m/2*v1^2 - m*g*q1", n_dof=1, constants=CONSTS)


def gravity_2d() -> Lagrangian:
    return Lagrangian.from_dsl("m/2*(v1^2 + v2^2) - m*g*q2", n_dof=2,
                               constants=CONSTS)


def boost_family() -> PointFamily:
    return PointFamily.from_dsl(["q1 - s*t"], n_dof=1, constants=CONSTS)


def rotation_gravity_family() -> PointFamily:
    return PointFamily.from_dsl(
        ["q1*cos(s) + q2*sin(s) + g/2*t^2*sin(s)",
         "-q1*sin(s) + q2*cos(s) + g/2*t^2*(cos(s) - 1)"],
        n_dof=2, constants=CONSTS)


# ---------------------------------------------------------------------------
# families and generators


def test_family_is_identity_at_zero():
    assert boost_family().is_identity_at_zero()
    assert rotation_gravity_family().is_identity_at_zero()
    shifted = PointFamily.from_dsl(["q1 + 1 + s"], n_dof=1)
    assert not shifted.is_identity_at_zero()


def test_family_validation():
    with pytest.raises(SymmetryError):
        PointFamily.from_dsl(["q1", "q1"], n_dof=1)
    with pytest.raises(SymmetryError):
        PointFamily.from_dsl(["q1 + s*v1"], n_dof=1)


def test_freeze_substitutes_parameter_exactly():
    fam = boost_family()
    tr = fam.freeze(1)
    assert equal_numeric(tr.qprime[0], parse_expr("q1 - t", n_dof=1))
    half = fam.freeze(0.5)
    assert evaluate(half.qprime[0], {"q1": 1.0, "t": 2.0}) == pytest.approx(0.0)
    with pytest.raises(SymmetryError):
        PointTransform.from_dsl(["q1 + s"], n_dof=1)


def test_infinitesimal_of_boost_family():
    gen = infinitesimal_of(boost_family())
    assert equal_numeric(gen.xi, num(0))
    assert equal_numeric(gen.eta[0], -time_var())


def test_infinitesimal_of_rotation_family():
    gen = infinitesimal_of(rotation_gravity_family())
    assert equal_numeric(gen.xi, num(0))
    assert equal_numeric(gen.eta[0], parse_expr("q2 + g/2*t^2", n_dof=2))
    assert equal_numeric(gen.eta[1], parse_expr("-q1", n_dof=2))


def test_infinitesimal_of_rejects_non_identity_family():
    fam = PointFamily.from_dsl(["q1 + 1 + s"], n_dof=1)
    with pytest.raises(SymmetryError):
        infinitesimal_of(fam)


def test_infinitesimal_gauge_from_gauge_family():
    # d/ds at 0 of (-m s q1 + m s^2 t / 2 + m g s t^2 / 2)
    fam = boost_family()
    F = parse_expr("-m*s*q1 + m/2*s^2*t + m*g/2*s*t^2", n_dof=1)
    gen = infinitesimal_of(fam, gauge_family=F)
    assert equal_numeric(gen.gauge, parse_expr("-m*q1 + m*g/2*t^2", n_dof=1))


# ---------------------------------------------------------------------------
# pullback


def test_pullback_without_transformation_is_identity():
    L = gravity_1d()
    identity = PointTransform.from_dsl(["q1"], n_dof=1, tprime="t")
    assert equal_numeric(pullback_lagrangian(L, identity), L.expr)


def test_pullback_of_boost_matches_hand_expansion():
    # q' = q - s t, v' = v - s:
    # L' = m(v-s)^2/2 - m g (q - s t)
    L = gravity_1d()
    pulled = pullback_lagrangian(L, boost_family())
    expected = parse_expr("m/2*(v1 - s)^2 - m*g*(q1 - s*t)", n_dof=1)
    assert equal_numeric(pulled, expected)


def test_pullback_includes_time_dilation_factor():
    # t' = 2t  =>  v' = v/2 and dt'/dt = 2: kinetic term halves
    L = Lagrangian.from_dsl("1/2*v1^2", n_dof=1)
    tr = PointTransform.from_dsl(["q1"], n_dof=1, tprime="2*t")
    pulled = pullback_lagrangian(L, tr)
    assert equal_numeric(pulled, parse_expr("1/4*v1^2", n_dof=1))


# ---------------------------------------------------------------------------
# gauge extraction


def test_extract_gauge_of_boost_residual():
    # residual = -m s v1 + m s^2/2 + m g s t
    L = gravity_1d()
    residual = pullback_lagrangian(L, boost_family()) - L.expr
    out = extract_gauge(residual, n_dof=1, bindings=CONSTS)
    assert out.ok
    assert out.residual_norm < 1e-12
    expected = parse_expr("-m*s*q1 + m/2*s^2*t + m*g/2*s*t^2", n_dof=1)
    assert equal_numeric(out.gauge, expected)


def test_extract_gauge_agrees_with_quad_line_integral():
    # independent oracle: F(q, t) = int_0^1 [a(l q, l t) q + b(l q, l t) t] dl
    L = gravity_1d()
    residual = pullback_lagrangian(L, boost_family()) - L.expr
    out = extract_gauge(residual, n_dof=1, bindings=CONSTS)
    point = {"m": 1.3, "g": 0.8, "s": 0.7, "q1": 1.1, "t": 0.9}
    a = substitute(diff(residual, "v1"), {"v1": num(0)})
    b = substitute(residual, {"v1": num(0)})

    def integrand(lam):
        scaled = dict(point)
        scaled["q1"] = lam * point["q1"]
        scaled["t"] = lam * point["t"]
        return (evaluate(a, scaled) * point["q1"]
                + evaluate(b, scaled) * point["t"])

    numeric, err = quad(integrand, 0.0, 1.0, epsabs=1e-12)
    assert evaluate(out.gauge, point) == pytest.approx(numeric, abs=1e-9)


def test_extract_gauge_zero_residual():
    out = extract_gauge(num(0), n_dof=2)
    assert out.ok and equal_numeric(out.gauge, num(0))


def test_extract_gauge_rejects_nonaffine_residual():
    residual = parse_expr("v1^2", n_dof=1)
    out = extract_gauge(residual, n_dof=1)
    assert not out.ok
    assert "affine" in out.reason
    assert out.affine_defect > 0.1


def test_extract_gauge_rejects_inexact_form():
    # a = q1 (dq1 component), b = 0: da/dt = 0 but db/dq1 = 0, curl n/a;
    # use 2-dof: a1 = q2, a2 = 0 -> curl defect 1
    residual = parse_expr("q2*v1", n_dof=2)
    out = extract_gauge(residual, n_dof=2)
    assert not out.ok
    assert "exact" in out.reason
    assert out.curl_defect == pytest.approx(1.0, abs=1e-9)


def test_extract_gauge_reports_time_defect():
    # a = t would need b with db/dq = 1... give b = 0: time defect 1
    residual = parse_expr("t*v1", n_dof=1)
    out = extract_gauge(residual, n_dof=1)
    assert not out.ok
    assert out.time_defect == pytest.approx(1.0, abs=1e-9)


def test_extract_gauge_nonpolynomial_but_exact_is_reported():
    # residual = d/dt sin(t) = cos(t): exact, but not polynomial in t
    residual = parse_expr("cos(t)", n_dof=1)
    out = extract_gauge(residual, n_dof=1)
    assert not out.ok
    assert "not polynomial" in out.reason


monomial_exps = st.tuples(st.integers(min_value=0, max_value=3),
                          st.integers(min_value=0, max_value=3)).filter(
                              lambda ab: ab[0] + ab[1] >= 1)


@st.composite
def polynomial_gauges(draw):
    """Random F(q1, t) with no constant term (the extractor's normalization)."""
    terms = draw(st.lists(st.tuples(st.integers(-3, 3), monomial_exps),
                          min_size=1, max_size=4))
    F = num(0)
    for c, (a, b) in terms:
        F = F + num(c) * pow_(coord(1), a) * pow_(time_var(), b)
    return F


@given(polynomial_gauges())
@settings(max_examples=40, deadline=None)
def test_gauge_round_trip_on_random_polynomials(F):
    residual = total_time_derivative(F, n_dof=1)
    out = extract_gauge(residual, n_dof=1)
    assert out.ok
    assert equal_numeric(out.gauge, F, tol=1e-7)


# ---------------------------------------------------------------------------
# variational symmetry certificates


def test_boost_family_is_variational_symmetry_of_gravity():
    cert = check_variational_symmetry(gravity_1d(), boost_family(), tol=1e-9)
    assert cert.ok
    assert cert.measured < 1e-12
    expected = parse_expr("-m*s*q1 + m/2*s^2*t + m*g/2*s*t^2", n_dof=1)
    assert equal_numeric(cert.gauge, expected)


def test_rotation_family_is_variational_symmetry_of_planar_gravity():
    cert = check_variational_symmetry(gravity_2d(), rotation_gravity_family(),
                                      tol=1e-9)
    assert cert.ok
    expected = parse_expr(
        "m*g*t*sin(s)*q1 + m*g*t*(1 - cos(s))*q2 + m*g^2/2*t^3*(1 - cos(s))",
        n_dof=2)
    assert equal_numeric(cert.gauge, expected)


def test_plain_rotation_without_compensation_fails_on_gravity():
    fam = PointFamily.from_dsl(
        ["q1*cos(s) + q2*sin(s)", "-q1*sin(s) + q2*cos(s)"],
        n_dof=2, constants=CONSTS)
    cert = check_variational_symmetry(gravity_2d(), fam, tol=1e-9)
    assert not cert.ok
    assert cert.measured > 1e-3


def test_plain_rotation_is_symmetry_without_gravity():
    L = Lagrangian.from_dsl("m/2*(v1^2 + v2^2)", n_dof=2, constants={"m": M})
    fam = PointFamily.from_dsl(
        ["q1*cos(s) + q2*sin(s)", "-q1*sin(s) + q2*cos(s)"],
        n_dof=2, constants={"m": M})
    cert = check_variational_symmetry(L, fam, tol=1e-9)
    assert cert.ok
    assert equal_numeric(cert.gauge, num(0))


def test_spatial_translation_on_gravity_needs_linear_gauge():
    fam = PointFamily.from_dsl(["q1 + s"], n_dof=1, constants=CONSTS)
    cert = check_variational_symmetry(gravity_1d(), fam, tol=1e-9)
    assert cert.ok
    assert equal_numeric(cert.gauge, parse_expr("-m*g*s*t", n_dof=1))


def test_scaling_family_is_not_a_symmetry():
    fam = PointFamily.from_dsl(["q1 + s*q1"], n_dof=1, constants=CONSTS)
    cert = check_variational_symmetry(gravity_1d(), fam, tol=1e-9)
    assert not cert.ok
    assert "affine" in cert.details["extraction"]["reason"]


def test_symmetry_certificate_is_json_serializable():
    cert = check_variational_symmetry(gravity_1d(), boost_family(), tol=1e-9)
    payload = json.dumps(cert.to_dict())
    back = json.loads(payload)
    assert back["ok"] is True
    assert back["check"] == "variational-symmetry"
    assert isinstance(back["details"]["spot_checks"], dict)


# ---------------------------------------------------------------------------
# infinitesimal condition


def test_boost_generator_satisfies_infinitesimal_condition():
    gen = InfinitesimalGenerator.from_dsl(
        xi="0", eta=["-t"], gauge="-m*q1 + m*g/2*t^2", n_dof=1,
        constants=CONSTS)
    cert = check_infinitesimal(gravity_1d(), gen, tol=1e-9)
    assert cert.ok
    assert cert.measured < 1e-12


def test_rotation_generator_satisfies_infinitesimal_condition():
    gen = InfinitesimalGenerator.from_dsl(
        xi="0", eta=["q2 + g/2*t^2", "-q1"], gauge="m*g*t*q1", n_dof=2,
        constants=CONSTS)
    cert = check_infinitesimal(gravity_2d(), gen, tol=1e-9)
    assert cert.ok


def test_time_translation_generator_on_autonomous_lagrangian():
    gen = InfinitesimalGenerator.from_dsl(xi="1", eta=["0"], n_dof=1,
                                          constants=CONSTS)
    cert = check_infinitesimal(gravity_1d(), gen, tol=1e-9)
    assert cert.ok


def test_broken_generator_fails_infinitesimal_condition():
    # drop the g t^2 / 2 compensation: rotation alone is not a symmetry
    gen = InfinitesimalGenerator.from_dsl(
        xi="0", eta=["q2", "-q1"], gauge="0", n_dof=2, constants=CONSTS)
    cert = check_infinitesimal(gravity_2d(), gen, tol=1e-9)
    assert not cert.ok
    assert cert.measured > 1e-2


def test_full_chain_family_to_conserved_charge():
    # family -> certificate gauge -> generator -> charge -> trajectory drift
    L = gravity_1d()
    fam = boost_family()
    cert = check_variational_symmetry(L, fam, tol=1e-9)
    gen = infinitesimal_of(fam, gauge_family=cert.gauge)
    Q = gen.noether_charge(L)
    assert equal_numeric(Q, parse_expr("-m*v1*t + m*q1 - m*g/2*t^2", n_dof=1))
    tr = integrate_trajectory(L, q0=[0.3], v0=[1.7], t0=0.0, t1=2.0, n_steps=200)
    drift = check_charge_conserved(L, Q, tr)
    assert drift.rel_drift < 1e-10
    assert drift.initial == pytest.approx(M * 0.3)


# ---------------------------------------------------------------------------
# equivalence


def test_falling_frame_maps_free_motion_onto_gravity():
    Lg = gravity_1d()
    Lf = Lagrangian.from_dsl("m/2*v1^2", n_dof=1, constants=CONSTS)
    frame = PointTransform.from_dsl(["q1 + g/2*t^2"], n_dof=1, constants=CONSTS)
    pulled = Lagrangian(n_dof=1, expr=pullback_lagrangian(Lf, frame),
                        constants=CONSTS)
    cert = check_equivalence(Lg, pulled, tol=1e-9)
    assert cert.ok
    assert equal_numeric(cert.gauge,
                         parse_expr("m*g*t*q1 + m*g^2/6*t^3", n_dof=1))


def test_rotating_frame_maps_oscillator_onto_magnetic_lagrangian():
    w = 1.3
    consts = {"m": 1.0, "w": w, "w2": w}
    osc = Lagrangian.from_dsl("m/2*(v1^2 + v2^2) - m/2*w^2*(q1^2 + q2^2)",
                              n_dof=2, constants=consts)
    rot = PointTransform.from_dsl(
        ["q1*cos(w*t) - q2*sin(w*t)", "q1*sin(w*t) + q2*cos(w*t)"],
        n_dof=2, constants=consts)
    pulled = Lagrangian(n_dof=2, expr=pullback_lagrangian(osc, rot),
                        constants=consts)
    mag = Lagrangian.from_dsl("m/2*(v1^2 + v2^2) + m*w2*(q1*v2 - q2*v1)",
                              n_dof=2, constants=consts)
    cert = check_equivalence(mag, pulled, tol=1e-7)
    assert cert.ok
    assert equal_numeric(cert.gauge, num(0), tol=1e-7)


def test_detuned_rotating_frame_fails_with_curl_defect():
    w, detune = 1.3, 1.1
    consts = {"m": 1.0, "w": w, "w2": detune * w}
    osc = Lagrangian.from_dsl("m/2*(v1^2 + v2^2) - m/2*w^2*(q1^2 + q2^2)",
                              n_dof=2, constants=consts)
    rot = PointTransform.from_dsl(
        ["q1*cos(w*t) - q2*sin(w*t)", "q1*sin(w*t) + q2*cos(w*t)"],
        n_dof=2, constants=consts)
    pulled = Lagrangian(n_dof=2, expr=pullback_lagrangian(osc, rot),
                        constants=consts)
    mag = Lagrangian.from_dsl("m/2*(v1^2 + v2^2) + m*w2*(q1*v2 - q2*v1)",
                              n_dof=2, constants=consts)
    cert = check_equivalence(mag, pulled, tol=1e-3)
    assert not cert.ok
    # curl defect = 2 m |w2 - w|
    expected = 2 * 1.0 * (detune - 1) * w
    assert cert.details["extraction"]["curl_defect"] == pytest.approx(
        expected, rel=1e-6)


def test_equivalence_rejects_conflicting_constants():
    L1 = Lagrangian.from_dsl("m/2*v1^2", n_dof=1, constants={"m": 1.0})
    L2 = Lagrangian.from_dsl("m/2*v1^2", n_dof=1, constants={"m": 2.0})
    with pytest.raises(SymmetryError):
        check_equivalence(L1, L2)


# ---------------------------------------------------------------------------
# volume preservation


def test_translations_and_rotations_are_unimodular():
    assert is_unimodular(boost_family())
    assert is_unimodular(rotation_gravity_family())


def test_scaling_is_not_unimodular():
    fam = PointFamily.from_dsl(["q1 + s*q1"], n_dof=1)
    assert not is_unimodular(fam)


def test_shear_is_unimodular():
    fam = PointFamily.from_dsl(["q1 + s*q2", "q2"], n_dof=2)
    assert is_unimodular(fam)
    det = jacobian_determinant(fam)
    assert equal_numeric(det, num(1))


def test_three_dof_rotation_determinant():
    fam = PointFamily.from_dsl(
        ["q1*cos(s) + q2*sin(s)", "-q1*sin(s) + q2*cos(s)", "q3"],
        n_dof=3)
    assert is_unimodular(fam)


def test_determinant_needs_small_system():
    fam = PointFamily.from_dsl(["q1", "q2", "q3", "q4"], n_dof=4)
    with pytest.raises(SymmetryError):
        jacobian_determinant(fam)
