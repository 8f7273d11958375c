"""Variational symmetries of Lagrangians.

A `PointFamily` is an s-parametrized family of point transformations

    t' = T(t, q, s),    q_i' = Q_i(q, t, s),    identity at s = 0.

The family is a variational symmetry of L when the transformed action
differs from the original by a boundary term: for each s there is a gauge
function F(q, t; s) with

    L(q', v', t') * dt'/dt = L(q, v, t) + dF/dt.

`pullback_lagrangian` builds the left-hand side, `extract_gauge`
reconstructs F from the residual (or reports exactly which structural
property failed), and `check_variational_symmetry` packages the verdict
as a certificate. The infinitesimal version of the same condition,

    sum_i [dL/dq_i eta_i + dL/dv_i (D eta_i - v_i D xi)]
        + dL/dt xi + L D xi = D G,

is checked by `check_infinitesimal`. `check_equivalence` certifies that
two Lagrangians differ by a total time derivative.

Gauge reconstruction is symbolic and handles residuals whose velocity
coefficients are polynomial in (q, t) — the total time derivative of any
F is affine in the velocities, so stage one tests affinity, stage two
tests the mixed-partial (exactness) conditions, and stage three integrates
the resulting 1-form with the scaling homotopy formula. Non-polynomial
but exact gauges are reported as such without constructing F.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .expr import (
    Expr, Num, coord, diff, equal_numeric, free_symbols, num,
    numeric_residual, parse_expr, pow_, substitute, time_var, to_string,
    vel, NonPolynomialError, poly_in,
)
from .mechanics import Lagrangian, MechanicsError, noether_charge, total_time_derivative

__all__ = [
    "PointFamily", "PointTransform", "InfinitesimalGenerator",
    "SymmetryCertificate", "GaugeExtraction", "SymmetryError",
    "pullback_lagrangian", "extract_gauge", "check_variational_symmetry",
    "check_infinitesimal", "check_equivalence", "infinitesimal_of",
    "jacobian_determinant", "is_unimodular",
    "DEFAULT_SPOT_VALUES",
]

DEFAULT_SPOT_VALUES = (-1.0, -0.1, 0.1, 1.0)


class SymmetryError(Exception):
    pass


def _as_float(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# transformation families


@dataclass(frozen=True)
class PointFamily:
    """One-parameter family of point transformations, identity at s = 0."""

    n_dof: int
    qprime: tuple
    tprime: Expr
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "qprime", tuple(self.qprime))
        object.__setattr__(self, "constants", dict(self.constants))
        if len(self.qprime) != self.n_dof:
            raise SymmetryError(
                f"expected {self.n_dof} coordinate maps, got {len(self.qprime)}")
        vel_names = {f"v{i}" for i in range(1, self.n_dof + 1)}
        for e in list(self.qprime) + [self.tprime]:
            bad = free_symbols(e) & vel_names
            if bad:
                raise SymmetryError(
                    f"point transformations cannot depend on velocities: {sorted(bad)}")

    @classmethod
    def from_dsl(cls, qprime: Sequence[str], n_dof: int, tprime: str = "t",
                 constants: Mapping[str, float] = None) -> "PointFamily":
        constants = dict(constants or {})
        registry = set(constants) if constants else None
        qp = tuple(parse_expr(text, n_dof=n_dof, constants=registry)
                   for text in qprime)
        tp = parse_expr(tprime, n_dof=n_dof, constants=registry)
        return cls(n_dof=n_dof, qprime=qp, tprime=tp, constants=constants)

    def is_identity_at_zero(self, tol: float = 1e-9) -> bool:
        at0 = {"s": num(0)}
        bindings = dict(self.constants)
        for i, qp in enumerate(self.qprime):
            if not equal_numeric(substitute(qp, at0), coord(i + 1),
                                 tol=tol, bindings=bindings):
                return False
        return equal_numeric(substitute(self.tprime, at0), time_var(),
                             tol=tol, bindings=bindings)

    def freeze(self, s_value) -> "PointTransform":
        """Fix the group parameter; rationals keep the result exact."""
        if isinstance(s_value, Expr):
            s_expr = s_value
        else:
            s_expr = num(Fraction(s_value))
        return PointTransform(
            n_dof=self.n_dof,
            qprime=tuple(substitute(qp, {"s": s_expr}) for qp in self.qprime),
            tprime=substitute(self.tprime, {"s": s_expr}),
            constants=self.constants,
        )


@dataclass(frozen=True)
class PointTransform:
    """A single point transformation (no free group parameter)."""

    n_dof: int
    qprime: tuple
    tprime: Expr
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "qprime", tuple(self.qprime))
        object.__setattr__(self, "constants", dict(self.constants))
        for e in list(self.qprime) + [self.tprime]:
            if "s" in free_symbols(e):
                raise SymmetryError("a frozen transform cannot contain 's'")

    @classmethod
    def from_dsl(cls, qprime: Sequence[str], n_dof: int, tprime: str = "t",
                 constants: Mapping[str, float] = None) -> "PointTransform":
        fam = PointFamily.from_dsl(qprime, n_dof=n_dof, tprime=tprime,
                                   constants=constants)
        return cls(n_dof=fam.n_dof, qprime=fam.qprime, tprime=fam.tprime,
                   constants=fam.constants)


@dataclass(frozen=True)
class InfinitesimalGenerator:
    """Generator (xi, eta_i) with gauge function G(q, t).

    xi generates the time component, eta_i the coordinate components; G is
    the gauge whose total derivative balances the divergence condition.
    """

    n_dof: int
    xi: Expr
    eta: tuple
    gauge: Expr
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "eta", tuple(self.eta))
        object.__setattr__(self, "constants", dict(self.constants))
        if len(self.eta) != self.n_dof:
            raise SymmetryError(
                f"expected {self.n_dof} eta components, got {len(self.eta)}")

    @classmethod
    def from_dsl(cls, xi: str, eta: Sequence[str], n_dof: int,
                 gauge: str = "0",
                 constants: Mapping[str, float] = None) -> "InfinitesimalGenerator":
        constants = dict(constants or {})
        registry = set(constants) if constants else None
        return cls(
            n_dof=n_dof,
            xi=parse_expr(xi, n_dof=n_dof, constants=registry),
            eta=tuple(parse_expr(e, n_dof=n_dof, constants=registry) for e in eta),
            gauge=parse_expr(gauge, n_dof=n_dof, constants=registry),
            constants=constants,
        )

    def noether_charge(self, L: Lagrangian) -> Expr:
        return noether_charge(L, self.xi, self.eta, self.gauge)


def infinitesimal_of(family: PointFamily, check_identity: bool = True,
                     gauge_family: Expr = None) -> InfinitesimalGenerator:
    """Differentiate a family at s = 0: xi = dT/ds|0, eta_i = dQ_i/ds|0.

    When the family's gauge function F(q, t; s) is known, pass it as
    `gauge_family` and G = dF/ds|0 is attached to the generator.
    """
    if check_identity and not family.is_identity_at_zero():
        raise SymmetryError("family is not the identity at s = 0")
    at0 = {"s": num(0)}
    xi = substitute(diff(family.tprime, "s"), at0)
    eta = tuple(substitute(diff(qp, "s"), at0) for qp in family.qprime)
    gauge = num(0)
    if gauge_family is not None:
        gauge = substitute(diff(gauge_family, "s"), at0)
    return InfinitesimalGenerator(n_dof=family.n_dof, xi=xi, eta=eta,
                                  gauge=gauge, constants=family.constants)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class GaugeExtraction:
    """Result of reconstructing a gauge function from a residual."""

    ok: bool
    gauge: Optional[Expr]
    affine_defect: float
    curl_defect: float
    time_defect: float
    residual_norm: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "gauge": None if self.gauge is None else to_string(self.gauge),
            "affine_defect": _as_float(self.affine_defect),
            "curl_defect": _as_float(self.curl_defect),
            "time_defect": _as_float(self.time_defect),
            "residual_norm": _as_float(self.residual_norm),
            "reason": self.reason,
        }


@dataclass(frozen=True)
class SymmetryCertificate:
    """Verdict of a symmetry/equivalence check, JSON-serializable."""

    check: str
    ok: bool
    measured: float
    tol: float
    gauge: Optional[Expr] = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "ok": self.ok,
            "measured": _as_float(self.measured),
            "tol": _as_float(self.tol),
            "gauge": None if self.gauge is None else to_string(self.gauge),
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# pullback


def _total_derivative(e: Expr, n_dof: int) -> Expr:
    return total_time_derivative(e, n_dof)


def pullback_lagrangian(L: Lagrangian, transform) -> Expr:
    """L(q', v', t') * dt'/dt expressed in the original (q, v, t).

    `transform` is a PointFamily (result keeps s) or PointTransform. The
    transformed velocity is the chain-rule quotient v'_i = DQ_i / DT of
    total time derivatives along the motion.
    """
    n = L.n_dof
    if transform.n_dof != n:
        raise SymmetryError("transform and Lagrangian disagree on n_dof")
    dT = _total_derivative(transform.tprime, n)
    dQ = [_total_derivative(qp, n) for qp in transform.qprime]
    rate = pow_(dT, -1)
    mapping = {"t": transform.tprime}
    for i in range(n):
        mapping[f"q{i + 1}"] = transform.qprime[i]
        mapping[f"v{i + 1}"] = dQ[i] * rate
    return substitute(L.expr, mapping) * dT


# ---------------------------------------------------------------------------
# gauge extraction


def _zero_velocities(n_dof: int) -> dict:
    return {f"v{i}": num(0) for i in range(1, n_dof + 1)}


def extract_gauge(residual: Expr, n_dof: int, tol: float = 1e-9,
                  trials: int = 64, seed: int = 1234,
                  bindings: Mapping[str, float] = None) -> GaugeExtraction:
    """Reconstruct F with dF/dt = residual, or say why none exists.

    Stages, each with a sampled defect magnitude:

    1. affinity in the velocities (any total derivative of F(q, t) is
       affine in v): residual = sum_i a_i(q, t) v_i + b(q, t);
    2. exactness of the 1-form (a, b): da_i/dq_j symmetric and
       da_i/dt = db/dq_i;
    3. construction of F by the scaling homotopy (requires a_i, b
       polynomial in (q, t); other symbols ride along as coefficients),
       followed by an independent soundness sample of dF/dt - residual.
    """
    zero = numeric_residual(residual, num(0), trials=trials, seed=seed,
                            bindings=bindings)
    if zero <= tol:
        # identically zero residual (up to value-equal trig combinations
        # the constructors do not collapse): the gauge is zero
        return GaugeExtraction(ok=True, gauge=num(0), affine_defect=0.0,
                               curl_defect=0.0, time_defect=0.0,
                               residual_norm=zero)

    kill_v = _zero_velocities(n_dof)
    a = [substitute(diff(residual, f"v{i}"), kill_v) for i in range(1, n_dof + 1)]
    b = substitute(residual, kill_v)

    rebuilt = b
    for i, a_i in enumerate(a):
        rebuilt = rebuilt + a_i * vel(i + 1)
    affine_defect = numeric_residual(residual, rebuilt, trials=trials,
                                     seed=seed, bindings=bindings)
    if affine_defect > tol:
        return GaugeExtraction(
            ok=False, gauge=None, affine_defect=affine_defect,
            curl_defect=float("nan"), time_defect=float("nan"),
            residual_norm=affine_defect,
            reason="residual is not affine in the velocities")

    curl_defect = 0.0
    for i in range(n_dof):
        for j in range(i + 1, n_dof):
            d = numeric_residual(diff(a[i], f"q{j + 1}"), diff(a[j], f"q{i + 1}"),
                                 trials=trials, seed=seed, bindings=bindings)
            curl_defect = max(curl_defect, d)
    time_defect = 0.0
    for i in range(n_dof):
        d = numeric_residual(diff(a[i], "t"), diff(b, f"q{i + 1}"),
                             trials=trials, seed=seed, bindings=bindings)
        time_defect = max(time_defect, d)
    if max(curl_defect, time_defect) > tol:
        return GaugeExtraction(
            ok=False, gauge=None, affine_defect=affine_defect,
            curl_defect=curl_defect, time_defect=time_defect,
            residual_norm=max(curl_defect, time_defect),
            reason="velocity-coefficient 1-form is not exact")

    var_names = [f"q{i}" for i in range(1, n_dof + 1)] + ["t"]
    var_syms = [coord(i) for i in range(1, n_dof + 1)] + [time_var()]
    small = tol  # per-component zero shortcut for value-zero trig combinations
    gauge = num(0)
    try:
        for i, a_i in enumerate(a):
            if numeric_residual(a_i, num(0), trials=trials, seed=seed,
                                bindings=bindings) <= small:
                continue
            for key, coeff in poly_in(a_i, var_names).items():
                degree = sum(key)
                monomial = coeff
                for base, k in zip(var_syms, key):
                    monomial = monomial * pow_(base, k)
                gauge = gauge + monomial * coord(i + 1) * num(Fraction(1, degree + 1))
        if numeric_residual(b, num(0), trials=trials, seed=seed,
                            bindings=bindings) > small:
            for key, coeff in poly_in(b, var_names).items():
                degree = sum(key)
                monomial = coeff
                for base, k in zip(var_syms[:-1], key[:-1]):
                    monomial = monomial * pow_(base, k)
                monomial = monomial * pow_(time_var(), key[-1] + 1)
                gauge = gauge + monomial * num(Fraction(1, degree + 1))
    except NonPolynomialError as err:
        return GaugeExtraction(
            ok=False, gauge=None, affine_defect=affine_defect,
            curl_defect=curl_defect, time_defect=time_defect,
            residual_norm=float("nan"),
            reason=f"1-form is exact but not polynomial in (q, t): {err}")

    soundness = numeric_residual(_total_derivative(gauge, n_dof), residual,
                                 trials=trials, seed=seed, bindings=bindings)
    ok = soundness <= tol
    return GaugeExtraction(
        ok=ok, gauge=gauge, affine_defect=affine_defect,
        curl_defect=curl_defect, time_defect=time_defect,
        residual_norm=soundness,
        reason="" if ok else "constructed gauge fails the soundness sample")


# ---------------------------------------------------------------------------
# checks


def _merged_bindings(L: Lagrangian, extra: Mapping[str, float] = None) -> dict:
    out = dict(L.constants)
    out.update(extra or {})
    return out


def check_variational_symmetry(L: Lagrangian, family: PointFamily,
                               tol: float = 1e-9, trials: int = 64,
                               seed: int = 1234,
                               spot_values: Sequence[float] = DEFAULT_SPOT_VALUES,
                               ) -> SymmetryCertificate:
    """Certify that a family satisfies the divergence condition.

    The residual L(q',v',t') dt'/dt - L is required to be a total time
    derivative for every s: the group parameter is sampled like any other
    unbound symbol, and additionally pinned to each of `spot_values`.
    `measured` is the worst soundness residual over all those samplings.
    """
    if not family.is_identity_at_zero():
        return SymmetryCertificate(
            check="variational-symmetry", ok=False, measured=float("inf"),
            tol=tol, details={"reason": "family is not the identity at s = 0"})
    residual = pullback_lagrangian(L, family) - L.expr
    bindings = _merged_bindings(L)
    extraction = extract_gauge(residual, L.n_dof, tol=tol, trials=trials,
                               seed=seed, bindings=bindings)
    details = {"extraction": extraction.to_dict(), "spot_checks": {}}
    if not extraction.ok:
        return SymmetryCertificate(
            check="variational-symmetry", ok=False,
            measured=extraction.residual_norm, tol=tol,
            gauge=extraction.gauge, details=details)
    measured = extraction.residual_norm
    d_gauge = _total_derivative(extraction.gauge, L.n_dof)
    for s_value in spot_values:
        pinned = dict(bindings)
        pinned["s"] = float(s_value)
        r = numeric_residual(d_gauge, residual, trials=max(trials // 4, 8),
                             seed=seed, bindings=pinned)
        details["spot_checks"][repr(float(s_value))] = _as_float(r)
        measured = max(measured, r)
    return SymmetryCertificate(
        check="variational-symmetry", ok=measured <= tol, measured=measured,
        tol=tol, gauge=extraction.gauge, details=details)


def check_infinitesimal(L: Lagrangian, generator: InfinitesimalGenerator,
                        tol: float = 1e-9, trials: int = 64,
                        seed: int = 1234) -> SymmetryCertificate:
    """Check the infinitesimal divergence condition for a generator.

    Builds the residual

        sum_i [dL/dq_i eta_i + dL/dv_i (D eta_i - v_i D xi)]
          + dL/dt xi + L D xi - D G

    and samples its magnitude; ok iff it vanishes within tol.
    """
    if generator.n_dof != L.n_dof:
        raise SymmetryError("generator and Lagrangian disagree on n_dof")
    n = L.n_dof
    d_xi = _total_derivative(generator.xi, n)
    condition = L.expr * d_xi + diff(L.expr, "t") * generator.xi
    for i in range(1, n + 1):
        eta_i = generator.eta[i - 1]
        d_eta = _total_derivative(eta_i, n)
        condition = condition + diff(L.expr, f"q{i}") * eta_i
        condition = condition + diff(L.expr, f"v{i}") * (d_eta - vel(i) * d_xi)
    condition = condition - _total_derivative(generator.gauge, n)
    measured = numeric_residual(condition, num(0), trials=trials, seed=seed,
                                bindings=_merged_bindings(L))
    return SymmetryCertificate(
        check="infinitesimal-symmetry", ok=measured <= tol, measured=measured,
        tol=tol, gauge=generator.gauge,
        details={"condition": to_string(condition)})


def check_equivalence(L1: Lagrangian, L2: Lagrangian, tol: float = 1e-9,
                      trials: int = 64, seed: int = 1234) -> SymmetryCertificate:
    """Certify L2 = L1 + dF/dt for some gauge F(q, t), or report the defect."""
    if L1.n_dof != L2.n_dof:
        raise SymmetryError("Lagrangians disagree on n_dof")
    bindings = dict(L1.constants)
    for name, value in L2.constants.items():
        if name in bindings and bindings[name] != value:
            raise SymmetryError(
                f"constant {name!r} has conflicting values {bindings[name]} and {value}")
        bindings[name] = value
    residual = L2.expr - L1.expr
    extraction = extract_gauge(residual, L1.n_dof, tol=tol, trials=trials,
                               seed=seed, bindings=bindings)
    return SymmetryCertificate(
        check="lagrangian-equivalence", ok=extraction.ok,
        measured=extraction.residual_norm, tol=tol, gauge=extraction.gauge,
        details={"extraction": extraction.to_dict()})


# ---------------------------------------------------------------------------
# volume preservation


def jacobian_determinant(transform) -> Expr:
    """det dq'/dq as an expression (systems with up to 3 degrees of freedom)."""
    n = transform.n_dof
    M = [[diff(qp, f"q{j + 1}") for j in range(n)] for qp in transform.qprime]
    if n == 1:
        return M[0][0]
    if n == 2:
        return M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if n == 3:
        return (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
                - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
                + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))
    raise SymmetryError("determinant implemented for n_dof <= 3")


def is_unimodular(transform, tol: float = 1e-9, trials: int = 64,
                  seed: int = 1234,
                  spot_values: Sequence[float] = DEFAULT_SPOT_VALUES) -> bool:
    """True when det dq'/dq == 1 within tol at sampled states.

    For a PointFamily, the group parameter is both sampled and pinned to
    each spot value; for a PointTransform it is absent.
    """
    det = jacobian_determinant(transform)
    bindings = dict(transform.constants)
    if numeric_residual(det, num(1), trials=trials, seed=seed,
                        bindings=bindings) > tol:
        return False
    if isinstance(transform, PointFamily):
        for s_value in spot_values:
            pinned = dict(bindings)
            pinned["s"] = float(s_value)
            if numeric_residual(det, num(1), trials=max(trials // 4, 8),
                                seed=seed, bindings=pinned) > tol:
                return False
    return True
