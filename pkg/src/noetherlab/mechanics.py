"""Classical mechanics layer: Lagrangians, dynamics, and conserved charges.

A `Lagrangian` couples a symbolic expression L(q, v, t) with the number of
degrees of freedom and numeric values for its named constants. On top of
it this module provides conjugate momenta, Euler-Lagrange accelerations,
fixed-step trajectory integration, total time derivatives along the flow,
and the conserved charge associated with a symmetry generator:

    Q = sum_i p_i * eta_i + xi * (L - sum_i p_i * v_i) - G

where (xi, eta_i) generate the transformation and G is its gauge function.
`check_charge_conserved` evaluates any candidate charge along an integrated
trajectory and reports the drift.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import (
    Expr, Num, coord, diff, equal_numeric, evaluate, free_symbols, mul,
    num, numpy_callable, parse_expr, substitute, time_var, to_string, vel,
)

__all__ = [
    "Lagrangian", "Trajectory", "ChargeDrift", "MechanicsError",
    "conjugate_momenta", "velocity_hessian", "euler_lagrange",
    "acceleration_function", "total_time_derivative", "noether_charge",
    "integrate_trajectory", "check_charge_conserved",
    "save_trajectory_csv", "load_trajectory_csv",
]


class MechanicsError(Exception):
    pass


_RESERVED = {"t", "s"}


@dataclass(frozen=True)
class Lagrangian:
    """L(q, v, t) for an n_dof system, with numeric constant values."""

    n_dof: int
    expr: Expr
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_dof < 1:
            raise MechanicsError("n_dof must be at least 1")
        object.__setattr__(self, "constants", dict(self.constants))
        allowed = self.variable_names() | set(self.constants)
        stray = free_symbols(self.expr) - allowed
        if stray and self.constants:
            raise MechanicsError(
                f"Lagrangian uses symbols {sorted(stray)} with no constant value")

    @classmethod
    def from_dsl(cls, text: str, n_dof: int,
                 constants: Mapping[str, float] = None) -> "Lagrangian":
        constants = dict(constants or {})
        registry = set(constants) | _RESERVED if constants else None
        expr = parse_expr(text, n_dof=n_dof, constants=registry)
        return cls(n_dof=n_dof, expr=expr, constants=constants)

    def variable_names(self) -> set:
        names = {"t"}
        for i in range(1, self.n_dof + 1):
            names.add(f"q{i}")
            names.add(f"v{i}")
        return names

    def coordinates(self):
        return [coord(i) for i in range(1, self.n_dof + 1)]

    def velocities(self):
        return [vel(i) for i in range(1, self.n_dof + 1)]

    def bound_expr(self) -> Expr:
        """The Lagrangian with numeric constants substituted in."""
        return substitute(self.expr, self.constants)

    def __str__(self):
        return to_string(self.expr)


# ---------------------------------------------------------------------------
# symbolic structure


def conjugate_momenta(L: Lagrangian) -> list:
    """p_i = dL/dv_i as expressions."""
    return [diff(L.expr, f"v{i}") for i in range(1, L.n_dof + 1)]


def velocity_hessian(L: Lagrangian) -> list:
    """Matrix d2L/dv_i dv_j as a nested list of expressions."""
    momenta = conjugate_momenta(L)
    return [[diff(p, f"v{j}") for j in range(1, L.n_dof + 1)] for p in momenta]


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0


def _depends_on_state(e: Expr, L: Lagrangian) -> bool:
    return bool(free_symbols(e) & L.variable_names())


def euler_lagrange(L: Lagrangian) -> list:
    """Symbolic accelerations a_i(q, v, t) from the Euler-Lagrange equations.

    Requires the velocity Hessian to be diagonal with entries that do not
    depend on the state (mass-like constants); that covers every system in
    this package's scope. For a state-dependent mass matrix, integrate with
    `integrate_trajectory`, which solves the linear system pointwise.
    """
    hessian = velocity_hessian(L)
    n = L.n_dof
    for i in range(n):
        for j in range(n):
            entry = hessian[i][j]
            if i == j:
                if _depends_on_state(entry, L):
                    raise MechanicsError(
                        "velocity Hessian depends on the state; use "
                        "integrate_trajectory for this system")
                if _is_zero(entry):
                    raise MechanicsError(
                        f"Lagrangian is degenerate: d2L/dv{i + 1}^2 = 0")
            elif not _is_zero(entry):
                raise MechanicsError(
                    "velocity Hessian has off-diagonal terms; use "
                    "integrate_trajectory for this system")
    momenta = conjugate_momenta(L)
    accelerations = []
    for i in range(n):
        # dp_i/dt along the flow equals dL/dq_i; expand the total derivative
        # of p_i(q, v, t) and solve for the acceleration.
        rhs = diff(L.expr, f"q{i + 1}") - diff(momenta[i], "t")
        for j in range(n):
            rhs = rhs - diff(momenta[i], f"q{j + 1}") * vel(j + 1)
        accelerations.append(mul(rhs, hessian[i][i] ** num(-1)))
    return accelerations


def _state_args(n_dof: int) -> list:
    return ([f"q{i}" for i in range(1, n_dof + 1)]
            + [f"v{i}" for i in range(1, n_dof + 1)] + ["t"])


def acceleration_function(L: Lagrangian) -> Callable:
    """Compile a(q, v, t) -> ndarray for integration.

    Uses the symbolic Euler-Lagrange solution when available, otherwise
    solves M(q, v, t) a = rhs(q, v, t) pointwise.
    """
    args = _state_args(L.n_dof)
    try:
        fns = [numpy_callable(substitute(a, L.constants), args)
               for a in euler_lagrange(L)]

        def accel(q, v, t):
            vals = list(q) + list(v) + [t]
            return np.array([fn(*vals) for fn in fns], dtype=float)

        return accel
    except MechanicsError:
        pass

    n = L.n_dof
    momenta = conjugate_momenta(L)
    hessian = velocity_hessian(L)
    hess_fns = [[numpy_callable(substitute(h, L.constants), args)
                 for h in row] for row in hessian]
    rhs_exprs = []
    for i in range(n):
        rhs = diff(L.expr, f"q{i + 1}") - diff(momenta[i], "t")
        for j in range(n):
            rhs = rhs - diff(momenta[i], f"q{j + 1}") * vel(j + 1)
        rhs_exprs.append(rhs)
    rhs_fns = [numpy_callable(substitute(r, L.constants), args) for r in rhs_exprs]

    def accel(q, v, t):
        vals = list(q) + list(v) + [t]
        M = np.array([[fn(*vals) for fn in row] for row in hess_fns], dtype=float)
        rhs = np.array([fn(*vals) for fn in rhs_fns], dtype=float)
        try:
            return np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError as err:
            raise MechanicsError(f"singular velocity Hessian at t={t}: {err}") from None

    return accel


def total_time_derivative(e: Expr, n_dof: int) -> Expr:
    """d/dt along trajectories for a function of (q, t) only:

        D e = de/dt + sum_i v_i * de/dq_i

    Velocity dependence is rejected: differentiating it would need the
    accelerations, and every use here (generator components, gauge
    functions) is velocity-free.
    """
    vel_names = {f"v{i}" for i in range(1, n_dof + 1)}
    used = free_symbols(e) & vel_names
    if used:
        raise MechanicsError(
            f"total_time_derivative expects a function of (q, t); got {sorted(used)}")
    out = diff(e, "t")
    for i in range(1, n_dof + 1):
        out = out + vel(i) * diff(e, f"q{i}")
    return out


def noether_charge(L: Lagrangian, xi: Expr, eta: Sequence[Expr],
                   gauge: Expr = None) -> Expr:
    """Conserved charge of a variational symmetry:

        Q = sum_i p_i eta_i + xi * (L - sum_i p_i v_i) - G

    xi and eta_i are the infinitesimal time/coordinate components and G is
    the gauge function from the divergence condition.
    """
    eta = list(eta)
    if len(eta) != L.n_dof:
        raise MechanicsError(f"expected {L.n_dof} eta components, got {len(eta)}")
    if gauge is None:
        gauge = num(0)
    momenta = conjugate_momenta(L)
    charge = num(0)
    for p, e in zip(momenta, eta):
        charge = charge + p * e
    energy_like = L.expr
    for i, p in enumerate(momenta):
        energy_like = energy_like - p * vel(i + 1)
    charge = charge + xi * energy_like - gauge
    return charge


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the equations of motion on a uniform time grid."""

    times: np.ndarray        # (n_samples,)
    coords: np.ndarray       # (n_samples, n_dof)
    vels: np.ndarray         # (n_samples, n_dof)

    def __post_init__(self):
        if self.coords.shape != self.vels.shape:
            raise MechanicsError("coords and vels must have matching shapes")
        if self.coords.shape[0] != self.times.shape[0]:
            raise MechanicsError("times length must match sample count")

    @property
    def n_dof(self) -> int:
        return self.coords.shape[1]

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    def state_bindings(self, k: int) -> dict:
        """Bindings {q_i, v_i, t} at sample k, for expression evaluation."""
        b = {"t": float(self.times[k])}
        for i in range(self.n_dof):
            b[f"q{i + 1}"] = float(self.coords[k, i])
            b[f"v{i + 1}"] = float(self.vels[k, i])
        return b


def integrate_trajectory(L: Lagrangian, q0: Sequence[float], v0: Sequence[float],
                         t0: float, t1: float, n_steps: int) -> Trajectory:
    """Integrate the Euler-Lagrange equations with classical fixed-step RK4."""
    if n_steps < 1:
        raise MechanicsError("n_steps must be positive")
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if q0.shape != (L.n_dof,) or v0.shape != (L.n_dof,):
        raise MechanicsError(f"initial state must have {L.n_dof} components")
    accel = acceleration_function(L)
    h = (t1 - t0) / n_steps
    times = t0 + h * np.arange(n_steps + 1)
    coords = np.empty((n_steps + 1, L.n_dof))
    vels = np.empty((n_steps + 1, L.n_dof))
    coords[0] = q0
    vels[0] = v0
    q, v = q0.copy(), v0.copy()
    for k in range(n_steps):
        t = times[k]
        k1q, k1v = v, accel(q, v, t)
        k2q, k2v = v + 0.5 * h * k1v, accel(q + 0.5 * h * k1q, v + 0.5 * h * k1v, t + 0.5 * h)
        k3q, k3v = v + 0.5 * h * k2v, accel(q + 0.5 * h * k2q, v + 0.5 * h * k2v, t + 0.5 * h)
        k4q, k4v = v + h * k3v, accel(q + h * k3q, v + h * k3v, t + h)
        q = q + (h / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        coords[k + 1] = q
        vels[k + 1] = v
    return Trajectory(times=times, coords=coords, vels=vels)


@dataclass(frozen=True)
class ChargeDrift:
    """Evaluation of a candidate conserved quantity along a trajectory."""

    values: np.ndarray
    initial: float
    max_abs_drift: float
    rel_drift: float

    def conserved(self, tol: float) -> bool:
        return self.rel_drift <= tol


def check_charge_conserved(L: Lagrangian, charge: Expr,
                           trajectory: Trajectory) -> ChargeDrift:
    """Evaluate `charge` at every trajectory sample and measure its drift.

    rel_drift = max_k |Q_k - Q_0| / (1 + |Q_0|).
    """
    args = _state_args(L.n_dof)
    fn = numpy_callable(substitute(charge, L.constants), args)
    cols = ([trajectory.coords[:, i] for i in range(trajectory.n_dof)]
            + [trajectory.vels[:, i] for i in range(trajectory.n_dof)]
            + [trajectory.times])
    values = np.asarray(fn(*cols), dtype=float)
    values = np.broadcast_to(values, trajectory.times.shape).copy()
    initial = float(values[0])
    max_abs = float(np.max(np.abs(values - initial)))
    return ChargeDrift(values=values, initial=initial, max_abs_drift=max_abs,
                       rel_drift=max_abs / (1.0 + abs(initial)))


# ---------------------------------------------------------------------------
# trajectory CSV round trip


def save_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Write samples as CSV with header t,q1..qn,v1..vn."""
    n = trajectory.n_dof
    header = (["t"] + [f"q{i}" for i in range(1, n + 1)]
              + [f"v{i}" for i in range(1, n + 1)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(trajectory.n_samples):
            row = ([repr(float(trajectory.times[k]))]
                   + [repr(float(x)) for x in trajectory.coords[k]]
                   + [repr(float(x)) for x in trajectory.vels[k]])
            writer.writerow(row)


def load_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t" or (len(header) - 1) % 2 != 0:
            raise MechanicsError(f"not a trajectory CSV: header {header}")
        n = (len(header) - 1) // 2
        expected = (["t"] + [f"q{i}" for i in range(1, n + 1)]
                    + [f"v{i}" for i in range(1, n + 1)])
        if header != expected:
            raise MechanicsError(f"unexpected trajectory header {header}")
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        raise MechanicsError("trajectory CSV has no samples")
    return Trajectory(times=data[:, 0], coords=data[:, 1:n + 1],
                      vels=data[:, n + 1:])
