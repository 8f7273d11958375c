"""Discretized quantum operators and unitary evolution on a 1D grid.

This layer checks the operator side of the conservation/symmetry story
numerically.  A time-dependent observable affine in position and momentum,

    A(t) = alpha(t) x + beta(t) p + gamma(t),

is conserved when its expectation along the Schroedinger evolution stays
put, equivalently when A(t1) U = U A(t0) holds on the evolution operator
U = U(t1, t0).  A unitary family T(t) is a symmetry of the system when
T(t1) U = U T(t0).  Both statements are evaluated on a uniform grid:

* position is the diagonal matrix of grid points;
* momentum is the central difference p = -i hbar D1 with Dirichlet
  truncation, which is exactly Hermitian on the uniform grid;
* the Hamiltonian H = p^2/2m + V(x, t) uses the 3-point Laplacian;
* evolution is Crank-Nicolson, (1 + i dt H/2 hbar) psi' =
  (1 - i dt H/2 hbar) psi with H at the midpoint time — exactly unitary
  up to solver roundoff.

Boundaries are truncated, not absorbed: checks monitor the packet mass
near the grid edges and flag contamination instead of hiding it.  All
matrix-level checks are meant for reduced sizes (a few hundred points);
packet-level checks scale to the full grids used by the propagator layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy.linalg import solve_banded

from .expr import Expr, evaluate, free_symbols, parse_expr, substitute
from .propagator import Grid1D, PropagatorError, Wavepacket, potential_callable

__all__ = [
    "OperatorLabError", "OperatorSpec", "GridOperator", "QuantumSystem",
    "EvolutionResult", "ConservedOperatorReport", "SymmetryOperatorReport",
    "position_matrix", "momentum_matrix", "build_operator",
    "build_hamiltonian", "crank_nicolson_evolve", "compose_evolution_matrix",
    "expectation", "operator_norm", "hermiticity_defect",
    "check_conserved", "check_symmetry_operator", "check_symmetry_on_packet",
    "galilean_boost_operator",
]


class OperatorLabError(Exception):
    pass


_T_ONLY = {"t"}


def _coefficient(e: Union[Expr, int, float], constants: Mapping[str, float],
                 label: str) -> Expr:
    if isinstance(e, Expr):
        stray = free_symbols(e) - _T_ONLY - set(constants)
        if stray:
            raise OperatorLabError(
                f"operator coefficient {label} may depend on t and named "
                f"constants only; found {sorted(stray)}")
        return e
    raise OperatorLabError(f"operator coefficient {label} must be an Expr "
                           f"(got {type(e).__name__}); use parse_expr or from_dsl")


@dataclass(frozen=True)
class OperatorSpec:
    """A(t) = alpha(t) x + beta(t) p + gamma(t) with real coefficients."""

    alpha: Expr
    beta: Expr
    gamma: Expr
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "constants", dict(self.constants))
        for label in ("alpha", "beta", "gamma"):
            _coefficient(getattr(self, label), self.constants, label)

    @classmethod
    def from_dsl(cls, alpha: str, beta: str, gamma: str,
                 constants: Mapping[str, float] = None) -> "OperatorSpec":
        constants = dict(constants or {})
        registry = set(constants) | {"t"} if constants else None
        parsed = [parse_expr(text, n_dof=0, constants=registry)
                  for text in (alpha, beta, gamma)]
        return cls(alpha=parsed[0], beta=parsed[1], gamma=parsed[2],
                   constants=constants)

    def coefficients(self, t: float) -> tuple:
        """Numeric (alpha, beta, gamma) at time t."""
        out = []
        for label in ("alpha", "beta", "gamma"):
            e = getattr(self, label)
            value = evaluate(e, {**self.constants, "t": t})
            if not np.isfinite(value):
                raise OperatorLabError(
                    f"coefficient {label} is not finite at t={t}")
            out.append(float(value))
        return tuple(out)


@dataclass(frozen=True)
class GridOperator:
    """A dense operator sampled on a grid at a fixed time."""

    grid: Grid1D
    t: float
    matrix: np.ndarray

    def __post_init__(self):
        if self.matrix.shape != (self.grid.n, self.grid.n):
            raise OperatorLabError(
                f"operator matrix must be {self.grid.n}x{self.grid.n}")

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def expectation(self, psi: np.ndarray) -> float:
        return expectation(self.matrix, psi)


@dataclass(frozen=True)
class QuantumSystem:
    """One quantum degree of freedom: mass, hbar, and a potential V(x, t).

    The potential may be None (free), an Expr in q1 and t (plus named
    constants), or a plain callable (x, t) -> array.
    """

    mass: float = 1.0
    hbar: float = 1.0
    potential: object = None
    constants: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mass <= 0 or self.hbar <= 0:
            raise OperatorLabError("mass and hbar must be positive")
        object.__setattr__(self, "constants", dict(self.constants))
        try:
            potential_callable(self.potential, self.constants)
        except PropagatorError as exc:
            raise OperatorLabError(str(exc)) from exc

    @classmethod
    def from_dsl(cls, potential: str, mass: float = 1.0, hbar: float = 1.0,
                 constants: Mapping[str, float] = None) -> "QuantumSystem":
        constants = dict(constants or {})
        registry = set(constants) | {"t"} if constants else None
        expr = parse_expr(potential, n_dof=1, constants=registry)
        return cls(mass=mass, hbar=hbar, potential=expr, constants=constants)

    def potential_fn(self) -> Callable:
        return potential_callable(self.potential, self.constants)

    def potential_is_static(self) -> bool:
        """True when V provably does not depend on t (Expr or None)."""
        if self.potential is None:
            return True
        if isinstance(self.potential, Expr):
            bound = substitute(self.potential, self.constants)
            return "t" not in free_symbols(bound)
        return False


# ---------------------------------------------------------------------------
# operator construction


def position_matrix(grid: Grid1D) -> np.ndarray:
    return np.diag(grid.points).astype(complex)


def momentum_matrix(grid: Grid1D, hbar: float = 1.0) -> np.ndarray:
    """p = -i hbar * central difference; exactly Hermitian on a uniform grid."""
    n = grid.n
    c = -1j * hbar / (2 * grid.dx)
    m = np.zeros((n, n), dtype=complex)
    idx = np.arange(n - 1)
    m[idx, idx + 1] = c
    m[idx + 1, idx] = -c
    return m


def build_operator(spec: OperatorSpec, grid: Grid1D, t: float,
                   hbar: float = 1.0) -> GridOperator:
    """Materialize alpha(t) x + beta(t) p + gamma(t) as a Hermitian matrix."""
    a, b, c = spec.coefficients(t)
    matrix = a * position_matrix(grid) + b * momentum_matrix(grid, hbar)
    matrix[np.diag_indices(grid.n)] += c
    return GridOperator(grid=grid, t=t, matrix=matrix)


def _hamiltonian_bands(system: QuantumSystem, grid: Grid1D, t: float):
    """(diagonal, off-diagonal scalar) of H = p^2/2m + V at time t."""
    dx2 = grid.dx ** 2
    kinetic = system.hbar ** 2 / (system.mass * dx2)
    off = -system.hbar ** 2 / (2 * system.mass * dx2)
    v = np.asarray(system.potential_fn()(grid.points, t), dtype=float)
    return kinetic + v, off


def build_hamiltonian(mass: float, hbar: float, potential, grid: Grid1D,
                      t: float,
                      constants: Mapping[str, float] = None) -> GridOperator:
    """H = p^2/2m (3-point Laplacian) + V(x, t) as a Hermitian matrix."""
    system = QuantumSystem(mass=mass, hbar=hbar, potential=potential,
                           constants=constants or {})
    diag, off = _hamiltonian_bands(system, grid, t)
    n = grid.n
    matrix = np.zeros((n, n), dtype=complex)
    matrix[np.diag_indices(n)] = diag
    idx = np.arange(n - 1)
    matrix[idx, idx + 1] = off
    matrix[idx + 1, idx] = off
    return GridOperator(grid=grid, t=t, matrix=matrix)


def hermiticity_defect(matrix: np.ndarray) -> float:
    """max entrywise |M - M^dagger|."""
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def expectation(matrix: np.ndarray, psi: np.ndarray) -> float:
    """<psi|M|psi> / <psi|psi> (real part; imaginary part is roundoff for
    Hermitian M)."""
    num = np.vdot(psi, matrix @ psi)
    den = np.vdot(psi, psi).real
    if den == 0 or not np.isfinite(den):
        raise OperatorLabError("expectation of a null or non-finite state")
    return float((num / den).real)


def operator_norm(matrix: np.ndarray, iterations: int = 50,
                  seed: int = 7) -> float:
    """Largest singular value by power iteration on M^dagger M.

    Fixed iteration count and seed keep reports deterministic.
    """
    n = matrix.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mh = matrix.conj().T
    for _ in range(iterations):
        w = mh @ (matrix @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
    return float(np.linalg.norm(matrix @ v))


# ---------------------------------------------------------------------------
# Crank-Nicolson evolution


@dataclass(frozen=True)
class EvolutionResult:
    """States psi(t_k) on the grid for t_k = t0 + k dt, k = 0..steps."""

    grid: Grid1D
    times: np.ndarray
    states: np.ndarray  # shape (steps + 1, n)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self) -> np.ndarray:
        return np.array([self.grid.norm(s) for s in self.states])

    def max_norm_step_drift(self) -> float:
        norms = self.norms()
        return float(np.max(np.abs(np.diff(norms)))) if len(norms) > 1 else 0.0


def _as_state(psi0, grid: Grid1D) -> np.ndarray:
    if isinstance(psi0, Wavepacket):
        return psi0.on_grid(grid)
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (grid.n,):
        raise OperatorLabError(f"state must have shape ({grid.n},)")
    return psi


def crank_nicolson_evolve(system: QuantumSystem, psi0, grid: Grid1D,
                          t0: float, t1: float, steps: int,
                          keep_states: bool = True) -> EvolutionResult:
    """Evolve psi0 from t0 to t1 in `steps` Crank-Nicolson steps.

    Each step solves (1 + i dt H/2 hbar) psi_{k+1} = (1 - i dt H/2 hbar)
    psi_k with H evaluated at the midpoint time. The scheme is a Cayley
    transform of a Hermitian matrix, hence unitary to solver precision.
    With keep_states=False only the first and final states are stored.
    """
    if steps < 1:
        raise OperatorLabError("steps must be at least 1")
    psi = _as_state(psi0, grid)
    dt = (t1 - t0) / steps
    times = t0 + dt * np.arange(steps + 1)
    a = dt / (2 * system.hbar)
    static = system.potential_is_static()

    stored = [psi.copy()]
    bands = _hamiltonian_bands(system, grid, times[0] + dt / 2) if static else None
    for k in range(steps):
        if static:
            diag, off = bands
        else:
            diag, off = _hamiltonian_bands(system, grid, times[k] + dt / 2)
        rhs = (1 - 1j * a * diag) * psi
        rhs[:-1] -= 1j * a * off * psi[1:]
        rhs[1:] -= 1j * a * off * psi[:-1]
        ab = np.zeros((3, grid.n), dtype=complex)
        ab[0, 1:] = 1j * a * off
        ab[1, :] = 1 + 1j * a * diag
        ab[2, :-1] = 1j * a * off
        try:
            psi = solve_banded((1, 1), ab, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise OperatorLabError(f"Crank-Nicolson solve failed: {exc}") from exc
        if keep_states:
            stored.append(psi.copy())
    if not keep_states:
        stored.append(psi.copy())
        times = np.array([times[0], times[-1]])
    return EvolutionResult(grid=grid, times=times, states=np.array(stored))


def compose_evolution_matrix(system: QuantumSystem, grid: Grid1D,
                             t0: float, t1: float, steps: int) -> np.ndarray:
    """Dense U(t1, t0) composed from Crank-Nicolson steps.

    O(n^3) per step — intended for reduced grids (a few hundred points).
    """
    if steps < 1:
        raise OperatorLabError("steps must be at least 1")
    n = grid.n
    dt = (t1 - t0) / steps
    a = dt / (2 * system.hbar)
    u = np.eye(n, dtype=complex)
    idx = np.arange(n - 1)
    static = system.potential_is_static()
    plus = minus = None
    for k in range(steps):
        if plus is None or not static:
            diag, off = _hamiltonian_bands(system, grid, t0 + (k + 0.5) * dt)
            h = np.zeros((n, n), dtype=complex)
            h[np.diag_indices(n)] = diag
            h[idx, idx + 1] = off
            h[idx + 1, idx] = off
            plus = np.eye(n) + 1j * a * h
            minus = np.eye(n) - 1j * a * h
        u = np.linalg.solve(plus, minus @ u)
    return u


# ---------------------------------------------------------------------------
# conservation check


@dataclass(frozen=True)
class ConservedOperatorReport:
    """Expectation track of A(t) along a Crank-Nicolson evolution."""

    times: np.ndarray
    expectations: np.ndarray
    initial: float
    max_rel_drift: float
    matrix_rel_deviation: float  # nan when the matrix form was skipped
    max_edge_norm: float
    boundary_warning: bool

    def conserved(self, tol: float) -> bool:
        return self.max_rel_drift < tol

    def to_dict(self, series_points: int = 101) -> dict:
        stride = max(1, -((len(self.times) - 1) // -max(1, series_points - 1)))
        series = [[float(t), float(v)] for t, v in
                  zip(self.times[::stride], self.expectations[::stride])]
        out = {
            "initial": self.initial,
            "max_rel_drift": self.max_rel_drift,
            "max_edge_norm": self.max_edge_norm,
            "boundary_warning": self.boundary_warning,
            "series": series,
        }
        if np.isfinite(self.matrix_rel_deviation):
            out["matrix_rel_deviation"] = self.matrix_rel_deviation
        return out


def _edge_norm(psi: np.ndarray, grid: Grid1D, margin: int = 5) -> float:
    edge = np.concatenate([psi[:margin], psi[-margin:]])
    return float(np.sqrt(np.sum(np.abs(edge) ** 2) * grid.dx))


def _apply_affine(a: float, b: float, c: float, x: np.ndarray,
                  psi: np.ndarray, hbar: float, dx: float) -> np.ndarray:
    """(a x + b p + c) psi without materializing the matrix."""
    out = (a * x + c) * psi.astype(complex)
    scale = b * (-1j * hbar) / (2 * dx)
    out[:-1] += scale * psi[1:]
    out[1:] -= scale * psi[:-1]
    return out


def check_conserved(spec: OperatorSpec, system: QuantumSystem, psi0,
                    grid: Grid1D, t0: float, t1: float, steps: int,
                    matrix_n: int = 128,
                    matrix_steps: int = 200) -> ConservedOperatorReport:
    """Track <psi(t)|A(t)|psi(t)> along the evolution and report the drift.

    Two forms are evaluated:
    * expectation track on the full grid — max relative drift
      max_k |<A>(t_k) - <A>(t0)| / (1 + |<A>(t0)|);
    * matrix identity ||A(t1) U - U A(t0)|| / ||A(t0)|| on a reduced grid
      of matrix_n points (same span), with U composed from Crank-Nicolson
      steps.  Pass matrix_n=0 to skip the matrix form.

    The report flags boundary contamination when the packet mass within
    5 grid points of either edge exceeds 1e-8 at any recorded time.
    """
    if steps < 1:
        raise OperatorLabError("steps must be at least 1")
    psi = _as_state(psi0, grid)
    x = grid.points
    dt = (t1 - t0) / steps
    evo = crank_nicolson_evolve(system, psi, grid, t0, t1, steps)

    values = np.empty(steps + 1)
    edge_max = 0.0
    for k, t in enumerate(evo.times):
        a, b, c = spec.coefficients(t)
        state = evo.states[k]
        applied = _apply_affine(a, b, c, x, state, system.hbar, grid.dx)
        den = np.vdot(state, state).real
        values[k] = (np.vdot(state, applied) / den).real
        edge_max = max(edge_max, _edge_norm(state, grid))

    initial = float(values[0])
    drift = float(np.max(np.abs(values - initial)) / (1 + abs(initial)))

    matrix_dev = float("nan")
    if matrix_n:
        coarse = Grid1D(grid.x_min, grid.x_max, matrix_n)
        u = compose_evolution_matrix(system, coarse, t0, t1, matrix_steps)
        a1 = build_operator(spec, coarse, t1, system.hbar).matrix
        a0 = build_operator(spec, coarse, t0, system.hbar).matrix
        defect = operator_norm(a1 @ u - u @ a0)
        matrix_dev = float(defect / operator_norm(a0))

    return ConservedOperatorReport(
        times=evo.times, expectations=values, initial=initial,
        max_rel_drift=drift, matrix_rel_deviation=matrix_dev,
        max_edge_norm=edge_max, boundary_warning=bool(edge_max > 1e-8))


# ---------------------------------------------------------------------------
# symmetry-operator check


@dataclass(frozen=True)
class SymmetryOperatorReport:
    """Deviation of T(t1) U - U T(t0), matrix or packet level."""

    deviation: float
    reference: float  # ||U|| (matrix level) or 1.0 (normalized packet level)
    kind: str

    def to_dict(self) -> dict:
        return {"deviation": self.deviation, "reference": self.reference,
                "kind": self.kind}


def check_symmetry_operator(t_factory: Callable[[float], GridOperator],
                            system: QuantumSystem, grid: Grid1D,
                            t0: float, t1: float,
                            steps: int = 500) -> SymmetryOperatorReport:
    """Relative operator-norm deviation ||T(t1) U - U T(t0)|| / ||U||.

    U is composed densely from Crank-Nicolson steps, so keep the grid at
    reduced size (a few hundred points).  The operator norm is a
    worst-case over all grid states including wavelengths near the grid
    cutoff; see check_symmetry_on_packet for the smooth-state version.
    """
    u = compose_evolution_matrix(system, grid, t0, t1, steps)
    top1 = t_factory(t1)
    top0 = t_factory(t0)
    for top in (top0, top1):
        if top.grid != grid:
            raise OperatorLabError("T operators must live on the check grid")
    defect = operator_norm(top1.matrix @ u - u @ top0.matrix)
    reference = operator_norm(u)
    return SymmetryOperatorReport(deviation=float(defect / reference),
                                  reference=float(reference), kind="matrix")


def check_symmetry_on_packet(t_factory: Callable[[float], GridOperator],
                             system: QuantumSystem, psi0, grid: Grid1D,
                             t0: float, t1: float,
                             steps: int = 500) -> SymmetryOperatorReport:
    """Norm of (T(t1) U - U T(t0)) psi0 for a normalized smooth state."""
    psi = _as_state(psi0, grid)
    psi = psi / grid.norm(psi)
    lhs = t_factory(t1).apply(
        crank_nicolson_evolve(system, psi, grid, t0, t1, steps,
                              keep_states=False).final)
    rhs = crank_nicolson_evolve(system, t_factory(t0).apply(psi), grid,
                                t0, t1, steps, keep_states=False).final
    return SymmetryOperatorReport(deviation=float(grid.norm(lhs - rhs)),
                                  reference=1.0, kind="packet")


def galilean_boost_operator(grid: Grid1D, t: float, boost: float,
                            mass: float = 1.0, hbar: float = 1.0,
                            gravity: float = 0.0,
                            drop_gravity_phase: bool = False) -> GridOperator:
    """Unitary boost T(t): multiply by the boost phase, then shift by boost*t.

    T(t) = exp[(i/hbar)(m*boost*x - m*boost^2*t/2 - m*gravity*boost*t^2/2)]
           compose shift(boost*t),

    where shift(a) maps psi(x) to psi(x - a) (Dirichlet truncation at the
    edges).  The shift must land on the grid: boost*t/dx has to be an
    integer, otherwise the operator identity under test would be polluted
    by interpolation error.  drop_gravity_phase omits the gravity term of
    the phase — an ablation handle for sensitivity checks.
    """
    shift = boost * t / grid.dx
    k = round(shift)
    if abs(shift - k) > 1e-9:
        raise OperatorLabError(
            f"boost*t must be a whole number of grid steps; got "
            f"boost*t/dx = {shift}")
    phase = mass * boost * grid.points - 0.5 * mass * boost ** 2 * t
    if not drop_gravity_phase:
        phase = phase - 0.5 * mass * gravity * boost * t ** 2
    matrix = np.diag(np.exp(1j * phase / hbar)) @ np.eye(grid.n, k=-k)
    return GridOperator(grid=grid, t=t, matrix=matrix.astype(complex))
