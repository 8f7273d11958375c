"""Quantum propagators on 1D grids.

Kernels come in two shapes:

- `KernelFunction`: a closed-form kernel K(x1, t1; x0, t0), evaluable at
  arbitrary endpoints (free particle and uniform-field closed forms are
  provided);
- `KernelMatrix`: a kernel sampled on a uniform grid, applied to
  wavefunctions by trapezoid quadrature and composed through intermediate
  grids; `timesliced_kernel` builds one by composing short-time kernels.

The transformation law connecting two systems whose Lagrangians differ by
a point transformation plus a total derivative,

    pullback(L_other, T) = L_base + dF/dt
    =>  K_other(Q(x1), t1; Q(x0), t0)
            = K_base(x1, t1; x0, t0) * exp(i [F(x1,t1) - F(x0,t0)] / hbar),

is available as `transform_kernel` (predict one kernel from the other)
and `check_kernel_transform_law` / `check_fundamental_identity` (sampled
verification; the latter sweeps the group parameter of a family). The law
assumes the transformation preserves volume (|dQ/dq| = 1) and leaves time
unchanged; both are enforced.

Grid quadrature of oscillatory kernels is delicate: composing sampled
continuum kernels is reliable only while the quadrature resolves the
phase. `timesliced_kernel` composes exactly what it is asked to; the
stability envelope is the caller's to respect (see docs/numerics_notes.md
for the aliasing analysis).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .expr import (
    Expr, equal_numeric, free_symbols, num, numpy_callable, poly_in,
    substitute, time_var, to_string,
)
from .symmetry import PointTransform, jacobian_determinant

__all__ = [
    "Grid1D", "Wavepacket", "KernelFunction", "KernelMatrix",
    "PropagatorError", "KernelLawReport",
    "free_kernel", "linear_potential_kernel", "timesliced_kernel",
    "potential_callable",
    "transform_kernel", "check_kernel_transform_law",
    "check_fundamental_identity", "fidelity",
    "save_kernel_csv", "save_packet_csv", "load_packet_csv",
]


class PropagatorError(Exception):
    pass


# ---------------------------------------------------------------------------
# grid and packets


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid with n points including both endpoints."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise PropagatorError("grid needs at least 2 points")
        if not self.x_max > self.x_min:
            raise PropagatorError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def norm(self, psi: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.sqrt(np.sum(self.weights * np.abs(psi) ** 2).real))


@dataclass(frozen=True)
class Wavepacket:
    """Gaussian packet psi(x) = (pi sigma^2)^(-1/4)
    exp(-(x - center)^2 / (2 sigma^2) + i momentum (x - center) / hbar).

    `sigma` is the wavefunction envelope width: the position density has
    standard deviation sigma / sqrt(2), and the mean kinetic energy is
    momentum^2 / (2 m) + hbar^2 / (4 m sigma^2).
    """

    center: float
    momentum: float
    sigma: float
    hbar: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise PropagatorError("sigma must be positive")

    def on_grid(self, grid: Grid1D) -> np.ndarray:
        x = grid.points
        envelope = np.exp(-((x - self.center) ** 2) / (2 * self.sigma ** 2))
        phase = np.exp(1j * self.momentum * (x - self.center) / self.hbar)
        return (np.pi * self.sigma ** 2) ** (-0.25) * envelope * phase


def fidelity(psi_a: np.ndarray, psi_b: np.ndarray, grid: Grid1D) -> float:
    """|<a|b>| / (|a| |b|) under trapezoid quadrature.

    Returns 0 for null, overflowed, or otherwise non-finite states — a
    diverged numerical propagation has no overlap worth reporting."""
    w = grid.weights
    with np.errstate(over="ignore", invalid="ignore"):
        na = np.sqrt(np.sum(w * np.abs(psi_a) ** 2))
        nb = np.sqrt(np.sum(w * np.abs(psi_b) ** 2))
        if not (np.isfinite(na) and np.isfinite(nb)) or na == 0 or nb == 0:
            return 0.0
        overlap = np.sum(w * np.conj(psi_a) * psi_b)
    if not np.isfinite(overlap):
        return 0.0
    return float(abs(overlap) / (na * nb))


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class KernelFunction:
    """Closed-form kernel K(x1, t1; x0, t0) with fixed endpoint times."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    t0: float
    t1: float
    label: str = ""

    def __call__(self, x1, x0) -> np.ndarray:
        return self.fn(np.asarray(x1, dtype=float), np.asarray(x0, dtype=float))

    def on_grid(self, grid: Grid1D) -> "KernelMatrix":
        x = grid.points
        values = self.fn(x[:, None], x[None, :])
        return KernelMatrix(grid=grid, t0=self.t0, t1=self.t1,
                            values=np.asarray(values, dtype=complex))


@dataclass(frozen=True)
class KernelMatrix:
    """Kernel sampled on a grid: values[i, j] = K(x_i, t1; x_j, t0)."""

    grid: Grid1D
    t0: float
    t1: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n, self.grid.n):
            raise PropagatorError(
                f"kernel values must be {self.grid.n}x{self.grid.n}")

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Propagate a wavefunction: (K psi)(x1) = int K(x1, x0) psi(x0) dx0."""
        return self.values @ (self.grid.weights * psi)

    def compose(self, earlier: "KernelMatrix") -> "KernelMatrix":
        """This kernel after `earlier`: integrates over the shared grid."""
        if earlier.grid != self.grid:
            raise PropagatorError("composition needs a shared grid")
        if abs(earlier.t1 - self.t0) > 1e-12:
            raise PropagatorError(
                f"time mismatch: earlier ends at {earlier.t1}, this starts at {self.t0}")
        w = self.grid.weights
        with np.errstate(over="ignore", invalid="ignore"):
            values = self.values @ (w[:, None] * earlier.values)
        return KernelMatrix(grid=self.grid, t0=earlier.t0, t1=self.t1,
                            values=values)


def free_kernel(t0: float, t1: float, mass: float = 1.0,
                hbar: float = 1.0) -> KernelFunction:
    """Closed-form free-particle kernel

        K = sqrt(m / (2 pi i hbar dt)) exp(i m (x1 - x0)^2 / (2 hbar dt)).
    """
    dt = t1 - t0
    if dt == 0:
        raise PropagatorError("kernel needs t1 != t0")
    prefactor = np.sqrt(mass / (2j * np.pi * hbar * dt))

    def fn(x1, x0):
        phase = mass * (x1 - x0) ** 2 / (2 * hbar * dt)
        return prefactor * np.exp(1j * phase)

    return KernelFunction(fn=fn, t0=t0, t1=t1, label="free")


def linear_potential_kernel(t0: float, t1: float, mass: float = 1.0,
                            hbar: float = 1.0,
                            gravity: float = 1.0) -> KernelFunction:
    """Closed-form kernel for V(x) = mass * gravity * x:

        K = sqrt(m / (2 pi i hbar dt)) *
            exp{ i m / (2 hbar dt) [ (x1-x0)^2
                                     - gravity (x1+x0) dt^2
                                     - gravity^2 dt^4 / 12 ] }.
    """
    dt = t1 - t0
    if dt == 0:
        raise PropagatorError("kernel needs t1 != t0")
    prefactor = np.sqrt(mass / (2j * np.pi * hbar * dt))

    def fn(x1, x0):
        phase = (mass / (2 * hbar * dt)) * (
            (x1 - x0) ** 2
            - gravity * (x1 + x0) * dt ** 2
            - gravity ** 2 * dt ** 4 / 12.0)
        return prefactor * np.exp(1j * phase)

    return KernelFunction(fn=fn, t0=t0, t1=t1, label="uniform-field")


PotentialLike = Union[None, Callable, Expr]


def potential_callable(potential: PotentialLike,
                       constants: Mapping[str, float] = None) -> Callable:
    """Coerce a potential (None, callable, or Expr in q1 and t) to f(x, t)."""
    if potential is None:
        return lambda x, t: np.zeros_like(x)
    if isinstance(potential, Expr):
        bound = substitute(potential, constants or {})
        stray = free_symbols(bound) - {"q1", "t"}
        if stray:
            raise PropagatorError(
                f"potential must be a function of position and time; found "
                f"{sorted(stray)} (velocity-coupled potentials are out of scope)")
        compiled = numpy_callable(bound, ["q1", "t"])
        return lambda x, t: np.broadcast_to(compiled(x, t), np.shape(x)).astype(float)
    if callable(potential):
        return potential
    raise PropagatorError(f"unsupported potential {type(potential).__name__}")


def timesliced_kernel(grid: Grid1D, t0: float, t1: float,
                      potential: PotentialLike = None, mass: float = 1.0,
                      hbar: float = 1.0, slices: int = 1,
                      constants: Mapping[str, float] = None) -> KernelMatrix:
    """Compose short-time kernels on the grid:

        K_slice = sqrt(m / (2 pi i hbar eps)) *
                  exp{ i/hbar [ m (xb - xa)^2 / (2 eps)
                               - eps V((xa + xb)/2, t_mid) ] }

    with eps = (t1 - t0)/slices, joined by trapezoid quadrature over the
    grid. For a time-independent potential the composition uses binary
    matrix powering. The result is exactly the requested composition; the
    caller chooses grid and slice counts inside the quadrature's stability
    envelope (see docs/numerics_notes.md).
    """
    if slices < 1:
        raise PropagatorError("slices must be positive")
    if t1 == t0:
        raise PropagatorError("kernel needs t1 != t0")
    V = potential_callable(potential, constants)
    eps = (t1 - t0) / slices
    x = grid.points
    xb = x[:, None]
    xa = x[None, :]
    prefactor = np.sqrt(mass / (2j * np.pi * hbar * eps))
    kinetic_phase = mass * (xb - xa) ** 2 / (2 * hbar * eps)
    midpoint = 0.5 * (xa + xb)

    time_dependent = isinstance(potential, Expr) and "t" in free_symbols(
        substitute(potential, constants or {}))

    def slice_matrix(k: int) -> np.ndarray:
        t_mid = t0 + (k + 0.5) * eps
        phase = kinetic_phase - eps * V(midpoint, t_mid) / hbar
        return prefactor * np.exp(1j * phase)

    w = grid.weights
    with np.errstate(over="ignore", invalid="ignore"):
        if not time_dependent and not callable(potential):
            S = slice_matrix(0)
            if slices == 1:
                total = S
            else:
                total = S @ np.linalg.matrix_power(w[:, None] * S, slices - 1)
        else:
            total = slice_matrix(0)
            for k in range(1, slices):
                total = slice_matrix(k) @ (w[:, None] * total)
    return KernelMatrix(grid=grid, t0=t0, t1=t1, values=total)


# ---------------------------------------------------------------------------
# transformation law


def _require_lawful_transform(transform: PointTransform, tol: float = 1e-9):
    if transform.n_dof != 1:
        raise PropagatorError("kernel transforms are 1-dof")
    if not equal_numeric(transform.tprime, time_var(), tol=tol,
                         bindings=dict(transform.constants)):
        raise PropagatorError("kernel transforms must leave time unchanged")
    det = jacobian_determinant(transform)
    if not equal_numeric(det, num(1), tol=tol,
                         bindings=dict(transform.constants)):
        raise PropagatorError(
            "kernel transforms must preserve volume (|dq'/dq| = 1); "
            f"got det = {to_string(det)}")


def _coordinate_maps(transform: PointTransform):
    """Forward map Q(x, t) and inverse x(y, t), both vectorized."""
    constants = dict(transform.constants)
    qp = substitute(transform.qprime[0], constants)
    forward = numpy_callable(qp, ["q1", "t"])

    try:
        coeffs = poly_in(qp, ["q1"])
    except Exception:
        coeffs = None
    if coeffs is not None and all(key[0] <= 1 for key in coeffs):
        alpha_expr = coeffs.get((1,), num(0))
        beta_expr = coeffs.get((0,), num(0))
        alpha = numpy_callable(alpha_expr, ["t"])
        beta = numpy_callable(beta_expr, ["t"])

        def inverse(y, t):
            a = np.broadcast_to(alpha(np.asarray(t, dtype=float)), np.shape(y))
            b = np.broadcast_to(beta(np.asarray(t, dtype=float)), np.shape(y))
            if np.any(a == 0):
                raise PropagatorError("transform is not invertible (alpha = 0)")
            return (y - b) / a

        return forward, inverse

    def inverse(y, t):
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(y_arr)
        for idx, target in np.ndenumerate(y_arr):
            lo, hi = -1.0, 1.0
            for _ in range(64):
                flo = forward(np.array(lo), t) - target
                fhi = forward(np.array(hi), t) - target
                if np.sign(flo) != np.sign(fhi):
                    break
                lo *= 2
                hi *= 2
            else:
                raise PropagatorError(
                    f"could not bracket inverse of transform at y={target}")
            out[idx] = brentq(lambda x: float(forward(np.array(x), t) - target),
                              lo, hi, xtol=1e-13)
        return out.reshape(np.shape(y))

    return forward, inverse


def _gauge_phase_fn(gauge: Expr, constants: Mapping[str, float], hbar: float):
    bound = substitute(gauge, constants or {})
    stray = free_symbols(bound) - {"q1", "t"}
    if stray:
        raise PropagatorError(
            f"gauge function must depend on position and time only; found "
            f"{sorted(stray)}")
    F = numpy_callable(bound, ["q1", "t"])

    def phase(x, t):
        return np.broadcast_to(F(x, t), np.shape(x)) / hbar

    return phase


def transform_kernel(kernel: KernelFunction, transform: PointTransform,
                     gauge: Expr, hbar: float = 1.0,
                     direction: str = "to-base") -> KernelFunction:
    """Predict a kernel from its partner across a certified equivalence.

    The certificate pullback(L_other, T) = L_base + dF/dt implies

        K_other(Q(x1), t1; Q(x0), t0)
            = K_base(x1, t1; x0, t0) * exp(i [F(x1,t1) - F(x0,t0)] / hbar).

    direction="to-base": `kernel` is K_other; returns the predicted K_base
        (evaluates K_other at transformed points; no inversion needed).
    direction="to-transformed": `kernel` is K_base; returns the predicted
        K_other (maps arguments back through the inverse transformation).

    T must leave time unchanged and preserve volume.
    """
    _require_lawful_transform(transform)
    forward, inverse = _coordinate_maps(transform)
    phase = _gauge_phase_fn(gauge, transform.constants, hbar)
    t0, t1 = kernel.t0, kernel.t1

    if direction == "to-base":
        def fn(x1, x0):
            return (kernel.fn(forward(x1, t1), forward(x0, t0))
                    * np.exp(-1j * (phase(x1, t1) - phase(x0, t0))))

        label = f"{kernel.label or 'kernel'}<-pulled"
    elif direction == "to-transformed":
        def fn(y1, y0):
            x1 = inverse(y1, t1)
            x0 = inverse(y0, t0)
            return (kernel.fn(x1, x0)
                    * np.exp(1j * (phase(x1, t1) - phase(x0, t0))))

        label = f"{kernel.label or 'kernel'}->pushed"
    else:
        raise PropagatorError(
            "direction must be 'to-base' or 'to-transformed'")
    return KernelFunction(fn=fn, t0=t0, t1=t1, label=label)


@dataclass(frozen=True)
class KernelLawReport:
    """Sampled verification of the kernel transformation law."""

    max_abs_deviation: float
    rel_deviation: float
    n_points: int
    s_values: tuple = ()

    def to_dict(self) -> dict:
        return {
            "max_abs_deviation": float(self.max_abs_deviation),
            "rel_deviation": float(self.rel_deviation),
            "n_points": self.n_points,
            "s_values": [float(s) for s in self.s_values],
        }


def check_kernel_transform_law(other_kernel: KernelFunction,
                               base_kernel: KernelFunction,
                               transform: PointTransform, gauge: Expr,
                               hbar: float = 1.0,
                               x_lo: float = -2.0, x_hi: float = 2.0,
                               n_points: int = 50) -> KernelLawReport:
    """Sample |K_other(Q(x1), Q(x0)) - K_base(x1, x0) e^{i dF/hbar}| on a
    mesh of endpoint pairs; rel_deviation is relative to max |rhs|."""
    _require_lawful_transform(transform)
    forward, _ = _coordinate_maps(transform)
    phase = _gauge_phase_fn(gauge, transform.constants, hbar)
    if abs(other_kernel.t0 - base_kernel.t0) > 1e-12 or \
            abs(other_kernel.t1 - base_kernel.t1) > 1e-12:
        raise PropagatorError("kernels must share endpoint times")
    t0, t1 = base_kernel.t0, base_kernel.t1
    x = np.linspace(x_lo, x_hi, n_points)
    x1 = x[:, None]
    x0 = x[None, :]
    lhs = other_kernel.fn(forward(np.broadcast_to(x1, (n_points, n_points)), t1),
                          forward(np.broadcast_to(x0, (n_points, n_points)), t0))
    rhs = base_kernel.fn(x1, x0) * np.exp(
        1j * (phase(np.broadcast_to(x1, (n_points, n_points)), t1)
              - phase(np.broadcast_to(x0, (n_points, n_points)), t0)))
    dev = np.abs(lhs - rhs)
    scale = float(np.max(np.abs(rhs)))
    max_abs = float(np.max(dev)) if np.all(np.isfinite(dev)) else float("inf")
    rel = max_abs / scale if scale > 0 else float("inf")
    return KernelLawReport(max_abs_deviation=max_abs, rel_deviation=rel,
                           n_points=n_points)


def check_fundamental_identity(kernel: KernelFunction, family,
                               gauge_family: Expr, hbar: float = 1.0,
                               x_lo: float = -2.0, x_hi: float = 2.0,
                               n_points: int = 50,
                               s_values: Sequence[float] = (-1.0, 0.5, 1.0),
                               ) -> KernelLawReport:
    """Verify the kernel's self-transformation under a symmetry family:
    the law with K_other = K_base = kernel, swept over the group parameter.
    """
    worst_abs = 0.0
    worst_rel = 0.0
    for s in s_values:
        frozen = family.freeze(float(s))
        gauge = substitute(gauge_family, {"s": num(float(s))})
        report = check_kernel_transform_law(
            kernel, kernel, frozen, gauge, hbar=hbar,
            x_lo=x_lo, x_hi=x_hi, n_points=n_points)
        worst_abs = max(worst_abs, report.max_abs_deviation)
        worst_rel = max(worst_rel, report.rel_deviation)
    return KernelLawReport(max_abs_deviation=worst_abs, rel_deviation=worst_rel,
                           n_points=n_points, s_values=tuple(s_values))


# ---------------------------------------------------------------------------
# CSV artifacts


def save_kernel_csv(kernel: KernelMatrix, path, stride: int = 1) -> None:
    """Write sampled kernel values as x1,x0,re,im rows.

    `stride` downsamples both endpoint axes (large grids produce n^2 rows;
    stride k keeps every k-th point of each).
    """
    if stride < 1:
        raise PropagatorError("stride must be positive")
    x = kernel.grid.points
    idx = range(0, kernel.grid.n, stride)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x0", "re", "im"])
        for i in idx:
            for j in idx:
                v = kernel.values[i, j]
                writer.writerow([repr(float(x[i])), repr(float(x[j])),
                                 repr(float(v.real)), repr(float(v.imag))])


def save_packet_csv(grid: Grid1D, psi: np.ndarray, path) -> None:
    """Write a sampled wavefunction as x,re,im,abs2 rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "re", "im", "abs2"])
        for xv, value in zip(grid.points, psi):
            writer.writerow([repr(float(xv)), repr(float(value.real)),
                             repr(float(value.imag)),
                             repr(float(abs(value) ** 2))])


def load_packet_csv(path):
    """Read x,re,im,abs2 rows back into (x array, psi array)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x", "re", "im", "abs2"]:
            raise PropagatorError(f"not a packet CSV: header {header}")
        xs, psis = [], []
        for row in reader:
            if not row:
                continue
            xs.append(float(row[0]))
            psis.append(float(row[1]) + 1j * float(row[2]))
    return np.asarray(xs), np.asarray(psis)
