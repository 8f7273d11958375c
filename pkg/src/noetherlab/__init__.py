"""noetherlab: variational symmetries, conserved quantities, and quantum
propagator transformation laws for small Lagrangian systems.

Layers, bottom up:

- expr: exact symbolic expressions with a small DSL (parse/print/diff/
  substitute/evaluate plus probabilistic equality testing).
- mechanics: Lagrangians, Euler-Lagrange dynamics, trajectory integration,
  and conserved quantities built from a symmetry generator.
- symmetry: finite point-transformation families, their infinitesimal
  generators, variational-symmetry checking, and extraction of the gauge
  function that certifies an equivalence.
- propagator: closed-form and time-sliced quantum kernels on 1D grids,
  wavepackets, and kernel transformation checks.
- operator_lab: grid operators, Crank-Nicolson evolution, conservation and
  symmetry checks at the operator level.
- cli: TOML scenario runner over all of the above.
"""

from .expr import (
    Expr, Num, Sym, Add, Mul, Pow, Neg, Fn,
    num, sym, coord, vel, time_var, group_param, const,
    add, mul, neg, pow_, sqrt, sin, cos, exp,
    parse_expr, to_string, diff, substitute, evaluate,
    equal_numeric, numeric_residual, free_symbols, poly_in, numpy_callable,
    ExprError, DslSyntaxError, UnknownIdentifierError, VarIndexError,
    EvalError, MissingBindingError, DomainError, NonPolynomialError,
)
from .mechanics import (
    Lagrangian, Trajectory, ChargeDrift, MechanicsError,
    conjugate_momenta, velocity_hessian, euler_lagrange,
    acceleration_function, total_time_derivative, noether_charge,
    integrate_trajectory, check_charge_conserved,
    save_trajectory_csv, load_trajectory_csv,
)
from .symmetry import (
    PointFamily, PointTransform, InfinitesimalGenerator,
    SymmetryCertificate, GaugeExtraction, SymmetryError,
    pullback_lagrangian, extract_gauge, check_variational_symmetry,
    check_infinitesimal, check_equivalence, infinitesimal_of,
    jacobian_determinant, is_unimodular,
)
from .propagator import (
    Grid1D, Wavepacket, KernelFunction, KernelMatrix, PropagatorError,
    KernelLawReport, free_kernel, linear_potential_kernel,
    timesliced_kernel, potential_callable, transform_kernel,
    check_kernel_transform_law, check_fundamental_identity, fidelity,
    save_kernel_csv, save_packet_csv, load_packet_csv,
)
from .operator_lab import (
    OperatorLabError, OperatorSpec, GridOperator, QuantumSystem,
    EvolutionResult, ConservedOperatorReport, SymmetryOperatorReport,
    position_matrix, momentum_matrix, build_operator, build_hamiltonian,
    crank_nicolson_evolve, compose_evolution_matrix, expectation,
    operator_norm, hermiticity_defect, check_conserved,
    check_symmetry_operator, check_symmetry_on_packet,
    galilean_boost_operator,
)

__version__ = "0.1.0"
