"""Scenario runner: declarative symmetry and propagator checks from TOML.

A scenario file declares one or two Lagrangian systems, optionally a
one-parameter family of point transformations, a fixed transform, and an
infinitesimal generator, followed by a list of checks:

    symmetry       divergence condition for the family, gauge extracted
    infinitesimal  generator residual in the divergence condition
    noether        charge drift along an integrated trajectory
    equivalence    L_other pulled back equals L_base + dF/dt
    kernel-compare numeric propagator vs closed form (two modes)
    fundam         closed-form kernel vs its own transform under the family
    conserved-op   expectation drift of an operator under evolution
    symmetry-op    boost operator commuting with the evolution

Every check yields a measured number compared against its threshold;
`status` is "pass" exactly when measured <= threshold.  Reports are
printed as text and optionally written as deterministic JSON (identical
scenario + seed give identical bytes except for the wall_time_s field).

Exit codes: 0 all checks pass; 1 at least one check failed; 2 the
scenario file could not be parsed or validated; 3 a check raised during
execution.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import __version__
from .expr import Expr, equal_numeric, num, numeric_residual, parse_expr, \
    substitute, to_string
from .mechanics import (Lagrangian, check_charge_conserved,
                        integrate_trajectory, save_trajectory_csv)
from .operator_lab import (OperatorSpec, QuantumSystem, check_conserved,
                           check_symmetry_on_packet, check_symmetry_operator,
                           galilean_boost_operator)
from .propagator import (Grid1D, Wavepacket, check_fundamental_identity,
                         check_kernel_transform_law, fidelity, free_kernel,
                         linear_potential_kernel, save_kernel_csv,
                         save_packet_csv, timesliced_kernel)
from .symmetry import (InfinitesimalGenerator, PointFamily, PointTransform,
                       check_equivalence, check_infinitesimal,
                       check_variational_symmetry, jacobian_determinant,
                       pullback_lagrangian)

__all__ = ["main", "run_scenario", "load_scenario", "Scenario", "ScenarioError"]

EXIT_PASS, EXIT_CHECK_FAILED, EXIT_PARSE_ERROR, EXIT_EXEC_ERROR = 0, 1, 2, 3

SCHEMA_VERSION = 1
DEFAULT_SEED = 1234

CHECK_KINDS = ("symmetry", "infinitesimal", "noether", "equivalence",
               "kernel-compare", "fundam", "conserved-op", "symmetry-op")

_DEFAULT_TOL = {
    "symmetry": 1e-9,
    "infinitesimal": 1e-9,
    "noether": 1e-6,
    "equivalence": 1e-9,
    "kernel-compare": 1e-3,
    "fundam": 1e-9,
    "conserved-op": 1e-3,
    "symmetry-op": 5e-3,
}


class ScenarioError(Exception):
    """The scenario file is malformed or incomplete (exit code 2)."""


class CheckExecutionError(Exception):
    """A check could not be executed (exit code 3)."""


# ---------------------------------------------------------------------------
# scenario model


@dataclass(frozen=True)
class CheckConfig:
    kind: str
    name: str
    tol: float
    settings: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    path: str
    title: str
    seed: int
    system: Lagrangian
    system2: Optional[Lagrangian]
    family: Optional[PointFamily]
    transform: Optional[PointTransform]
    generator: Optional[InfinitesimalGenerator]
    checks: tuple


def _require(table: Mapping, key: str, where: str):
    if key not in table:
        raise ScenarioError(f"missing key '{key}' in [{where}]")
    return table[key]


def _constants(table: Mapping, where: str) -> dict:
    constants = table.get("constants", {})
    if not isinstance(constants, dict):
        raise ScenarioError(f"[{where}.constants] must be a table of numbers")
    out = {}
    for name, value in constants.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioError(
                f"constant {name!r} in [{where}.constants] must be a number")
        out[name] = float(value)
    return out


def _build_system(table: Mapping, where: str) -> Lagrangian:
    n_dof = _require(table, "n_dof", where)
    text = _require(table, "lagrangian", where)
    if not isinstance(n_dof, int) or n_dof < 1:
        raise ScenarioError(f"[{where}] n_dof must be a positive integer")
    try:
        return Lagrangian.from_dsl(text, n_dof=n_dof,
                                   constants=_constants(table, where))
    except Exception as exc:
        raise ScenarioError(f"[{where}] lagrangian: {exc}") from exc


def _string_list(value, key: str, where: str) -> list:
    if not (isinstance(value, list) and value
            and all(isinstance(v, str) for v in value)):
        raise ScenarioError(f"[{where}] {key} must be a non-empty list of strings")
    return value


_CHECK_REQUIREMENTS = {
    "symmetry": ("family",),
    "infinitesimal": ("generator",),
    "noether": ("generator",),
    "equivalence": ("system2", "transform"),
    "fundam": ("family",),
    "kernel-compare": (),
    "conserved-op": (),
    "symmetry-op": (),
}


def load_scenario(path, text: str = None) -> Scenario:
    """Parse and validate a scenario; raises ScenarioError on any defect."""
    if text is None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ScenarioError(f"scenario file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}")
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}")

    schema = data.get("schema")
    if schema != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported or missing schema (expected schema = {SCHEMA_VERSION})")
    seed = data.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int):
        raise ScenarioError("seed must be an integer")

    if "system" not in data:
        raise ScenarioError("missing [system] section")
    system = _build_system(data["system"], "system")
    system2 = (_build_system(data["system2"], "system2")
               if "system2" in data else None)

    family = transform = generator = None
    shared = dict(system.constants)
    if system2 is not None:
        for name, value in system2.constants.items():
            if name in shared and shared[name] != value:
                raise ScenarioError(
                    f"constant {name!r} differs between [system] and [system2]")
            shared[name] = value

    if "family" in data:
        table = data["family"]
        qprime = _string_list(_require(table, "qprime", "family"),
                              "qprime", "family")
        try:
            family = PointFamily.from_dsl(
                qprime, n_dof=system.n_dof, tprime=table.get("tprime", "t"),
                constants=shared)
        except Exception as exc:
            raise ScenarioError(f"[family]: {exc}") from exc
    if "transform" in data:
        table = data["transform"]
        qprime = _string_list(_require(table, "qprime", "transform"),
                              "qprime", "transform")
        try:
            transform = PointTransform.from_dsl(
                qprime, n_dof=system.n_dof, tprime=table.get("tprime", "t"),
                constants=shared)
        except Exception as exc:
            raise ScenarioError(f"[transform]: {exc}") from exc
    if "generator" in data:
        table = data["generator"]
        eta = _string_list(_require(table, "eta", "generator"),
                           "eta", "generator")
        try:
            generator = InfinitesimalGenerator.from_dsl(
                xi=table.get("xi", "0"), eta=eta, n_dof=system.n_dof,
                gauge=table.get("gauge", "0"), constants=shared)
        except Exception as exc:
            raise ScenarioError(f"[generator]: {exc}") from exc

    raw_checks = data.get("check", [])
    if not isinstance(raw_checks, list):
        raise ScenarioError("[[check]] must be an array of tables")
    checks = []
    declared = {"system": system, "system2": system2, "family": family,
                "transform": transform, "generator": generator}
    for i, table in enumerate(raw_checks):
        where = f"check[{i}]"
        kind = _require(table, "kind", where)
        if kind not in CHECK_KINDS:
            raise ScenarioError(
                f"[{where}] unknown kind {kind!r}; expected one of "
                f"{', '.join(CHECK_KINDS)}")
        for needed in _CHECK_REQUIREMENTS[kind]:
            if declared[needed] is None:
                raise ScenarioError(
                    f"[{where}] kind {kind!r} needs a [{needed}] section")
        name = table.get("name", f"{kind}-{i + 1}")
        if not isinstance(name, str) or not name:
            raise ScenarioError(f"[{where}] name must be a non-empty string")
        tol = table.get("tol", _DEFAULT_TOL[kind])
        if not isinstance(tol, (int, float)) or isinstance(tol, bool) or tol <= 0:
            raise ScenarioError(f"[{where}] tol must be a positive number")
        settings = {k: v for k, v in table.items()
                    if k not in ("kind", "name", "tol")}
        checks.append(CheckConfig(kind=kind, name=name, tol=float(tol),
                                  settings=settings))

    return Scenario(path=str(path), title=data.get("title", ""), seed=seed,
                    system=system, system2=system2, family=family,
                    transform=transform, generator=generator,
                    checks=tuple(checks))


# ---------------------------------------------------------------------------
# check runners — each returns (measured, ok, extra)


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in name.lower()).strip("-")


def _registry(constants: Mapping[str, float]):
    return set(constants) if constants else None


def _parse_setting_expr(text: str, n_dof: int, constants, what: str) -> Expr:
    try:
        return parse_expr(text, n_dof=n_dof, constants=_registry(constants))
    except Exception as exc:
        raise CheckExecutionError(f"cannot parse {what}: {exc}") from exc


def _gauge_match_residual(extracted: Expr, expected_text: str,
                          n_dof: int, constants, seed: int) -> float:
    expected = _parse_setting_expr(expected_text, n_dof, constants,
                                   "expect_gauge")
    if extracted is None:
        extracted = num(0)
    return numeric_residual(extracted, expected, seed=seed,
                            bindings=dict(constants))


def _run_symmetry(scn: Scenario, check: CheckConfig, seed: int, dump):
    cert = check_variational_symmetry(
        scn.system, scn.family, tol=check.tol,
        trials=check.settings.get("trials", 64), seed=seed)
    measured = cert.measured
    extra = {"certificate": cert.to_dict()}
    if "expect_gauge" in check.settings:
        residual = _gauge_match_residual(
            cert.gauge, check.settings["expect_gauge"], scn.system.n_dof,
            scn.family.constants, seed)
        extra["expected_gauge_residual"] = float(residual)
        measured = max(measured, residual)
    return measured, measured <= check.tol, extra


def _run_infinitesimal(scn: Scenario, check: CheckConfig, seed: int, dump):
    cert = check_infinitesimal(
        scn.system, scn.generator, tol=check.tol,
        trials=check.settings.get("trials", 64), seed=seed)
    return cert.measured, cert.ok, {"certificate": cert.to_dict()}


def _run_noether(scn: Scenario, check: CheckConfig, seed: int, dump):
    L = scn.system
    s = check.settings
    q0 = s.get("q0")
    v0 = s.get("v0")
    if q0 is None or v0 is None:
        raise CheckExecutionError("noether check needs q0 and v0 lists")
    t_span = s.get("t_span", [0.0, 2.0])
    steps = s.get("steps", 1000)
    charge = scn.generator.noether_charge(L)
    trajectory = integrate_trajectory(L, q0, v0, float(t_span[0]),
                                      float(t_span[1]), steps)
    drift = check_charge_conserved(L, charge, trajectory)
    extra = {
        "charge": to_string(charge),
        "initial": float(drift.initial),
        "max_abs_drift": float(drift.max_abs_drift),
    }
    if dump is not None:
        out = dump / f"{_slug(check.name)}_trajectory.csv"
        save_trajectory_csv(trajectory, out)
        extra["artifacts"] = [out.name]
    return float(drift.rel_drift), drift.rel_drift <= check.tol, extra


def _pulled_back_other(scn: Scenario) -> Lagrangian:
    merged = dict(scn.system.constants)
    merged.update(scn.system2.constants)
    pulled = pullback_lagrangian(scn.system2, scn.transform)
    return Lagrangian(n_dof=scn.system.n_dof, expr=pulled, constants=merged)


def _run_equivalence(scn: Scenario, check: CheckConfig, seed: int, dump):
    pulled = _pulled_back_other(scn)
    cert = check_equivalence(scn.system, pulled, tol=check.tol,
                             trials=check.settings.get("trials", 64),
                             seed=seed)
    measured = cert.measured
    extra = {"certificate": cert.to_dict()}
    # the propagator transformation law needs a volume-preserving map, so
    # the Jacobian defect counts against the equivalence
    det = jacobian_determinant(scn.transform)
    det_residual = numeric_residual(det, num(1), seed=seed,
                                    bindings=dict(pulled.constants))
    extra["jacobian_residual"] = float(det_residual)
    measured = max(measured, det_residual)
    if "expect_gauge" in check.settings:
        residual = _gauge_match_residual(
            cert.gauge, check.settings["expect_gauge"], scn.system.n_dof,
            pulled.constants, seed)
        extra["expected_gauge_residual"] = float(residual)
        measured = max(measured, residual)
    return measured, measured <= check.tol, extra


def _closed_kernel(name: str, t0: float, t1: float, mass: float, hbar: float,
                   gravity: Optional[float]):
    if name == "free":
        return free_kernel(t0, t1, mass=mass, hbar=hbar)
    if name == "linear":
        if gravity is None:
            raise CheckExecutionError(
                "closed kernel 'linear' needs constant g (or setting gravity)")
        return linear_potential_kernel(t0, t1, mass=mass, hbar=hbar,
                                       gravity=gravity)
    raise CheckExecutionError(
        f"unknown closed kernel {name!r}; expected 'free' or 'linear'")


def _mgh(scn: Scenario, settings: Mapping):
    constants = dict(scn.system.constants)
    if scn.system2 is not None:
        constants.update(scn.system2.constants)
    mass = float(settings.get("mass", constants.get("m", 1.0)))
    hbar = float(settings.get("hbar", constants.get("hbar", 1.0)))
    gravity = settings.get("gravity", constants.get("g"))
    gravity = None if gravity is None else float(gravity)
    return mass, hbar, gravity, constants


def _packet(settings: Mapping, hbar: float) -> Wavepacket:
    table = settings.get("packet")
    if not isinstance(table, dict):
        raise CheckExecutionError(
            "check needs a packet table: packet = {center, momentum, sigma}")
    try:
        return Wavepacket(center=float(table["center"]),
                          momentum=float(table["momentum"]),
                          sigma=float(table["sigma"]), hbar=hbar)
    except KeyError as exc:
        raise CheckExecutionError(f"packet table missing {exc}") from exc


def _grid(settings: Mapping) -> Grid1D:
    try:
        return Grid1D(float(settings["x_min"]), float(settings["x_max"]),
                      int(settings["n"]))
    except KeyError as exc:
        raise CheckExecutionError(f"check needs grid key {exc}") from exc


def _run_kernel_compare(scn: Scenario, check: CheckConfig, seed: int, dump):
    s = check.settings
    mode = s.get("mode")
    mass, hbar, gravity, constants = _mgh(scn, s)

    if mode == "timesliced-vs-closed":
        grid = _grid(s)
        t0, t1 = float(s.get("t0", 0.0)), float(s["t1"])
        slices = int(s.get("slices", 1))
        closed_name = s.get("closed", "linear")
        closed = _closed_kernel(closed_name, t0, t1, mass, hbar, gravity)
        potential = None
        if closed_name == "linear":
            potential = parse_expr("m*g*q1", n_dof=1, constants={"m", "g"})
        numeric = timesliced_kernel(
            grid, t0, t1, potential=potential, mass=mass, hbar=hbar,
            slices=slices, constants={"m": mass, "g": gravity or 0.0})
        closed_matrix = closed.on_grid(grid)
        psi0 = _packet(s, hbar).on_grid(grid)
        a = numeric.apply(psi0)
        b = closed_matrix.apply(psi0)
        measured = 1.0 - fidelity(a, b, grid)
        extra = {"mode": mode, "fidelity": float(1.0 - measured)}
        if dump is not None:
            slug = _slug(check.name)
            stride = max(1, grid.n // 64)
            artifacts = []
            for label, kernel, state in (("numeric", numeric, a),
                                         ("closed", closed_matrix, b)):
                kpath = dump / f"{slug}_kernel_{label}.csv"
                save_kernel_csv(kernel, kpath, stride=stride)
                ppath = dump / f"{slug}_packet_{label}.csv"
                save_packet_csv(grid, state, ppath)
                artifacts += [kpath.name, ppath.name]
            extra["artifacts"] = artifacts
        return float(measured), measured <= check.tol, extra

    if mode == "transform-vs-closed":
        if scn.system2 is None or scn.transform is None:
            raise CheckExecutionError(
                "transform-vs-closed needs [system2] and [transform]")
        pulled = _pulled_back_other(scn)
        cert = check_equivalence(scn.system, pulled, tol=1e-9, seed=seed)
        if not cert.ok:
            raise CheckExecutionError(
                "transform-vs-closed: the declared transform does not relate "
                "the two Lagrangians, no gauge function exists")
        base_name = s.get("base_kernel", "linear")
        other_name = s.get("other_kernel", "free")
        t0 = float(s.get("t0", 0.0))
        t1_values = s.get("t1_values", [0.3, 0.7, 1.3])
        x_lo, x_hi = float(s.get("x_lo", -5.0)), float(s.get("x_hi", 5.0))
        n_points = int(s.get("n_points", 50))
        worst = 0.0
        per_t1 = {}
        for t1 in t1_values:
            other = _closed_kernel(other_name, t0, float(t1), mass, hbar,
                                   gravity)
            base = _closed_kernel(base_name, t0, float(t1), mass, hbar,
                                  gravity)
            report = check_kernel_transform_law(
                other, base, scn.transform, cert.gauge, hbar=hbar,
                x_lo=x_lo, x_hi=x_hi, n_points=n_points)
            per_t1[repr(float(t1))] = report.to_dict()
            worst = max(worst, report.max_abs_deviation)
        extra = {"mode": mode, "gauge": to_string(cert.gauge),
                 "per_t1": per_t1}
        if dump is not None:
            slug = _slug(check.name)
            grid = Grid1D(x_lo, x_hi, n_points)
            base = _closed_kernel(base_name, t0, float(t1_values[-1]), mass,
                                  hbar, gravity)
            kpath = dump / f"{slug}_kernel_closed.csv"
            save_kernel_csv(base.on_grid(grid), kpath)
            extra["artifacts"] = [kpath.name]
        return float(worst), worst <= check.tol, extra

    raise CheckExecutionError(
        f"kernel-compare needs mode 'timesliced-vs-closed' or "
        f"'transform-vs-closed' (got {mode!r})")


def _run_fundam(scn: Scenario, check: CheckConfig, seed: int, dump):
    s = check.settings
    mass, hbar, gravity, constants = _mgh(scn, s)
    cert = check_variational_symmetry(scn.system, scn.family, tol=1e-9,
                                      seed=seed)
    if not cert.ok:
        raise CheckExecutionError(
            "fundam: the family is not a variational symmetry, no gauge "
            "function exists")
    t0 = float(s.get("t0", 0.0))
    t1_values = s.get("t1_values", [0.7])
    s_values = tuple(float(v) for v in s.get("s_values", [-1.0, 0.5, 1.0]))
    x_lo, x_hi = float(s.get("x_lo", -5.0)), float(s.get("x_hi", 5.0))
    n_points = int(s.get("n_points", 50))
    closed_name = s.get("closed", "linear")
    worst = 0.0
    per_t1 = {}
    for t1 in t1_values:
        kernel = _closed_kernel(closed_name, t0, float(t1), mass, hbar,
                                gravity)
        report = check_fundamental_identity(
            kernel, scn.family, gauge_family=cert.gauge, hbar=hbar,
            x_lo=x_lo, x_hi=x_hi, n_points=n_points, s_values=s_values)
        per_t1[repr(float(t1))] = report.to_dict()
        worst = max(worst, report.max_abs_deviation)
    extra = {"gauge": to_string(cert.gauge), "per_t1": per_t1}
    return float(worst), worst <= check.tol, extra


def _quantum_system(scn: Scenario, mass: float, hbar: float,
                    constants: Mapping[str, float]) -> QuantumSystem:
    """Potential read off the 1-dof Lagrangian: V = -L at v = 0."""
    L = scn.system
    if L.n_dof != 1:
        raise CheckExecutionError("operator checks need a 1-dof system")
    v_expr = -substitute(L.expr, {"v1": num(0)})
    kinetic_only = L.expr + v_expr  # should be m/2 v1^2
    template = parse_expr("m/2*v1^2", n_dof=1, constants={"m"})
    if not equal_numeric(kinetic_only, template,
                         bindings={**constants, "m": mass}):
        raise CheckExecutionError(
            "operator checks need a Lagrangian of the form m/2*v1^2 - V(q1, t)")
    return QuantumSystem(mass=mass, hbar=hbar, potential=v_expr,
                         constants=dict(constants))


def _run_conserved_op(scn: Scenario, check: CheckConfig, seed: int, dump):
    s = check.settings
    mass, hbar, gravity, constants = _mgh(scn, s)
    system = _quantum_system(scn, mass, hbar, constants)
    try:
        spec = OperatorSpec.from_dsl(s["alpha"], s["beta"], s["gamma"],
                                     constants=constants)
    except KeyError as exc:
        raise CheckExecutionError(
            f"conserved-op needs coefficient {exc}") from exc
    grid = _grid(s)
    packet = _packet(s, hbar)
    t0, t1 = float(s.get("t0", 0.0)), float(s["t1"])
    steps = int(s.get("steps", 1000))
    report = check_conserved(
        spec, system, packet, grid, t0, t1, steps,
        matrix_n=int(s.get("matrix_n", 128)),
        matrix_steps=int(s.get("matrix_steps", 200)))
    extra = {"report": report.to_dict()}
    if dump is not None:
        out = dump / f"{_slug(check.name)}_expectation.csv"
        with open(out, "w") as fh:
            fh.write("t,value\n")
            for t, v in zip(report.times, report.expectations):
                fh.write(f"{t!r},{v!r}\n")
        extra["artifacts"] = [out.name]
    measured = report.max_rel_drift
    return float(measured), measured <= check.tol, extra


def _run_symmetry_op(scn: Scenario, check: CheckConfig, seed: int, dump):
    s = check.settings
    mass, hbar, gravity, constants = _mgh(scn, s)
    system = _quantum_system(scn, mass, hbar, constants)
    grid = _grid(s)
    t0, t1 = float(s.get("t0", 0.0)), float(s.get("t1", 1.0))
    steps = int(s.get("steps", 500))
    cells = int(s.get("boost_cells", 2))
    boost = cells * grid.dx / t1
    ablate = bool(s.get("ablate_gravity_phase", False))

    def factory(t):
        return galilean_boost_operator(
            grid, t, boost, mass=mass, hbar=hbar, gravity=gravity or 0.0,
            drop_gravity_phase=ablate)

    level = s.get("level", "packet")
    if level == "packet":
        packet = _packet(s, hbar)
        report = check_symmetry_on_packet(factory, system, packet, grid,
                                          t0, t1, steps)
    elif level == "matrix":
        report = check_symmetry_operator(factory, system, grid, t0, t1, steps)
    else:
        raise CheckExecutionError(
            f"symmetry-op level must be 'packet' or 'matrix' (got {level!r})")
    extra = {"report": report.to_dict(), "boost": float(boost)}
    return float(report.deviation), report.deviation <= check.tol, extra


_RUNNERS = {
    "symmetry": _run_symmetry,
    "infinitesimal": _run_infinitesimal,
    "noether": _run_noether,
    "equivalence": _run_equivalence,
    "kernel-compare": _run_kernel_compare,
    "fundam": _run_fundam,
    "conserved-op": _run_conserved_op,
    "symmetry-op": _run_symmetry_op,
}


# ---------------------------------------------------------------------------
# execution and reporting


def _versions() -> dict:
    import scipy
    return {
        "noetherlab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": "%d.%d.%d" % sys.version_info[:3],
    }


def run_scenario(scenario: Scenario, seed: int = None,
                 dump_dir=None) -> dict:
    """Execute all checks and assemble the report dictionary."""
    base_seed = scenario.seed if seed is None else seed
    dump = None
    if dump_dir is not None:
        dump = Path(dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    entries = []
    for i, check in enumerate(scenario.checks):
        check_seed = int(
            np.random.SeedSequence(base_seed, spawn_key=(i,)).generate_state(1)[0])
        entry = {
            "name": check.name,
            "kind": check.kind,
            "status": "error",
            "measured": None,
            "threshold": check.tol,
            "settings": check.settings,
            "extra": {},
        }
        try:
            measured, ok, extra = _RUNNERS[check.kind](scenario, check,
                                                       check_seed, dump)
            entry["measured"] = float(measured)
            entry["status"] = "pass" if ok else "fail"
            entry["extra"] = extra
        except Exception as exc:
            entry["extra"] = {"error": f"{type(exc).__name__}: {exc}"}
        entries.append(entry)

    statuses = [e["status"] for e in entries]
    overall = ("error" if "error" in statuses
               else "fail" if "fail" in statuses else "pass")
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": Path(scenario.path).name,
        "title": scenario.title,
        "seed": base_seed,
        "versions": _versions(),
        "wall_time_s": round(time.monotonic() - started, 3),
        "checks": entries,
        "overall": overall,
    }
    if dump is not None:
        with open(dump / "report.json", "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report


def _print_report(report: dict, stream=None) -> None:
    stream = stream or sys.stdout
    tags = {"pass": "PASS", "fail": "FAIL", "error": "ERROR"}
    print(f"scenario: {report['scenario']}"
          + (f" — {report['title']}" if report["title"] else ""),
          file=stream)
    print(f"seed: {report['seed']}", file=stream)
    for entry in report["checks"]:
        measured = entry["measured"]
        shown = "n/a" if measured is None else f"{measured:.6e}"
        line = (f"[{tags[entry['status']]}] {entry['name']} ({entry['kind']}) "
                f"measured={shown} threshold={entry['threshold']:.6e}")
        if entry["status"] == "error":
            line += f" — {entry['extra'].get('error', 'unknown error')}"
        print(line, file=stream)
    n_pass = sum(1 for e in report["checks"] if e["status"] == "pass")
    print(f"overall: {report['overall']} ({n_pass}/{len(report['checks'])} "
          f"checks passed) in {report['wall_time_s']}s", file=stream)


def _exit_code(report: dict) -> int:
    statuses = [e["status"] for e in report["checks"]]
    if "error" in statuses:
        return EXIT_EXEC_ERROR
    if "fail" in statuses:
        return EXIT_CHECK_FAILED
    return EXIT_PASS


# ---------------------------------------------------------------------------
# bundled scenarios and schema


def _bundled_dir() -> Path:
    return Path(__file__).resolve().parent / "scenarios"


def bundled_scenarios() -> list:
    return sorted(p for p in _bundled_dir().glob("*.toml"))


def _resolve_scenario_path(arg: str) -> Path:
    direct = Path(arg)
    if direct.is_file():
        return direct
    for candidate in (arg, f"{arg}.toml"):
        bundled = _bundled_dir() / candidate
        if bundled.is_file():
            return bundled
    raise ScenarioError(
        f"scenario not found: {arg!r} is neither a file nor a bundled "
        f"scenario (try `list-examples`)")


def _cmd_run(args) -> int:
    try:
        path = _resolve_scenario_path(args.scenario)
        scenario = load_scenario(path)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    report = run_scenario(scenario, seed=args.seed, dump_dir=args.dump)
    _print_report(report)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return _exit_code(report)


def _cmd_list_examples(args) -> int:
    for path in bundled_scenarios():
        try:
            scenario = load_scenario(path)
            summary = scenario.title or f"{len(scenario.checks)} checks"
        except ScenarioError as exc:  # pragma: no cover - bundled files parse
            summary = f"(unreadable: {exc})"
        print(f"{path.stem:28s} {summary}")
    return EXIT_PASS


def _cmd_print_schema(args) -> int:
    doc = Path(__file__).resolve().parent / "data" / "scenario_schema.md"
    print(doc.read_text(), end="")
    return EXIT_PASS


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="noetherlab",
        description="Run symmetry/propagator check scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or bundled name")
    p_run.add_argument("scenario", help="path to a .toml scenario, or a "
                                        "bundled scenario name")
    p_run.add_argument("--json", metavar="PATH",
                       help="also write the JSON report to PATH")
    p_run.add_argument("--dump", metavar="DIR",
                       help="write CSV artifacts and report.json into DIR")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list-examples", help="list bundled scenarios")
    p_list.set_defaults(fn=_cmd_list_examples)

    p_schema = sub.add_parser("print-schema",
                              help="print the scenario file format")
    p_schema.set_defaults(fn=_cmd_print_schema)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
