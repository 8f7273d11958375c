#!/usr/bin/env python3
"""Separate the two error sources in the conserved-operator drift.

Sweeps the Crank-Nicolson step count for two conserved operators:

* uniform gravity, A = -m*x + t*p + m*g*t^2/2 — the drift is dominated by
  the dx^2 commutator floor of the central-difference momentum, so it does
  NOT shrink with the time step (the floor is printed for comparison);
* free particle, A = t*p - m*x — no floor, so the drift shows the stepper's
  clean second order (ratio ~4 per halving).

See docs/numerics_notes.md section 2 for the floor formula.
"""

import argparse

from noetherlab.operator_lab import OperatorSpec, QuantumSystem, check_conserved
from noetherlab.propagator import Grid1D, Wavepacket

MG = {"m": 1.0, "g": 1.0}


def sweep(label, spec, system, psi0, grid, steps_list):
    print(f"\n{label}")
    print(f"{'steps':>7} {'dt':>10} {'rel drift':>12} {'ratio':>8}")
    previous = None
    for steps in steps_list:
        report = check_conserved(spec, system, psi0, grid, 0.0, 1.0, steps,
                                 matrix_n=0)
        drift = report.max_rel_drift
        ratio = "" if previous is None else f"{previous / drift:>8.3f}"
        print(f"{steps:>7d} {1.0 / steps:>10.2e} {drift:>12.4e} {ratio:>8}")
        previous = drift


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--steps", type=int, nargs="+",
                    default=[250, 500, 1000, 2000, 4000])
    args = ap.parse_args()

    grid = Grid1D(-20.0, 20.0, args.n)

    gravity_packet = Wavepacket(center=-2.0, momentum=1.0,
                                sigma=1.5).on_grid(grid)
    p0, sigma, a0 = 1.0, 1.5, 2.0
    # d<A>/dt = m g t (dx^2/2) <k^2(t)>, integrated over t in [0, 1]
    integral = (0.5 - 2.0 / 3.0 + 0.25) + 0.5 / (2.0 * sigma ** 2)
    floor = (grid.dx ** 2 / 2.0) * integral / (1.0 + a0)
    print(f"grid [-20, 20] N={args.n} dx={grid.dx:.4f}")
    print(f"analytic dx^2 floor for the gravity operator: {floor:.4e}")

    sweep("uniform gravity, A = -m*x + t*p + m*g*t^2/2  (floor-dominated)",
          OperatorSpec.from_dsl("-m", "t", "1/2*m*g*t^2", constants=MG),
          QuantumSystem.from_dsl("m*g*q1", constants=MG),
          gravity_packet, grid, args.steps)

    sweep("free particle, A = t*p - m*x  (pure time-step error)",
          OperatorSpec.from_dsl("-m", "t", "0", constants={"m": 1.0}),
          QuantumSystem(),
          Wavepacket(center=-2.0, momentum=2.0, sigma=1.5).on_grid(grid),
          grid, args.steps)


if __name__ == "__main__":
    main()
