#!/usr/bin/env python3
"""Map the validity envelope of the time-sliced kernel composition.

Fixes the slice width and extends the final time, comparing the composed
kernel against the closed-form propagator on a Gaussian packet. Two limits
are visible (docs/numerics_notes.md section 1):

* quadrature envelope: each composition throws ghost images a distance
  2*pi*hbar*eps/(m*dx) away; the grid must be fine enough that they land
  outside the box (the header prints the ghost step vs the span);
* domain containment: once the physical displacement p0*T/m (plus
  spreading) reaches the box edge, truth has left the window and fidelity
  collapses no matter how good the composition is.
"""

import argparse
import math

from noetherlab.expr import parse_expr
from noetherlab.propagator import (
    Grid1D,
    Wavepacket,
    fidelity,
    free_kernel,
    linear_potential_kernel,
    timesliced_kernel,
)

MG = {"m": 1.0, "g": 1.0}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=512, help="grid points")
    ap.add_argument("--span", type=float, default=40.0, help="box width")
    ap.add_argument("--eps", type=float, default=0.5, help="slice width")
    ap.add_argument("--times", type=float, nargs="+",
                    default=[0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0])
    ap.add_argument("--momentum", type=float, default=2.0)
    ap.add_argument("--sigma", type=float, default=1.0)
    args = ap.parse_args()

    half = args.span / 2.0
    grid = Grid1D(-half, half, args.n)
    packet = Wavepacket(center=0.0, momentum=args.momentum,
                        sigma=args.sigma).on_grid(grid)
    gravity = parse_expr("m*g*q1", n_dof=1, constants={"m", "g"})

    ghost_step = 2.0 * math.pi * args.eps / grid.dx
    verdict = "ok" if ghost_step >= args.span else "ALIASING (ghosts in box)"
    print(f"grid [{-half:g}, {half:g}] N={args.n} dx={grid.dx:.4f}  "
          f"eps={args.eps}  packet p0={args.momentum} sigma={args.sigma}")
    print(f"ghost step 2*pi*eps/dx = {ghost_step:.1f} vs span {args.span:g}"
          f" -> {verdict}")
    print(f"{'T':>7} {'slices':>6} {'p0*T/m':>8} {'spread':>8} "
          f"{'F_free':>12} {'F_gravity':>12}")
    for t1 in args.times:
        slices = round(t1 / args.eps)
        if slices < 1 or abs(slices * args.eps - t1) > 1e-9:
            print(f"{t1:>7g}  (skipped: not a multiple of eps)")
            continue
        spread = args.sigma * (1.0 + (t1 / args.sigma ** 2) ** 2) ** 0.5
        row = []
        for potential, closed in (
                (None, free_kernel(0.0, t1)),
                (gravity, linear_potential_kernel(0.0, t1, gravity=1.0))):
            sliced = timesliced_kernel(grid, 0.0, t1, potential=potential,
                                       slices=slices, constants=MG)
            row.append(fidelity(sliced.apply(packet),
                                closed.on_grid(grid).apply(packet), grid))
        print(f"{t1:>7g} {slices:>6d} {args.momentum * t1:>8.1f} "
              f"{spread:>8.1f} {row[0]:>12.3e} {row[1]:>12.3e}")


if __name__ == "__main__":
    main()
