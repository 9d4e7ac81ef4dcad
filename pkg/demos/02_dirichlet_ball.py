"""Solving S_m(dd^c u) = f on the unit ball of C^2 and checking the result.

The grid is coarse (h = 0.25, 13 points per real axis) so the whole script
runs in a few seconds. Pass ``--h 0.125`` for the 21-point grid used by
the acceptance suite; that takes about a minute.
"""
import argparse

import numpy as np

from hessianlab import (DomainSpec, comparison_check, initialize, sample, solve_dirichlet,
                        solve_homogeneous, viscosity_check)

parser = argparse.ArgumentParser()
parser.add_argument("--h", type=float, default=0.25)
h = parser.parse_args().h

dom = DomainSpec.ball(2, 1.0, half_width=1.0 + 2 * h, h=h)
base = dom.empty_field()
print(f"grid {base.shape}, spacing {h}")

# u* = 2|z|^2 has complex Hessian 2I, so S_2 = 4 and S_1 = 4 as well.
star = sample(base, lambda x1, y1, x2, y2: 2 * (x1**2 + y1**2 + x2**2 + y2**2))
four = base.with_values(np.full(base.shape, 4.0))

print("\n1. Quadratic exactness. Starting from the barrier initialization:")
start = initialize(dom, four, star, 2, multiplier=1.0)
u, diag = solve_dirichlet(dom, four, star, 2, u0=start)
print(f"   {diag.iterations} Newton steps, residual {diag.residual_max:.1e}, "
      f"error vs u* {np.abs(u.values - star.values).max():.1e}")

print("\n2. Comparison. Raising f from 4 to 5 must push the solution down:")
five = base.with_values(np.full(base.shape, 5.0))
w, _ = solve_dirichlet(dom, five, star, 2)
rep = comparison_check(w, u, five, four, 2, 1e-7)
print(f"   ordering holds: {rep.passed}; largest drop {(u.values - w.values).max():.3f}")

print("\n3. Homogeneous equation with pluriharmonic data Re z1:")
phi = sample(base, lambda x1, y1, x2, y2: x1 + 0 * (y1 + x2 + y2))
v, hd = solve_homogeneous(dom, phi, 2)
print(f"   levels {hd.extra['levels']}, gaps between levels "
      f"{['%.1e' % g for g in hd.extra['level_gaps']]}")
print(f"   distance to Re z1: {np.abs(v.values - phi.values).max():.1e}")

print("\n4. Viscosity (sub-solution) test at tol 10 h^2:")
for name, fld in (("quadratic", u), ("homogeneous", v)):
    print(f"   {name}: {'pass' if viscosity_check(fld, 2, 10 * h**2).passed else 'FAIL'}")
bad = sample(base, lambda x1, y1, x2, y2: 2 * (x1**2 + y1**2) - (x2**2 + y2**2))
rep = viscosity_check(bad, 2, 10 * h**2)
print(f"   saddle 2|z1|^2 - |z2|^2 for m=2: {'pass' if rep.passed else 'FAIL'} "
      f"({len(rep.violations)} points flagged)")
