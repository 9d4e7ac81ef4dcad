"""A tour of the matrix layer: S_k, the derivative matrix D_m and the cone.

Run with ``python demos/01_cone_algebra.py``. Everything here is exact
linear algebra on small Hermitian matrices, so it finishes instantly.
"""
import numpy as np

from hessianlab.cone import (d_matrix, euler_residual, gamma_m_contains, garding_gap,
                             random_hermitian, random_in_cone, sigma_k)
from hessianlab.grid import wedge_hypothesis, wedge_normalization

rng = np.random.default_rng(0)

print("S_k of diag(1, 2, 3):", [sigma_k(np.diag([1.0, 2.0, 3.0]), k) for k in range(4)])

# diag(-1, 2) has trace 1 but determinant -2: inside Gamma_1, outside Gamma_2.
saddle = np.diag([-1.0, 2.0])
for m in (1, 2):
    print(f"diag(-1, 2) in Gamma_{m}:", gamma_m_contains(saddle, m))

a = random_hermitian(4, rng)
print("\nA random 4x4 Hermitian matrix satisfies tr(A D_m(A)) = m S_m(A):")
for m in range(1, 5):
    print(f"  m={m}: residual {euler_residual(a, m):+.2e}")

print("\nD_2 of a cone matrix is positive definite, as ellipticity needs:")
b = random_in_cone(4, 2, rng)
print("  eigenvalues", np.round(np.linalg.eigvalsh(d_matrix(b, 2)), 4))

print("\nThe Garding inequality gap is non-negative on the cone:")
gaps = garding_gap(random_in_cone(4, 2, rng, 2000), random_in_cone(4, 2, rng, 2000), 2)
print(f"  smallest of 2000 gaps: {gaps.min():.3e}")

print("\nWedge constants kappa(n, m), from exterior-algebra expansion:")
for n in (1, 2, 3):
    for m in range(1, n + 1):
        print(f"  kappa({n},{m}) = {wedge_normalization(n, m):.12f}"
              f"   m!(n-m)!/n! = {wedge_hypothesis(n, m):.12f}")
