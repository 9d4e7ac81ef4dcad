"""
Elementary symmetric functions on Hermitian spectra and the Garding cone.

Functions
---------
elem_sym
    S_k of a real vector (or a stack of vectors along the last axis).
sigma_k
    S_k of the eigenvalues of a Hermitian matrix.
d_matrix
    Derivative matrix D_m(A) of S_m, via the Newton transform.
gamma_m_contains
    Open-cone membership test with a normalized margin.
garding_gap, euler_residual, product_hermiticity_defect
    Numerical witnesses for the trace inequalities of S_m on the cone.

The batched helpers (``sigma_all``, ``d_matrix_stack``, ``cone_margin_stack``)
work on arrays of shape ``(..., n, n)`` and are what the grid code uses.
"""
from itertools import combinations
from math import comb
from typing import NamedTuple

import numpy as np

from .errors import PreconditionError, ValidationError

HERMITIAN_ATOL = 1e-12


class ConeMargin(NamedTuple):
    member: bool
    margin: float


def hermitian(a, atol=HERMITIAN_ATOL):
    """Validate and symmetrize a (stack of) Hermitian matrices.

    Returns ``(a + a^H) / 2`` as a complex array. Raises ValidationError if
    any entry differs from its conjugate transpose by more than `atol`.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValidationError(f"expected square matrices, got shape {a.shape}")
    if a.shape[-1] < 1:
        raise ValidationError("matrix dimension must be at least 1")
    ah = np.conj(np.swapaxes(a, -1, -2))
    defect = np.abs(a - ah).max(initial=0.0)
    if not np.isfinite(defect) or defect > atol:
        raise ValidationError(f"matrix is not Hermitian (defect {defect:.3e})")
    return 0.5 * (a + ah)


def elem_sym_all(lam):
    """All elementary symmetric functions S_0..S_n along the last axis.

    Uses the prefix-polynomial recurrence e_k <- e_k + x * e_{k-1}.
    """
    lam = np.asarray(lam)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,), dtype=lam.dtype)
    e[..., 0] = 1
    for i in range(n):
        x = lam[..., i]
        # descending k so each factor enters once
        for k in range(i + 1, 0, -1):
            e[..., k] = e[..., k] + x * e[..., k - 1]
    return e


def elem_sym(lam, k):
    """S_k(lam) for a real vector `lam`; S_0 = 1."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ValidationError("spectrum must be a non-empty 1-d vector")
    if not np.all(np.isfinite(lam)):
        raise ValidationError("spectrum entries must be finite")
    n = lam.size
    if not 0 <= k <= n:
        raise ValueError(f"k must satisfy 0 <= k <= {n}, got {k}")
    return float(elem_sym_all(lam)[k])


def sigma_all(a):
    """S_0..S_n of the eigenvalues of each matrix in a Hermitian stack."""
    lam = np.linalg.eigvalsh(a)
    return elem_sym_all(lam)


def sigma_k(a, k, method="eigen"):
    """S_k of the eigenvalues of a Hermitian matrix.

    Parameters
    ----------
    a : (n, n) array_like
        Hermitian matrix; symmetrized after validation.
    k : int
        Order, ``0 <= k <= n``.
    method : {"eigen", "minors"}
        ``"eigen"`` applies the recurrence to the spectrum; ``"minors"``
        sums the k x k principal minors. The two are independent routes to
        the same number.
    """
    a = hermitian(a)
    if a.ndim != 2:
        raise ValidationError("sigma_k expects a single matrix")
    n = a.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"k must satisfy 0 <= k <= {n}, got {k}")
    if method == "eigen":
        return float(sigma_all(a)[k])
    if method == "minors":
        if k == 0:
            return 1.0
        total = 0.0
        for idx in combinations(range(n), k):
            total += np.linalg.det(a[np.ix_(idx, idx)]).real
        return float(total)
    raise ValueError(f"unknown method {method!r}")


def newton_transforms(a, m, s=None):
    """Newton transforms T_0..T_{m-1} of a Hermitian stack.

    T_0 = I and T_k = S_k(A) I - A T_{k-1}. `s` may carry precomputed S_k
    along the last axis.
    """
    n = a.shape[-1]
    if s is None:
        s = sigma_all(a)
    eye = np.eye(n, dtype=a.dtype)
    t = np.broadcast_to(eye, a.shape).copy()
    out = [t]
    for k in range(1, m):
        t = s[..., k, None, None] * eye - a @ t
        out.append(t)
    return out


def d_matrix_stack(a, m, s=None):
    """D_m for every matrix of a Hermitian stack (no validation)."""
    return newton_transforms(a, m, s)[-1]


def d_matrix(a, m):
    """Derivative of S_m with respect to the matrix entries.

    Normalized so that ``dS_m = tr(D_m(A) dA)`` for Hermitian increments,
    which makes ``tr(A D_m(A)) = m S_m(A)``. Computed as the (m-1)-th Newton
    transform; the result is Hermitian and positive semidefinite on the
    closed cone.
    """
    a = hermitian(a)
    n = a.shape[-1]
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= {n}, got {m}")
    d = d_matrix_stack(a, m)
    return 0.5 * (d + np.conj(np.swapaxes(d, -1, -2)))


def cone_margin_stack(s, m):
    """min_{1<=k<=m} S_k / C(n, k) from stacked S_0..S_n."""
    n = s.shape[-1] - 1
    scale = np.array([comb(n, k) for k in range(1, m + 1)], dtype=float)
    return (s[..., 1:m + 1] / scale).min(axis=-1)


def gamma_m_contains(a, m):
    """Membership of a Hermitian matrix in the open cone Gamma_m."""
    a = hermitian(a)
    n = a.shape[-1]
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= {n}, got {m}")
    margin = float(cone_margin_stack(sigma_all(a), m))
    return ConeMargin(member=margin > 0.0, margin=margin)


def _closed_cone_check(a, m, name):
    s = sigma_all(a)
    scale = 1.0 + np.abs(a).max(axis=(-2, -1))
    for k in range(1, m + 1):
        bad = s[..., k] < -1e-12 * scale ** k
        if np.any(bad):
            worst = float(np.min(np.where(bad, s[..., k], 0.0)))
            raise PreconditionError(
                f"{name} is outside the closed cone: S_{k} = {worst:.3e}")
    return s


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else np.asarray(x, dtype=float)


def _check_order(a, m):
    n = a.shape[-1]
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= {n}, got {m}")


def garding_gap(a1, a2, m):
    """tr(A1 D_m(A2)) - m S_m(A1)^(1/m) S_m(A2)^((m-1)/m).

    Both matrices must lie in the closed cone. Negative round-off in S_m on
    the cone boundary is clipped, so 0^(1/m) is read as 0. Stacks of equal
    shape give one gap per pair.
    """
    a1 = hermitian(a1)
    a2 = hermitian(a2)
    if a1.shape != a2.shape:
        raise ValidationError("garding_gap expects matrices of equal size")
    _check_order(a1, m)
    s1 = _closed_cone_check(a1, m, "A1")
    s2 = _closed_cone_check(a2, m, "A2")
    lhs = np.einsum("...ij,...ji->...", a1, d_matrix_stack(a2, m, s2)).real
    rhs = (m * np.maximum(s1[..., m], 0.0) ** (1.0 / m)
           * np.maximum(s2[..., m], 0.0) ** ((m - 1.0) / m))
    return _scalar_or_array(lhs - rhs)


def euler_residual(a, m):
    """tr(A D_m(A)) - m S_m(A); zero for every Hermitian A."""
    a = hermitian(a)
    _check_order(a, m)
    s = sigma_all(a)
    d = d_matrix_stack(a, m, s)
    return _scalar_or_array(np.einsum("...ij,...ji->...", a, d).real - m * s[..., m])


def product_hermiticity_defect(a, m):
    """Max-norm of D_m(A) A - (D_m(A) A)^H, per matrix of a stack."""
    a = hermitian(a)
    _check_order(a, m)
    p = d_matrix_stack(a, m) @ a
    return _scalar_or_array(np.abs(p - np.conj(np.swapaxes(p, -1, -2))).max(axis=(-2, -1)))


def random_hermitian(n, rng, scale=1.0, size=None):
    """Random n x n Hermitian matrices with Gaussian entries.

    `size` adds leading stack dimensions, as in numpy's generators.
    """
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (n, n)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return scale * 0.5 * (z + np.conj(np.swapaxes(z, -1, -2)))


def cone_entry_shift(lam, m):
    """Smallest t with ``lam + t`` in the closure of Gamma_m.

    Along the identity direction the cone is a half-line ``(t0, inf)``; its
    end point is the largest real root of some ``t -> S_k(lam + t)``, and
    every such polynomial has positive leading coefficient, so ``t0`` is the
    largest real root over k = 1..m. `lam` may be a stack of spectra.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    s = elem_sym_all(lam).reshape(-1, n + 1)
    t0 = np.full(s.shape[0], -np.inf)
    for k in range(1, m + 1):
        # monic in t: S_k(lam + t) / C(n, k); roots as companion eigenvalues
        coeffs = np.stack([comb(n - j, k - j) * s[:, j] for j in range(1, k + 1)], -1)
        comp = np.zeros((s.shape[0], k, k))
        comp[:, 0, :] = -coeffs / comb(n, k)
        comp[:, np.arange(1, k), np.arange(k - 1)] = 1.0
        roots = np.linalg.eigvals(comp)
        real = np.abs(roots.imag) <= 1e-9 * (1 + np.abs(roots.real))
        t0 = np.maximum(t0, np.where(real, roots.real, -np.inf).max(axis=-1))
    return _scalar_or_array(t0.reshape(lam.shape[:-1]))


def random_in_cone(n, m, rng, size=None):
    """Random Hermitian matrices in the open cone Gamma_m.

    Gaussian Hermitian matrices are shifted along the identity to a random
    distance past the cone boundary. Samples range from nearly degenerate
    to comfortably inside and still carry negative eigenvalues when m < n.
    """
    a = random_hermitian(n, rng, size=size)
    t0 = np.asarray(cone_entry_shift(np.linalg.eigvalsh(a), m))
    step = rng.uniform(1e-3, 1.5, t0.shape)
    a = a + (t0 + step)[..., None, None] * np.eye(n)
    margin = cone_margin_stack(sigma_all(a), m)
    if np.any(margin <= 0):
        raise RuntimeError("could not place a sample inside the cone")
    return a
