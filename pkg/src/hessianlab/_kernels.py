"""Compiled pointwise kernels for the nonlinear Gauss-Seidel scheme."""
import numba as nb
import numpy as np

_opts = {"nogil": True, "cache": True}


@nb.njit(**_opts)
def _shifted_sym(lam, s, m, out):
    # S_0..S_m of (lam - s)
    out[:] = 0.0
    out[0] = 1.0
    for i in range(lam.size):
        x = lam[i] - s
        top = min(i + 1, m)
        for k in range(top, 0, -1):
            out[k] += x * out[k - 1]


@nb.njit(**_opts)
def _admissible_above(lam, s, m, f, work):
    # lam - s in Gamma_{m-1} with S_m >= f; on Gamma_{m-1}, S_m > 0 means Gamma_m
    _shifted_sym(lam, s, m, work)
    for k in range(1, m):
        if work[k] <= 0.0:
            return False
    return work[m] >= f


@nb.njit(**_opts)
def point_root(lam, s0, m, f, max_bisect):
    """Largest shift s with lam - s admissible and S_m(lam - s) >= f.

    Bracket by doubling from `s0`, then bisect; returns the midpoint.
    """
    work = np.empty(m + 1)
    spread = 0.0
    for i in range(lam.size):
        spread = max(spread, abs(lam[i] - s0))
    step = 1.0 + spread
    if _admissible_above(lam, s0, m, f, work):
        lo = s0
        hi = s0 + step
        while _admissible_above(lam, hi, m, f, work):
            lo = hi
            step *= 2.0
            hi = lo + step
    else:
        hi = s0
        lo = s0 - step
        while not _admissible_above(lam, lo, m, f, work):
            hi = lo
            step *= 2.0
            lo = hi - step
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _admissible_above(lam, mid, m, f, work):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@nb.njit(**_opts)
def gauss_seidel_sweep(u, points, diag_nb, mixed_nb, f, n, m, h, max_bisect):
    """One lexicographic sweep of pointwise S_m solves, in place.

    ``diag_nb[i, a]`` holds the flat indices of ``x - e_a`` and ``x + e_a``;
    ``mixed_nb[i, k]`` the four corners ``(++, +-, -+, --)`` of the k-th
    axis pair in ``(a, b), a < b`` order. Returns the largest update.
    """
    ndim = 2 * n
    h2 = h * h
    a0 = np.zeros((n, n), dtype=np.complex128)
    dd = np.zeros((ndim, ndim))
    biggest = 0.0
    for i in range(points.size):
        x = points[i]
        # second differences with the centre value removed
        for a in range(ndim):
            dd[a, a] = (u[diag_nb[i, a, 0]] + u[diag_nb[i, a, 1]]) / h2
        k = 0
        for a in range(ndim):
            for b in range(a + 1, ndim):
                v = (u[mixed_nb[i, k, 0]] - u[mixed_nb[i, k, 1]]
                     - u[mixed_nb[i, k, 2]] + u[mixed_nb[i, k, 3]]) / (4.0 * h2)
                dd[a, b] = v
                dd[b, a] = v
                k += 1
        for p in range(n):
            for q in range(n):
                re = dd[2 * p, 2 * q] + dd[2 * p + 1, 2 * q + 1]
                im = dd[2 * p, 2 * q + 1] - dd[2 * p + 1, 2 * q]
                a0[p, q] = 0.25 * (re + 1j * im)
        lam = np.linalg.eigvalsh(a0)
        # the centre enters every diagonal entry as -u(x) / h^2
        s = point_root(lam, u[x] / h2, m, f[i], max_bisect)
        new = s * h2
        biggest = max(biggest, abs(new - u[x]))
        u[x] = new
    return biggest
