"""
Dirichlet solver for S_m(complex Hessian of u) = f on a ball or ellipsoid.

Unknowns live at the interior points of the domain mask; every other box
point (the collar) keeps the boundary data ``phi`` supplied by the caller.
Two schemes are available:

``newton``
    Damped Newton on the concave form ``S_m^(1/m)(H u) = f^(1/m)``. A step
    is accepted only if every interior Hessian stays in the cone above
    ``cone_floor`` and the residual decreases.
``gauss-seidel``
    Lexicographic sweeps; each point solves ``S_m(H u) = f`` for its own
    value by bracketing and bisection.
"""
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .cone import cone_margin_stack, d_matrix_stack, elem_sym, sigma_all
from .errors import (ConeError, ConfigurationError, ConvergenceError,
                     InitializationError, PreconditionError)
from .grid import BOX, GridField, build_domain, hessian_from_differences

LINEAR_METHODS = ("amg", "gmres", "relaxation")
NEWTON = "newton"
GAUSS_SEIDEL = "gauss-seidel"


@dataclass(frozen=True)
class LinearSolverConfig:
    """Inner solve for the Newton correction.

    ``method`` is ``"amg"`` (smoothed-aggregation multigrid as a GMRES
    preconditioner), ``"gmres"`` (ILU-preconditioned restarted GMRES) or
    ``"relaxation"`` (Gauss-Seidel sweeps on the assembled matrix).
    ``max_iter`` caps Krylov iterations or relaxation sweeps. If multigrid
    misses the tolerance the ILU route is tried before giving up.
    """

    method: str = "amg"
    tol: float = 1e-11
    max_iter: int = 400
    restart: int = 80
    ilu_drop_tol: float = 1e-5
    ilu_fill_factor: float = 12.0


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = NEWTON
    tol_residual: float = 1e-8
    max_outer: int = 60
    damping: float = 1.0
    cone_floor: float = 0.0
    eps_schedule: tuple = (1e-2, 1e-3, 1e-4)
    # "root": schedule entries are levels of S_m^(1/m), so f = eps^m;
    # "raw": f = eps directly
    eps_scale: str = "root"
    linear_solver: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    max_halvings: int = 30
    max_bisect: int = 60

    def validate(self):
        if self.scheme not in (NEWTON, GAUSS_SEIDEL):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}", "scheme")
        if not self.tol_residual > 0:
            raise ConfigurationError("must be positive", "tol_residual")
        if self.max_outer < 1:
            raise ConfigurationError("must be at least 1", "max_outer")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("must lie in (0, 1]", "damping")
        eps = np.asarray(self.eps_schedule, dtype=float)
        if eps.size and (np.any(eps <= 0) or np.any(np.diff(eps) >= 0)):
            raise ConfigurationError("must be positive and strictly decreasing",
                                     "eps_schedule")
        if self.eps_scale not in ("root", "raw"):
            raise ConfigurationError(f"unknown scale {self.eps_scale!r}", "eps_scale")
        if self.linear_solver.method not in LINEAR_METHODS:
            raise ConfigurationError(f"unknown method {self.linear_solver.method!r}",
                                     "linear_solver.method")
        return self

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        lin = data.pop("linear_solver", None)
        if "eps_schedule" in data:
            data["eps_schedule"] = tuple(data["eps_schedule"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", "solver")
        cfg = cls(**data)
        if lin is not None:
            unknown = set(lin) - set(LinearSolverConfig.__dataclass_fields__)
            if unknown:
                raise ConfigurationError(f"unknown keys {sorted(unknown)}",
                                         "solver.linear_solver")
            cfg = replace(cfg, linear_solver=LinearSolverConfig(**lin))
        return cfg.validate()


@dataclass
class SolveDiagnostics:
    iterations: int
    residual_max: float
    cone_margin_min: float
    residual_history: list
    wall_time_s: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = asdict(self)
        extra = out.pop("extra")
        out.update(extra)
        return out


# -- stencil bookkeeping ------------------------------------------------------

class Stencil:
    """Neighbour tables for the interior points of a box mask.

    Interior points are ordered lexicographically (increasing flat index),
    which is also the Gauss-Seidel sweep order.
    """

    def __init__(self, mask, h):
        mask = np.asarray(mask, dtype=bool)
        border = np.zeros_like(mask)
        border[tuple(slice(1, s - 1) for s in mask.shape)] = True
        if np.any(mask & ~border):
            raise PreconditionError("mask touches the edge of the box")
        self.shape = mask.shape
        self.ndim = mask.ndim
        self.n = self.ndim // 2
        self.h = float(h)
        self.mask = mask
        self.points = np.flatnonzero(mask)
        self.size = self.points.size
        self.pos = np.full(mask.size, -1, dtype=np.int64)
        self.pos[self.points] = np.arange(self.size)
        strides = [int(np.prod(self.shape[a + 1:])) for a in range(self.ndim)]
        self.strides = strides
        x = self.points
        self.diag_nb = np.stack(
            [np.stack([x - strides[a], x + strides[a]], axis=-1)
             for a in range(self.ndim)], axis=1)
        pairs = [(a, b) for a in range(self.ndim) for b in range(a + 1, self.ndim)]
        self.pairs = pairs
        self.mixed_nb = np.stack(
            [np.stack([x + strides[a] + strides[b], x + strides[a] - strides[b],
                       x - strides[a] + strides[b], x - strides[a] - strides[b]],
                      axis=-1) for a, b in pairs], axis=1)

    def differences(self, u):
        h2 = self.h ** 2
        d = {}
        c = u[self.points]
        for a in range(self.ndim):
            lo, hi = self.diag_nb[:, a, 0], self.diag_nb[:, a, 1]
            d[a, a] = (u[hi] - 2.0 * c + u[lo]) / h2
        for k, (a, b) in enumerate(self.pairs):
            nb = self.mixed_nb[:, k]
            d[a, b] = (u[nb[:, 0]] - u[nb[:, 1]] - u[nb[:, 2]] + u[nb[:, 3]]) / (4.0 * h2)
        return d

    def hessians(self, u):
        """Complex Hessians at the interior points of flat array `u`."""
        return hessian_from_differences(self.differences(u), self.n, (self.size,))

    def operator(self, dmat):
        """Sparse matrix of ``w -> tr(D H w)`` on interior unknowns.

        Collar values of ``w`` are taken as zero.
        """
        n, ndim, P, h2 = self.n, self.ndim, self.size, self.h ** 2
        mc = np.zeros((P, ndim, ndim), dtype=complex)
        for p in range(n):
            for q in range(n):
                c = 0.25 * dmat[:, p, q]
                mc[:, 2 * q, 2 * p] += c
                mc[:, 2 * q + 1, 2 * p + 1] += c
                mc[:, 2 * q, 2 * p + 1] += 1j * c
                mc[:, 2 * q + 1, 2 * p] -= 1j * c
        coef = 0.5 * (mc + np.swapaxes(mc, 1, 2)).real
        rows, cols, vals = [], [], []
        own = np.arange(P)

        def add(nbr, v):
            col = self.pos[nbr]
            keep = col >= 0
            rows.append(own[keep])
            cols.append(col[keep])
            vals.append(v[keep])

        centre = np.zeros(P)
        for a in range(ndim):
            w = coef[:, a, a] / h2
            centre -= 2.0 * w
            add(self.diag_nb[:, a, 0], w)
            add(self.diag_nb[:, a, 1], w)
        for k, (a, b) in enumerate(self.pairs):
            w = coef[:, a, b] / (2.0 * h2)
            nb = self.mixed_nb[:, k]
            add(nb[:, 0], w)
            add(nb[:, 1], -w)
            add(nb[:, 2], -w)
            add(nb[:, 3], w)
        add(self.points, centre)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows),
                                                     np.concatenate(cols))),
                             shape=(P, P))


def _field_mask(field):
    if field.mask is not None:
        return field.mask
    if field.topology != BOX:
        raise PreconditionError("solver fields must live on box grids")
    border = np.zeros(field.shape, dtype=bool)
    border[tuple(slice(1, s - 1) for s in field.shape)] = True
    return border


def _stencil_for(field):
    return Stencil(_field_mask(field), field.spacing)


# -- residual and linearization ----------------------------------------------

def residual(u, f, m):
    """Pointwise ``S_m(H u) - f`` on the interior, zero on the collar."""
    if not u.same_grid(f):
        raise ValueError("u and f must share a grid")
    st = _stencil_for(u)
    s = sigma_all(st.hessians(u.values.reshape(-1)))
    out = np.zeros(u.values.size)
    out[st.points] = s[:, m] - f.values.reshape(-1)[st.points]
    return u.with_values(out.reshape(u.shape))


def linearized_apply(u, w, m):
    """``tr(D_m(H u) H w)`` on the interior: the derivative of `residual`.

    Raises ConeError if the Hessian of `u` leaves the open cone anywhere.
    """
    if not u.same_grid(w):
        raise ValueError("u and w must share a grid")
    st = _stencil_for(u)
    hu = st.hessians(u.values.reshape(-1))
    s = sigma_all(hu)
    margin = cone_margin_stack(s, m)
    if margin.min() <= 0:
        i = int(np.argmin(margin))
        idx = np.unravel_index(st.points[i], u.shape)
        raise ConeError(f"Hessian leaves the cone at {idx}", idx, float(margin[i]))
    d = d_matrix_stack(hu, m, s)
    hw = st.hessians(w.values.reshape(-1))
    out = np.zeros(u.values.size)
    out[st.points] = np.einsum("ipq,iqp->i", d, hw).real
    return u.with_values(out.reshape(u.shape))


# -- linear solves ------------------------------------------------------------

_AMG_SMOOTH = ("jacobi", {"omega": 4.0 / 3.0, "weighting": "local"})


def _linear_solve(mat, rhs, cfg):
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return np.zeros_like(rhs)
    if cfg.method == "amg":
        # row-sum weighting avoids pyamg's randomized spectral-radius
        # estimate, keeping repeated solves bit-identical
        ml = pyamg.smoothed_aggregation_solver(mat, smooth=_AMG_SMOOTH)
        x = ml.solve(rhs, tol=cfg.tol, maxiter=min(cfg.max_iter, rhs.size),
                     accel="gmres")
        if np.linalg.norm(mat @ x - rhs) <= max(cfg.tol, 1e-9) * bnorm:
            return x
        return _linear_solve(mat, rhs, replace(cfg, method="gmres"))
    if cfg.method == "gmres":
        ilu = spla.spilu(mat.tocsc(), drop_tol=cfg.ilu_drop_tol,
                         fill_factor=cfg.ilu_fill_factor)
        prec = spla.LinearOperator(mat.shape, ilu.solve)
        x, info = spla.gmres(mat, rhs, rtol=cfg.tol, atol=0.0, restart=cfg.restart,
                             maxiter=cfg.max_iter, M=prec)
        if info != 0 and np.linalg.norm(mat @ x - rhs) > 1e-6 * bnorm:
            raise ConvergenceError(f"GMRES stopped with info={info}")
        return x
    lower = sp.tril(mat, format="csr")
    upper = sp.triu(mat, k=1, format="csr")
    x = np.zeros_like(rhs)
    for _ in range(cfg.max_iter):
        x = spla.spsolve_triangular(lower, rhs - upper @ x, lower=True)
        if np.linalg.norm(mat @ x - rhs) <= cfg.tol * bnorm:
            return x
    raise ConvergenceError("relaxation sweeps did not reach tolerance")


# -- schemes ------------------------------------------------------------------

def _state(st, u, fi, m):
    hu = st.hessians(u)
    s = sigma_all(hu)
    return hu, s, cone_margin_stack(s, m)


def _newton(st, u, fi, m, cfg, history):
    """Damped Newton in place on flat array `u`; returns iteration count."""
    lin = cfg.linear_solver
    hu, s, margin = _state(st, u, fi, m)
    if margin.min() <= cfg.cone_floor:
        i = int(np.argmin(margin))
        raise ConeError("starting field is not admissible",
                        np.unravel_index(st.points[i], st.shape), float(margin[i]))
    root_f = fi ** (1.0 / m)
    sm = s[:, m]
    raw = np.abs(sm - fi).max()
    history.append(float(raw))
    it = 0
    while raw > cfg.tol_residual:
        if it >= cfg.max_outer:
            raise ConvergenceError(f"Newton did not converge in {cfg.max_outer} steps")
        it += 1
        g = sm ** (1.0 / m) - root_f
        d = d_matrix_stack(hu, m, s)
        # Jacobian is diag(scale) @ L; solve with L itself, which is
        # nearly symmetric and suits multigrid better
        scale = 1.0 / (m * sm ** ((m - 1.0) / m))
        step = _linear_solve(st.operator(d), -g / scale, lin)
        gnorm = np.abs(g).max()
        alpha = cfg.damping
        for _ in range(cfg.max_halvings):
            trial = u.copy()
            trial[st.points] += alpha * step
            t_hu, t_s, t_margin = _state(st, trial, fi, m)
            if t_margin.min() > cfg.cone_floor:
                t_g = t_s[:, m] ** (1.0 / m) - root_f
                if np.abs(t_g).max() <= (1.0 - 1e-4 * alpha) * gnorm:
                    break
            alpha *= 0.5
        else:
            raise ConvergenceError("line search found no admissible descent step")
        u[:] = trial
        hu, s, margin = t_hu, t_s, t_margin
        sm = s[:, m]
        raw = np.abs(sm - fi).max()
        history.append(float(raw))
    return it


def _gauss_seidel(st, u, fi, m, cfg, history):
    """Nonlinear Gauss-Seidel in place; returns the sweep count."""
    _, s, _ = _state(st, u, fi, m)
    raw = np.abs(s[:, m] - fi).max()
    history.append(float(raw))
    sweeps = 0
    while raw > cfg.tol_residual:
        if sweeps >= cfg.max_outer:
            raise ConvergenceError(f"Gauss-Seidel did not converge in {cfg.max_outer} sweeps")
        sweeps += 1
        _kernels.gauss_seidel_sweep(u, st.points, st.diag_nb, st.mixed_nb, fi,
                                    st.n, m, st.h, cfg.max_bisect)
        _, s, _ = _state(st, u, fi, m)
        raw = np.abs(s[:, m] - fi).max()
        history.append(float(raw))
    return sweeps


# -- initialization -----------------------------------------------------------

_BARRIERS = {}


def _domain_key(domain, m):
    return (domain.kind, tuple(np.asarray(domain.center, complex).tolist()),
            tuple(np.ravel(domain.radii).tolist()), tuple(domain.lower),
            tuple(domain.upper), float(domain.h), m)


def discrete_barrier(domain, m, tol=1e-9, min_step=1e-4):
    """Admissible grid function that vanishes on the collar.

    Starts from the defining function rho, which solves
    ``S_m(H u) = S_m(H rho)`` exactly with collar data rho, and moves the
    collar data to zero by continuation, re-solving with Newton at each
    stage. The result has the same constant S_m as rho and is cached per
    domain and m.
    """
    key = _domain_key(domain, m)
    if key in _BARRIERS:
        return _BARRIERS[key]
    mask, rho = build_domain(domain)
    st = Stencil(mask, domain.h)
    base = rho.values.reshape(-1).copy()
    target = elem_sym(domain.radius_vector() ** -2.0, m)
    fi = np.full(st.size, target)
    cfg = SolverConfig(tol_residual=tol * max(target, 1.0), max_outer=40)
    collar = ~mask.reshape(-1)
    u = base.copy()
    tau, dtau = 0.0, 0.25
    while tau < 1.0:
        nxt = min(1.0, tau + dtau)
        trial = u.copy()
        trial[collar] = (1.0 - nxt) * base[collar]
        try:
            _newton(st, trial, fi, m, cfg, [])
        except (ConeError, ConvergenceError):
            dtau *= 0.5
            if dtau < min_step:
                raise InitializationError("barrier continuation stalled") from None
            continue
        u, tau = trial, nxt
        dtau = min(0.5, 1.5 * dtau)
    u[collar] = 0.0
    out = GridField(u.reshape(mask.shape), domain.h, rho.origin, BOX, mask)
    _BARRIERS[key] = out
    return out


def _check_inputs(domain, fields):
    mask, rho = build_domain(domain)
    for name, fld in fields.items():
        if fld.topology != BOX or fld.shape != rho.shape or \
                not np.allclose(fld.origin, rho.origin) or \
                not np.isclose(fld.spacing, rho.spacing):
            raise ValueError(f"{name} does not live on the domain grid")
    return mask, rho


def initialize(domain, f, phi, m, multiplier=None):
    """Admissible start ``u0 = phi + B g`` with ``u0 = phi`` on the collar.

    `g` is the discrete barrier of the domain. ``B = 0`` is tried first,
    then powers of two; the first B giving ``S_m(H u0) >= max f`` with a
    positive cone margin at every interior point is used. A fixed
    `multiplier` skips the search.
    """
    mask, rho = _check_inputs(domain, {"f": f, "phi": phi})
    st = Stencil(mask, domain.h)
    fmax = float(f.values[mask].max())
    base = phi.values.reshape(-1)

    def ok(u):
        _, s, margin = _state(st, u, None, m)
        return margin.min() > 0 and s[:, m].min() >= fmax

    def build(b):
        if b == 0:
            return base.copy()
        g = discrete_barrier(domain, m)
        return base + b * g.values.reshape(-1)

    if multiplier is not None:
        u = build(multiplier)
        if not ok(u):
            raise InitializationError(f"multiplier {multiplier} is not admissible")
        return GridField(u.reshape(mask.shape), domain.h, rho.origin, BOX, mask)
    for b in [0.0] + [2.0 ** k for k in range(-10, 41)]:
        u = build(b)
        if ok(u):
            return GridField(u.reshape(mask.shape), domain.h, rho.origin, BOX, mask)
    raise InitializationError("no barrier multiplier up to 2**40 is admissible")


# -- public solvers -----------------------------------------------------------

def solve_dirichlet(domain, f, phi, m, cfg=None, u0=None):
    """Solve ``S_m(H u) = f`` on the interior with ``u = phi`` on the collar.

    Parameters
    ----------
    domain : DomainSpec
    f, phi : GridField
        Right-hand side (read on the interior) and boundary data (read on
        the collar), both on the domain's box grid.
    m : int
    cfg : SolverConfig, optional
    u0 : GridField, optional
        Admissible starting field; its collar is reset to `phi`. Defaults to
        `initialize`.

    Returns
    -------
    u : GridField
    diagnostics : SolveDiagnostics
    """
    cfg = (cfg or SolverConfig()).validate()
    mask, rho = _check_inputs(domain, {"f": f, "phi": phi})
    if not 1 <= m <= domain.n:
        raise ValueError(f"m must satisfy 1 <= m <= {domain.n}")
    fi_full = f.values.reshape(-1)
    st = Stencil(mask, domain.h)
    fi = fi_full[st.points].copy()
    if fi.min() < 0:
        raise PreconditionError("right-hand side must be non-negative")
    if cfg.scheme == NEWTON and fi.min() <= 0:
        raise PreconditionError("Newton needs a strictly positive right-hand side")
    start = time.perf_counter()
    if u0 is None:
        u0 = initialize(domain, f, phi, m)
    u = u0.values.reshape(-1).copy()
    collar = ~mask.reshape(-1)
    u[collar] = phi.values.reshape(-1)[collar]
    history = []
    run = _newton if cfg.scheme == NEWTON else _gauss_seidel
    try:
        iters = run(st, u, fi, m, cfg, history)
    except ConvergenceError as exc:
        exc.diagnostics = _diagnostics(st, u, fi, m, len(history) - 1, history, start)
        raise
    out = GridField(u.reshape(mask.shape), domain.h, rho.origin, BOX, mask)
    return out, _diagnostics(st, u, fi, m, iters, history, start)


def _diagnostics(st, u, fi, m, iters, history, start):
    _, s, margin = _state(st, u, fi, m)
    return SolveDiagnostics(
        iterations=int(iters),
        residual_max=float(np.abs(s[:, m] - fi).max()),
        cone_margin_min=float(margin.min()),
        residual_history=[float(r) for r in history],
        wall_time_s=time.perf_counter() - start,
    )


def eps_rhs(eps, m, scale):
    return eps ** m if scale == "root" else eps


def solve_homogeneous(domain, phi, m, cfg=None):
    """Approximate ``S_m(H u) = 0`` through a decreasing schedule of levels.

    Each level solves with a constant right-hand side (``eps^m`` when
    ``cfg.eps_scale == "root"``, else ``eps``), warm-started from the
    previous level's solution. The diagnostics carry the per-level maximum
    gaps; the last one is a Cauchy estimate for the limit.
    """
    cfg = (cfg or SolverConfig()).validate()
    if not len(cfg.eps_schedule):
        raise ConfigurationError("needs at least one level", "eps_schedule")
    start = time.perf_counter()
    u_prev, u, diag = None, None, None
    gaps, iters, history = [], 0, []
    for eps in cfg.eps_schedule:
        f = phi.with_values(np.full(phi.shape, eps_rhs(eps, m, cfg.eps_scale)))
        u, diag = solve_dirichlet(domain, f, phi, m, cfg, u0=u_prev)
        if u_prev is not None:
            gaps.append(float(np.abs(u.values - u_prev.values).max()))
        iters += diag.iterations
        history.extend(diag.residual_history)
        u_prev = u
    diag = replace(diag, iterations=iters, residual_history=history,
                   wall_time_s=time.perf_counter() - start,
                   extra={"levels": list(cfg.eps_schedule), "level_gaps": gaps,
                          "cauchy_gap": gaps[-1] if gaps else None})
    return u, diag
