"""
Smooth approximation from above of an omega-m-subharmonic function on the
flat torus, by local Dirichlet solves glued with a regularized maximum.

Outline of `run_pipeline`:

1. For every chart ``U_k`` of a `ChartCover`, lift ``u`` to ``u + rho_k``
   with ``rho_k = |z - c_k|^2`` and solve ``S_m(H v) = eps`` on the chart
   ball with boundary data ``u + rho_k - delta`` (`local_solution`). The
   pull-down ``delta`` is halved until ``v > u + rho_k`` on the inner ball.
2. Blend ``v - rho_k`` into ``u - 2 h`` with a radial cutoff and verify the
   four properties every piece must have (`modify_extend`).
3. Take ``psi = (1/j) log sum exp(j u_k)`` (`glue`), check
   ``u <= psi <= u + h`` and that ``H psi + I`` stays in the cone, and
   double ``j`` until both hold or the cap is reached.

The fourth piece property asks for strict admissibility on
``{u_k - u > inf(u_k - u) / 2}``. By default the infimum is taken over the
inner ball, where it is positive; ``GlueConfig.inf_over = "outer"`` takes it
over the whole chart instead.
"""
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigurationError, CoverError, GluingError,
                     ModificationError)
from .grid import (TORUS, DomainSpec, GridField, atomic_write_text, build_domain,
                   save_field)
from .solver import SolverConfig, solve_dirichlet
from .validation import (admissibility_margin, cone_deficit, sandwich_check,
                         viscosity_check)

BULLETS = ("below u + h everywhere", "above u on the inner ball",
           "below u outside the chart", "strictly admissible where dominant")


@dataclass(frozen=True)
class GlueConfig:
    """Parameters of the gluing construction.

    ``cutoff_inner`` and ``cutoff_outer`` are fractions of the chart radius:
    the blend weight is 1 inside the first and 0 outside the second.
    ``j`` is the starting sharpness; the pipeline doubles it up to ``j_cap``.
    """

    h_target: float = 0.5
    j: float = 64.0
    delta_boundary: float = 0.05
    eps_rhs: float = 0.01
    cutoff_inner: float = 0.9
    cutoff_outer: float = 1.0
    max_halvings: int = 20
    j_cap: float = 2.0 ** 20
    inf_over: str = "inner"
    sandwich_tol: float = 1e-9

    def validate(self, charts=None):
        if not self.h_target > 0:
            raise ConfigurationError("must be positive", "h_target")
        if not self.j > 0:
            raise ConfigurationError("must be positive", "j")
        if not self.delta_boundary > 0:
            raise ConfigurationError("must be positive", "delta_boundary")
        if not self.eps_rhs > 0:
            raise ConfigurationError("must be positive", "eps_rhs")
        if not 0 < self.cutoff_inner < self.cutoff_outer <= 1:
            raise ConfigurationError("need 0 < inner < outer <= 1", "cutoff")
        if self.max_halvings < 0:
            raise ConfigurationError("must be non-negative", "max_halvings")
        if self.inf_over not in ("inner", "outer"):
            raise ConfigurationError(f"unknown choice {self.inf_over!r}", "inf_over")
        if charts is not None and self.j < math.log(charts) / self.h_target:
            raise ConfigurationError(
                f"j must be at least ln({charts})/h_target = "
                f"{math.log(charts) / self.h_target:.4g}", "j")
        return self

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        cutoff = data.pop("cutoff", None)
        if cutoff is not None:
            data["cutoff_inner"], data["cutoff_outer"] = cutoff
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown keys {sorted(unknown)}", "glue")
        return cls(**data).validate()


# -- regularized maximum ------------------------------------------------------

def smooth_max(values, j):
    """``(1/j) log sum_i exp(j v_i)`` in shifted form.

    The maximum is subtracted before exponentiating, so the result obeys
    ``max(v) <= result <= max(v) + log(N)/j`` without overflow.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("smooth_max needs at least one value")
    if not j > 0:
        raise ValueError("sharpness j must be positive")
    top = v.max()
    return float(top + np.log(np.exp(j * (v - top)).sum()) / j)


def smooth_max_stack(stack, j):
    """Pointwise `smooth_max` over the first axis of `stack`."""
    stack = np.asarray(stack, dtype=float)
    top = stack.max(axis=0)
    return top + np.log(np.exp(j * (stack - top)).sum(axis=0)) / j


# -- pieces -------------------------------------------------------------------

@dataclass
class LocalSolution:
    """Chart solve: ``v`` lives on the chart box, ``index`` maps box axes
    to torus indices."""

    chart: int
    v: GridField
    lifted: np.ndarray
    index: list
    delta: float
    margin: float
    attempts: int
    solve: dict


@dataclass
class LocalPiece:
    chart: int
    values: GridField
    inner: np.ndarray
    admissible: np.ndarray
    delta: float
    checks: dict = field(default_factory=dict)


def _chart_box(u, cover, k):
    """Local domain around chart k and the torus indices of its box."""
    h = u.spacing
    c = np.asarray(cover.centers[k], dtype=float)
    shape = np.array(u.shape)
    pos = (c - u.origin) / h
    ci = np.rint(pos).astype(int)
    off = (pos - ci) * h
    r = cover.outer
    half = int(math.ceil((r + np.abs(off).max()) / h)) + 2
    index = [np.arange(ci[a] - half, ci[a] + half + 1) % shape[a]
             for a in range(u.values.ndim)]
    n = u.n
    centre = tuple(complex(off[2 * p], off[2 * p + 1]) for p in range(n))
    lower = (-half * h,) * (2 * n)
    upper = (half * h,) * (2 * n)
    return DomainSpec("ball", centre, (r,), lower, upper, h), index, off


def local_solution(u, cover, k, m, cfg, solver_cfg=None):
    """Solve the chart Dirichlet problem for chart `k`.

    Returns a LocalSolution whose ``v`` exceeds ``u + rho_k`` on the
    closed inner ball. Raises GluingError when the chart has no room for a
    grid interior or when `max_halvings` halvings of the pull-down do not
    produce a positive margin.
    """
    cfg = cfg.validate()
    if not u.periodic:
        raise CoverError("the gluing pipeline runs on torus grids")
    if cover.outer <= 2 * u.spacing:
        raise GluingError(f"chart radius {cover.outer} is within two grid steps",
                          worst_margin=None)
    domain, index, off = _chart_box(u, cover, k)
    try:
        empty = domain.validate().empty_field()
        build_domain(domain)
    except ConfigurationError as exc:
        raise GluingError(f"chart {k} has no usable interior: {exc}") from None
    coords = empty.coordinates()
    rho = np.broadcast_to(sum((x - off[a]) ** 2 for a, x in enumerate(coords)),
                          empty.shape)
    lifted = u.values[np.ix_(*index)] + rho
    inner = np.sqrt(rho) <= cover.inner
    f = empty.with_values(np.full(empty.shape, cfg.eps_rhs))
    delta = cfg.delta_boundary
    worst = -np.inf
    for attempt in range(cfg.max_halvings + 1):
        phi = empty.with_values(lifted - delta)
        v, diag = solve_dirichlet(domain, f, phi, m, solver_cfg)
        worst = float((v.values - lifted)[inner].min())
        if worst > 0:
            return LocalSolution(k, v, lifted, index, delta, worst, attempt + 1,
                                 diag.to_dict())
        delta *= 0.5
    raise GluingError(f"chart {k}: v does not exceed u + rho on the inner ball "
                      f"after {cfg.max_halvings} halvings", worst_margin=worst)


def _cutoff(dist, a, b):
    """C-infinity radial weight: 1 for dist <= a, 0 for dist >= b."""
    t = np.clip((b - dist) / (b - a), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        e0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        e1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return e0 / (e0 + e1)


def _scatter(u, local):
    """Values of ``v - rho_k`` at the torus points inside the chart ball."""
    out = np.full(u.shape, np.nan)
    mask = local.v.mask
    grids = np.meshgrid(*local.index, indexing="ij")
    pts = tuple(g[mask] for g in grids)
    rho = local.lifted - u.values[np.ix_(*local.index)]
    out[pts] = (local.v.values - rho)[mask]
    return out


def modify_extend(local, u, cover, m, cfg, check=True):
    """Blend the chart solution into a global piece and verify it.

    ``u_k = chi (v_k - rho_k) + (1 - chi) (u - 2 h)`` with ``chi`` the radial
    cutoff of `cfg`. The four required properties are checked in order and
    the first failure raises ModificationError naming it. The check values
    are stored on the piece either way.
    """
    k = local.chart
    dist = cover.distance(u, k)
    dist = np.broadcast_to(dist, u.shape)
    r = cover.outer
    chi = _cutoff(dist, cfg.cutoff_inner * r, cfg.cutoff_outer * r)
    base = u.values - 2.0 * cfg.h_target
    lifted = _scatter(u, local)
    if np.isnan(lifted[chi > 0]).any():
        raise ModificationError("cutoff support leaves the chart ball",
                                bullet=None, location=None)
    vals = np.where(chi > 0, chi * np.nan_to_num(lifted) + (1.0 - chi) * base, base)
    piece = GridField(vals, u.spacing, u.origin, TORUS)
    inner = dist <= cover.inner
    gap = vals - u.values
    ref = inner if cfg.inf_over == "inner" else dist < r
    half_inf = 0.5 * float(gap[ref].min())
    dominant = gap > half_inf
    checks = {
        BULLETS[0]: float(cfg.h_target - gap.max()),
        BULLETS[1]: float(gap[inner].min()),
        BULLETS[2]: float(-gap[dist >= r].max()) if (dist >= r).any() else math.inf,
        BULLETS[3]: admissibility_margin(piece, m, shift=1.0, where=dominant),
        "half_inf": half_inf,
    }
    out = LocalPiece(k, piece, inner, dominant, local.delta, checks)
    if check:
        where = {
            BULLETS[0]: gap >= cfg.h_target,
            BULLETS[1]: inner & (gap <= 0),
            BULLETS[2]: (dist >= r) & (gap >= 0),
        }
        for name, bad in where.items():
            if checks[name] <= 0:
                loc = tuple(int(i) for i in np.argwhere(bad)[0])
                raise ModificationError(f"chart {k}: piece fails '{name}' "
                                        f"(margin {checks[name]:.3e})", name, loc)
        if checks[BULLETS[3]] <= 0:
            rep = viscosity_check(piece, m, 0.0, shift=1.0, where=dominant)
            deficit = cone_deficit(piece, m, shift=1.0)
            loc = rep.violations[0].index if rep.violations else tuple(
                int(i) for i in np.unravel_index(
                    int(np.argmax(np.where(dominant, deficit, -1.0))), u.shape))
            raise ModificationError(f"chart {k}: piece fails '{BULLETS[3]}' "
                                    f"(margin {checks[BULLETS[3]]:.3e})",
                                    BULLETS[3], loc)
    return out


# -- gluing -------------------------------------------------------------------

@dataclass
class GlueResult:
    psi: GridField
    j: float
    sandwich: object
    margin: float

    @property
    def passed(self):
        return self.sandwich.passed and self.margin > 0


def glue(pieces, u, m, cfg, j=None):
    """Regularized maximum of the pieces, with its two checks attached.

    Raises CoverError if some grid point lies in no piece's inner ball.
    """
    if not pieces:
        raise CoverError("no pieces to glue")
    covered = np.zeros(u.shape, dtype=bool)
    for p in pieces:
        covered |= p.inner
    if not covered.all():
        idx = tuple(int(i) for i in np.argwhere(~covered)[0])
        raise CoverError(f"grid point {idx} lies in no inner ball")
    j = cfg.j if j is None else j
    stack = np.stack([p.values.values for p in pieces])
    psi = u.with_values(smooth_max_stack(stack, j))
    rep = sandwich_check(u, psi, cfg.h_target, cfg.sandwich_tol)
    margin = admissibility_margin(psi, m, shift=1.0)
    return GlueResult(psi, float(j), rep, margin)


def downsample(u, factor=2):
    """Every `factor`-th point of a torus grid along each axis."""
    if not u.periodic:
        raise ValueError("downsampling is defined for torus grids")
    if any(s % factor for s in u.shape):
        raise ValueError(f"shape {u.shape} is not divisible by {factor}")
    sl = tuple(slice(None, None, factor) for _ in u.shape)
    return GridField(u.values[sl], u.spacing * factor, u.origin, TORUS)


@dataclass
class PipelineResult:
    u: GridField
    psi: GridField
    pieces: list
    j: float
    j_history: list
    sandwich: object
    margin: float
    input_margin: float
    wall_time_s: float

    @property
    def passed(self):
        return self.sandwich.passed and self.margin > 0

    def pieces_metadata(self):
        return [{"chart": p.chart, "delta": p.delta,
                 "checks": {k: float(v) for k, v in p.checks.items()}}
                for p in self.pieces]

    def verification(self):
        return {"pass": bool(self.passed), "j": self.j, "j_history": self.j_history,
                "sandwich": self.sandwich.to_dict() | {
                    "min_gap": self.sandwich.extra.get("min_gap"),
                    "max_gap": self.sandwich.extra.get("max_gap")},
                "admissibility": {"pass": bool(self.margin > 0),
                                  "margin": self.margin},
                "input_margin": self.input_margin,
                "wall_time_s": self.wall_time_s}

    def write(self, outdir):
        """Result bundle: psi as CSV/JSON plus pieces and verification JSON."""
        outdir = Path(outdir)
        save_field(self.psi, outdir / "psi.csv")
        atomic_write_text(outdir / "pieces.json",
                          json.dumps(self.pieces_metadata(), indent=2))
        atomic_write_text(outdir / "verification.json",
                          json.dumps(self.verification(), indent=2))
        return outdir


def run_pipeline(u, cover, m, cfg=None, solver_cfg=None, progress=None):
    """Build psi with ``u <= psi <= u + h`` and ``H psi + I`` in the cone.

    Parameters
    ----------
    u : GridField
        Torus field; should itself satisfy ``H u + I`` in the cone (the
        margin is recorded as ``input_margin``).
    cover : ChartCover
    m : int
    cfg : GlueConfig
    solver_cfg : SolverConfig, optional
        Used for every chart solve.
    progress : callable, optional
        Called with ``(k, local_solution)`` after each chart.
    """
    start = time.perf_counter()
    cfg = (cfg or GlueConfig()).validate(len(cover))
    solver_cfg = solver_cfg or SolverConfig()
    if u.topology != TORUS:
        raise CoverError("the gluing pipeline runs on torus grids")
    cover.verify(u)
    input_margin = admissibility_margin(u, m, shift=1.0)
    pieces = []
    for k in range(len(cover)):
        local = local_solution(u, cover, k, m, cfg, solver_cfg)
        pieces.append(modify_extend(local, u, cover, m, cfg))
        if progress is not None:
            progress(k, local)
    j = cfg.j
    history = []
    while True:
        res = glue(pieces, u, m, cfg, j)
        history.append({"j": j, "sandwich": bool(res.sandwich.passed),
                        "margin": res.margin})
        if res.passed or 2.0 * j > cfg.j_cap:
            break
        j *= 2.0
    return PipelineResult(u, res.psi, pieces, j, history, res.sandwich, res.margin,
                          input_margin, time.perf_counter() - start)
