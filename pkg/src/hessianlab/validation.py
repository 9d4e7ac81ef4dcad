"""
Independent verifiers for solver and gluing outputs.

Every check returns a ViolationReport. A point is listed when its violation
magnitude exceeds the tolerance; ``passed`` is true exactly when the worst
magnitude is within the tolerance. Nothing here calls the solvers, so the
checks can be used as oracles against them.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .cone import cone_margin_stack, sigma_all
from .grid import GridField, hessian_stack, interior_mask

CONE = "cone"
COMPARISON = "comparison"
SANDWICH = "sandwich"
PRECONDITION = "precondition"


@dataclass(frozen=True)
class Violation:
    index: tuple
    kind: str
    magnitude: float


@dataclass
class ViolationReport:
    """Outcome of one verification pass.

    `worst` is the largest violation magnitude over all checked points (zero
    when nothing is violated). `precondition_met` is false when the inputs
    did not satisfy the hypotheses of the check; such a report never passes
    and lists the offending points with kind ``"precondition"``.
    """

    violations: list
    worst: float
    tol: float
    precondition_met: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.precondition_met and self.worst <= self.tol

    def to_dict(self):
        return {
            "pass": bool(self.passed),
            "worst": float(self.worst),
            "violations": [{"index": list(v.index), "kind": v.kind,
                            "magnitude": float(v.magnitude)} for v in self.violations],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def checked_points(fld):
    """Mask of points carrying a full stencil: the domain mask on masked
    box grids, the box interior otherwise, every point on a torus."""
    if fld.periodic:
        return np.ones(fld.shape, dtype=bool)
    if fld.mask is not None:
        return fld.mask & interior_mask(fld.shape)
    return interior_mask(fld.shape)


def _report(magnitude, where, kind, tol, precondition_met=True, extra=None):
    """Collect the points of `where` whose magnitude exceeds `tol`.

    Violations come out in lexicographic index order.
    """
    mag = np.where(where, magnitude, 0.0)
    worst = float(max(mag.max(initial=0.0), 0.0))
    flat = np.flatnonzero(mag.reshape(-1) > tol)
    idx = np.array(np.unravel_index(flat, mag.shape)).T
    vals = mag.reshape(-1)[flat]
    viol = [Violation(tuple(int(i) for i in row), kind, float(v))
            for row, v in zip(idx, vals)]
    return ViolationReport(viol, worst, float(tol), precondition_met, extra or {})


def cone_deficit(fld, m, shift=0.0):
    """Pointwise ``max_k max(-S_k, 0)`` for k = 1..m of the discrete Hessian
    plus ``shift * I``. Only meaningful on `checked_points`."""
    hess = hessian_stack(fld.values, fld.spacing)
    if shift:
        hess = hess + shift * np.eye(fld.n)
    s = sigma_all(hess)
    return np.maximum(-s[..., 1:m + 1].min(axis=-1), 0.0)


def viscosity_check(u, m, tol, shift=0.0, where=None):
    """Discrete sub-solution test: S_k(H u) >= -tol for k = 1..m.

    Parameters
    ----------
    u : GridField
    m : int
    tol : float
    shift : float, optional
        Adds ``shift * I`` to every Hessian. With ``shift = 1`` this tests
        admissibility relative to the flat background form, as used on the
        torus.
    where : ndarray of bool, optional
        Restrict the test to these points (intersected with the points that
        carry a full stencil).
    """
    pts = checked_points(u)
    if where is not None:
        pts = pts & np.asarray(where, dtype=bool)
    return _report(cone_deficit(u, m, shift), pts, CONE, tol)


def admissibility_margin(fld, m, shift=0.0, where=None):
    """Smallest normalized cone margin of ``H + shift * I`` over the
    checked points."""
    hess = hessian_stack(fld.values, fld.spacing)
    if shift:
        hess = hess + shift * np.eye(fld.n)
    margin = cone_margin_stack(sigma_all(hess), m)
    pts = checked_points(fld)
    if where is not None:
        pts = pts & np.asarray(where, dtype=bool)
    return float(margin[pts].min())


def comparison_check(u, v, fu, fv, m, tol):
    """Verify ``u <= v + tol`` on the interior given ordered data.

    The hypotheses are ``fu >= fv - tol`` on the checked points and, on box
    grids, ``u <= v + tol`` on the remaining (collar) points. If either
    fails, the report carries ``precondition_met = False`` and lists those
    points instead. `m` is recorded for the caller's benefit; the ordering
    of right-hand sides is read from `fu` and `fv`.
    """
    for other in (v, fu, fv):
        if not u.same_grid(other):
            raise ValueError("all fields must share one grid")
    pts = checked_points(u)
    gap = u.values - v.values
    pre_rhs = np.where(pts, fv.values - fu.values, 0.0)
    pre_collar = np.where(~pts, gap, 0.0)
    pre = np.maximum(pre_rhs, pre_collar)
    if pre.max(initial=0.0) > tol:
        return _report(pre, np.ones(u.shape, bool), PRECONDITION, tol,
                       precondition_met=False, extra={"m": m})
    return _report(gap, pts, COMPARISON, tol, extra={"m": m})


def sandwich_check(u, psi, h, tol):
    """Verify ``u - tol <= psi <= u + h + tol`` at every grid point."""
    if not u.same_grid(psi):
        raise ValueError("u and psi must share one grid")
    below = u.values - psi.values
    above = psi.values - u.values - h
    mag = np.maximum(below, above)
    rep = _report(mag, np.ones(u.shape, bool), SANDWICH, tol)
    diff = psi.values - u.values
    rep.extra.update(min_gap=float(diff.min()), max_gap=float(diff.max()), h=float(h))
    return rep


def max_stability_check(u, v, m, tol):
    """Viscosity check of ``max(u, v)`` at tolerance ``2 * tol``.

    Points whose stencil neighbourhood sees both branches of the maximum
    are exempted: the difference quotients straddle a kink there. Their
    count is returned in ``extra["exempt"]``.
    """
    if not u.same_grid(v):
        raise ValueError("u and v must share one grid")
    branch = (u.values >= v.values).astype(np.int8)
    mode = "wrap" if u.periodic else "nearest"
    hi = ndimage.maximum_filter(branch, size=3, mode=mode)
    lo = ndimage.minimum_filter(branch, size=3, mode=mode)
    mixed = hi != lo
    w = GridField(np.maximum(u.values, v.values), u.spacing, u.origin,
                  u.topology, u.mask)
    pts = checked_points(w) & ~mixed
    rep = _report(cone_deficit(w, m), pts, CONE, 2.0 * tol)
    rep.extra["exempt"] = int((checked_points(w) & mixed).sum())
    return rep
