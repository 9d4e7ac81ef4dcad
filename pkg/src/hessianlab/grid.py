"""
Uniform grids over boxes in R^{2n} = C^n and over the flat torus.

Axis ``2p`` carries ``x_{p+1}`` and axis ``2p + 1`` carries ``y_{p+1}``, so a
grid over C^2 has axes ``(x1, y1, x2, y2)``. The complex Hessian at a grid
point is built from central second differences; it is exact on quadratic
polynomials.
"""
import itertools
import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from math import factorial
from pathlib import Path

import numpy as np

from .cone import elem_sym, hermitian
from .errors import ConfigurationError, CoverError, StencilError

BOX = "box"
TORUS = "torus"


@dataclass(frozen=True, eq=False)
class GridField:
    """Real samples on a uniform grid.

    Parameters
    ----------
    values : ndarray
        One value per grid point, ``values.ndim == 2 * n``.
    spacing : float
        Grid step ``h``, equal on every axis.
    origin : ndarray
        Coordinates of the point with index ``(0, ..., 0)``.
    topology : {"box", "torus"}
        Torus grids are periodic with period ``shape[a] * spacing``.
    mask : ndarray of bool, optional
        Box grids only: interior points of the domain.
    """

    values: np.ndarray
    spacing: float
    origin: np.ndarray
    topology: str = BOX
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 0 or values.ndim % 2:
            raise ConfigurationError("grid must have an even number of axes")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("grid values must be finite")
        if self.spacing <= 0:
            raise ConfigurationError("spacing must be positive")
        if self.topology not in (BOX, TORUS):
            raise ConfigurationError(f"unknown topology {self.topology!r}")
        origin = np.array(self.origin, dtype=float).reshape(-1)
        if origin.size != values.ndim:
            raise ConfigurationError("origin length must match grid rank")
        values.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise ConfigurationError("mask shape must match values")
            mask.flags.writeable = False
            object.__setattr__(self, "mask", mask)

    @property
    def n(self):
        return self.values.ndim // 2

    @property
    def shape(self):
        return self.values.shape

    @property
    def periodic(self):
        return self.topology == TORUS

    def coordinates(self):
        """Sparse coordinate arrays, one per axis, broadcastable to shape."""
        return np.meshgrid(*[self.origin[a] + self.spacing * np.arange(s)
                             for a, s in enumerate(self.shape)],
                           indexing="ij", sparse=True)

    def with_values(self, values):
        return replace(self, values=values)

    def same_grid(self, other):
        return (self.shape == other.shape and self.topology == other.topology
                and self.spacing == other.spacing
                and np.array_equal(self.origin, other.origin))


def interior_mask(field_or_shape, periodic=False):
    """Points whose full second-difference stencil stays on the grid."""
    shape = getattr(field_or_shape, "shape", field_or_shape)
    if periodic:
        return np.ones(shape, dtype=bool)
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(1, s - 1) for s in shape)] = True
    return mask


# -- stencils -----------------------------------------------------------------

def _shift(u, offsets):
    # value at x + offsets (periodic wrap; edges are garbage on box grids)
    out = u
    for axis, o in offsets:
        if o:
            out = np.roll(out, -o, axis=axis)
    return out


def second_differences(u, h):
    """Central second differences D_ab u for all axis pairs a <= b.

    Diagonal terms use the 3-point stencil, mixed terms the 4-point cross
    ``(u(++) - u(+-) - u(-+) + u(--)) / (4 h^2)``. Arrays wrap periodically;
    on box grids only interior entries are meaningful.
    """
    u = np.asarray(u, dtype=float)
    d = {}
    for a in range(u.ndim):
        d[a, a] = (_shift(u, [(a, 1)]) - 2.0 * u + _shift(u, [(a, -1)])) / h**2
        up = _shift(u, [(a, 1)])
        dn = _shift(u, [(a, -1)])
        for b in range(a + 1, u.ndim):
            d[a, b] = (_shift(up, [(b, 1)]) - _shift(up, [(b, -1)])
                       - _shift(dn, [(b, 1)]) + _shift(dn, [(b, -1)])) / (4.0 * h**2)
    return d


def hessian_from_differences(d, n, shape):
    """Assemble complex Hessians u_{p q-bar} from second differences."""
    def dd(a, b):
        return d[(a, b)] if a <= b else d[(b, a)]

    hess = np.empty(tuple(shape) + (n, n), dtype=complex)
    for p in range(n):
        xp, yp = 2 * p, 2 * p + 1
        for q in range(n):
            xq, yq = 2 * q, 2 * q + 1
            re = dd(xp, xq) + dd(yp, yq)
            im = dd(xp, yq) - dd(yp, xq)
            hess[..., p, q] = 0.25 * (re + 1j * im)
    return hess


def hessian_stack(values, h):
    """Complex Hessian at every grid point, shape ``values.shape + (n, n)``.

    Periodic wrap is used at the edges; callers on box grids keep only the
    entries selected by `interior_mask`.
    """
    values = np.asarray(values, dtype=float)
    return hessian_from_differences(second_differences(values, h),
                                    values.ndim // 2, values.shape)


def complex_hessian(field, point):
    """Discrete complex Hessian of `field` at one grid index.

    Returns the Hermitian matrix with entries
    ``1/4 [(D_{x_p x_q} + D_{y_p y_q}) + i (D_{x_p y_q} - D_{y_p x_q})] u``.
    """
    point = tuple(int(i) for i in point)
    if len(point) != field.values.ndim:
        raise StencilError(f"point {point} has wrong rank")
    shape = field.shape
    if field.periodic:
        point = tuple(i % s for i, s in enumerate(shape))
    elif any(i < 1 or i > s - 2 for i, s in zip(point, shape)):
        raise StencilError(f"stencil at {point} leaves the grid")
    # 3^(2n) neighbourhood, then the same formulas as the batched path
    idx = [np.arange(i - 1, i + 2) % s for i, s in zip(point, shape)]
    block = field.values[np.ix_(*idx)]
    centre = (1,) * block.ndim
    h = field.spacing
    d = {}
    for a in range(block.ndim):
        def at(*offs):
            pos = list(centre)
            for ax, o in offs:
                pos[ax] += o
            return block[tuple(pos)]
        d[a, a] = (at((a, 1)) - 2.0 * block[centre] + at((a, -1))) / h**2
        for b in range(a + 1, block.ndim):
            d[a, b] = (at((a, 1), (b, 1)) - at((a, 1), (b, -1))
                       - at((a, -1), (b, 1)) + at((a, -1), (b, -1))) / (4.0 * h**2)
    d = {k: np.asarray(v) for k, v in d.items()}
    return hermitian(hessian_from_differences(d, field.n, ()))


# -- domains ------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Ball or ellipsoid ``{rho < 0}`` inside a grid box.

    ``rho(z) = sum_p |z_p - c_p|^2 / r_p^2 - 1``. A ball uses one radius for
    every coordinate.
    """

    kind: str
    center: tuple
    radii: tuple
    lower: tuple
    upper: tuple
    h: float

    @classmethod
    def ball(cls, n, radius=1.0, center=None, half_width=None, h=0.1):
        center = (0.0,) * n if center is None else tuple(center)
        if half_width is None:
            half_width = radius + 2 * h
        c = np.array([[z.real, z.imag] for z in np.asarray(center, complex)]).ravel()
        return cls("ball", center, (radius,), tuple(c - half_width),
                   tuple(c + half_width), h)

    @property
    def n(self):
        return len(self.center)

    def radius_vector(self):
        r = np.asarray(self.radii, dtype=float).reshape(-1)
        if self.kind == "ball":
            if r.size != 1:
                raise ConfigurationError("a ball takes exactly one radius", "radii")
            r = np.full(self.n, r[0])
        return r

    def validate(self):
        n = self.n
        if not 1 <= n <= 3:
            raise ConfigurationError(f"complex dimension {n} not in 1..3", "center")
        if self.kind not in ("ball", "ellipsoid"):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}", "kind")
        r = self.radius_vector()
        if r.size != n:
            raise ConfigurationError("need one radius per complex coordinate", "radii")
        if not np.all(r > 0):
            raise ConfigurationError("radii must be positive", "radii")
        if not self.h > 0:
            raise ConfigurationError("spacing must be positive", "h")
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        if lo.size != 2 * n or hi.size != 2 * n:
            raise ConfigurationError("box bounds need 2n entries", "lower/upper")
        c = self.real_center()
        rr = np.repeat(r, 2)
        if np.any(c - rr <= lo + self.h) or np.any(c + rr >= hi - self.h):
            raise ConfigurationError("domain must lie strictly inside the box", "lower/upper")
        return self

    def real_center(self):
        c = np.asarray(self.center, dtype=complex)
        return np.array([[z.real, z.imag] for z in c]).ravel()

    def grid_shape(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        counts = np.rint((hi - lo) / self.h).astype(int) + 1
        if np.any(np.abs(lo + (counts - 1) * self.h - hi) > 1e-9 * (1 + np.abs(hi))):
            raise ConfigurationError("box extent is not a multiple of h", "h")
        return tuple(int(s) for s in counts)

    def empty_field(self):
        shape = self.grid_shape()
        return GridField(np.zeros(shape), self.h, np.asarray(self.lower, float))

    def defining_function(self, coords):
        c = self.real_center()
        r = np.repeat(self.radius_vector(), 2)
        return sum(((x - c[a]) / r[a]) ** 2 for a, x in enumerate(coords)) - 1.0


def build_domain(spec):
    """Sample the defining function and mark the interior.

    Returns
    -------
    mask : ndarray of bool
        Points with ``rho < 0`` whose full stencil stays in the box.
    rho : GridField
        ``rho`` on the whole box, carrying `mask`.
    """
    spec.validate()
    base = spec.empty_field()
    rho = spec.defining_function(base.coordinates())
    rho = np.broadcast_to(rho, base.shape)
    mask = (rho < 0) & interior_mask(base.shape)
    if not mask.any():
        raise ConfigurationError("domain has no interior grid points", "h")
    return mask, GridField(rho, spec.h, base.origin, BOX, mask)


def sample(field, fn):
    """Evaluate ``fn(*coords)`` on the grid of `field`, as a new field."""
    vals = np.broadcast_to(fn(*field.coordinates()), field.shape)
    return field.with_values(vals)


# -- wedge normalization ------------------------------------------------------

def _wedge(f, g):
    out = {}
    for ia, ca in f.items():
        for ib, cb in g.items():
            if set(ia) & set(ib):
                continue
            idx = ia + ib
            # sign of the sorting permutation, by counting inversions
            inv = sum(1 for i in range(len(idx)) for j in range(i + 1, len(idx))
                      if idx[i] > idx[j])
            key = tuple(sorted(idx))
            out[key] = out.get(key, 0) + (-1) ** inv * ca * cb
    return {k: v for k, v in out.items() if v != 0}


def _power(form, k, unit):
    out = unit
    for _ in range(k):
        out = _wedge(out, form)
    return out


def _ddc_form(a):
    # 2i sum A_{p qbar} dz_p ^ dzbar_q ; dz_p -> index p, dzbar_q -> n + q
    n = a.shape[0]
    return {(p, n + q): 2j * a[p, q]
            for p in range(n) for q in range(n) if a[p, q] != 0}


def wedge_ratio(a, m):
    """Coefficient ratio of (dd^c u)^m ^ beta^(n-m) to beta^n.

    `a` is the (constant) complex Hessian of u. The ratio is computed by
    expanding both top-degree forms in the exterior algebra on
    ``dz_1..dz_n, dzbar_1..dzbar_n``.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    unit = {(): 1}
    beta = _ddc_form(np.eye(n))
    lhs = _wedge(_power(_ddc_form(a), m, unit), _power(beta, n - m, unit))
    top = _power(beta, n, unit)
    key = tuple(range(2 * n))
    return lhs.get(key, 0) / top[key]


def wedge_normalization(n, m, lam=None):
    """kappa(n, m) with (dd^c u)^m ^ beta^(n-m) = kappa S_m(lambda) beta^n.

    Evaluated at ``u = sum_p lam_p |z_p|^2`` by direct exterior-algebra
    expansion; `lam` defaults to the integers ``1..n`` so the arithmetic is
    exact in floating point.
    """
    if not 1 <= m <= n:
        raise ConfigurationError(f"need 1 <= m <= n, got m={m}, n={n}")
    if n > 3:
        raise ConfigurationError("wedge oracle supports n <= 3 only", "n")
    lam = np.arange(1, n + 1, dtype=float) if lam is None else np.asarray(lam, float)
    ratio = wedge_ratio(np.diag(lam), m)
    return float((ratio / elem_sym(lam, m)).real)


def wedge_hypothesis(n, m):
    """Closed-form candidate m!(n-m)!/n! for the wedge constant."""
    return factorial(m) * factorial(n - m) / factorial(n)


def density_to_rhs(density, n, m):
    """Convert a density f (dV = f beta^n) into the S_m right-hand side."""
    return np.asarray(density, dtype=float) / wedge_normalization(n, m)


# -- torus charts -------------------------------------------------------------

def torus_offsets(field, center):
    """Minimal-image offsets ``x - center`` on a torus grid, one per axis."""
    period = np.array(field.shape) * field.spacing
    out = []
    for a, x in enumerate(field.coordinates()):
        d = x - center[a]
        out.append(d - period[a] * np.round(d / period[a]))
    return out


@dataclass(frozen=True)
class ChartCover:
    """Balls ``U_k`` of radius `outer` with concentric inner balls ``U'_k``.

    The local potential on chart k is ``rho_k(z) = |z - c_k|^2``.
    """

    centers: np.ndarray
    inner: float
    outer: float
    period: float = 1.0

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1:
            raise CoverError("centers must be a non-empty (K, 2n) array")
        c = np.mod(c, self.period)
        c.flags.writeable = False
        object.__setattr__(self, "centers", c)

    def __len__(self):
        return self.centers.shape[0]

    @classmethod
    def cubic(cls, n, per_axis, inner, outer, period=1.0):
        ticks = np.arange(per_axis) * period / per_axis
        centers = np.array(list(itertools.product(ticks, repeat=2 * n)))
        return cls(centers, inner, outer, period)

    @classmethod
    def cyclic(cls, generator, count, inner, outer, period=1.0):
        """Orbit ``k * generator mod period`` for k < count."""
        g = np.asarray(generator, dtype=float)
        centers = np.array([np.mod(k * g, period) for k in range(count)])
        return cls(centers, inner, outer, period)

    def distance(self, field, k):
        off = torus_offsets(field, self.centers[k])
        return np.sqrt(sum(o ** 2 for o in off))

    def local_potential(self, field, k):
        off = torus_offsets(field, self.centers[k])
        return np.broadcast_to(sum(o ** 2 for o in off), field.shape)

    def verify(self, field):
        """Check nesting, injectivity and coverage on a torus grid.

        Returns the cover depth: the minimum over grid points of the largest
        ``inner - dist(x, c_k)``. Raises CoverError on any failure.
        """
        if not field.periodic:
            raise CoverError("chart covers live on torus grids")
        period = np.array(field.shape) * field.spacing
        if not np.allclose(period, self.period):
            raise CoverError("grid period does not match the cover period")
        if self.centers.shape[1] != field.values.ndim:
            raise CoverError("chart centers have the wrong dimension")
        if not 0 < self.inner < self.outer:
            raise CoverError("need 0 < inner radius < outer radius")
        if self.outer >= self.period / 2:
            raise CoverError("charts must embed injectively (outer < period/2)")
        depth = np.full(field.shape, -np.inf)
        for k in range(len(self)):
            depth = np.maximum(depth, self.inner - self.distance(field, k))
        worst = float(depth.min())
        if worst < 0:
            idx = np.unravel_index(int(np.argmin(depth)), field.shape)
            raise CoverError(f"grid point {idx} lies in no inner set")
        return worst


# -- serialization ------------------------------------------------------------

def _rle(mask):
    flat = mask.reshape(-1)
    if flat.size == 0:
        return {"first": False, "runs": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return {"first": bool(flat[0]), "runs": np.diff(bounds).tolist()}


def _unrle(data, shape):
    vals = []
    cur = bool(data["first"])
    for r in data["runs"]:
        vals.append(np.full(r, cur))
        cur = not cur
    flat = np.concatenate(vals) if vals else np.zeros(0, bool)
    return flat.reshape(shape)


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def field_to_csv(field):
    ndim = field.values.ndim
    idx = np.indices(field.shape).reshape(ndim, -1).T
    header = ",".join(f"index{a}" for a in range(ndim)) + ",value"
    lines = [header]
    for row, v in zip(idx.tolist(), field.values.reshape(-1).tolist()):
        lines.append(",".join(map(str, row)) + "," + repr(float(v)))
    return "\n".join(lines) + "\n"


def save_field(field, path):
    """Write `field` as CSV plus a JSON sidecar with the same stem."""
    path = Path(path)
    meta = {
        "topology": field.topology,
        "n": field.n,
        "shape": list(field.shape),
        "spacing": field.spacing,
        "origin": field.origin.tolist(),
        "mask": None if field.mask is None else _rle(field.mask),
    }
    atomic_write_text(path, field_to_csv(field))
    atomic_write_text(path.with_suffix(".json"), json.dumps(meta, indent=2))
    return path


def load_field(path):
    """Read a field written by `save_field`."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    shape = tuple(meta["shape"])
    ndim = len(shape)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = [f"index{a}" for a in range(ndim)] + ["value"]
        if header != expected:
            raise ConfigurationError(f"unexpected CSV header {header}", str(path))
        values = np.empty(int(np.prod(shape)))
        for i, line in enumerate(fh):
            parts = line.rstrip("\n").split(",")
            flat = np.ravel_multi_index(tuple(int(p) for p in parts[:ndim]), shape)
            values[flat] = float(parts[ndim])
        if i + 1 != values.size:
            raise ConfigurationError("CSV row count does not match shape", str(path))
    mask = None if meta.get("mask") is None else _unrle(meta["mask"], shape)
    return GridField(values.reshape(shape), meta["spacing"], meta["origin"],
                     meta["topology"], mask)
