"""
Command-line front end: ``hessianlab solve|glue|check|oracle``.

Each run reads one JSON config, writes plain CSV/JSON artifacts plus a
``summary.txt`` into ``--out``, and exits with

0  success
2  a verification failed (the result was produced but did not pass)
3  a solver did not converge or could not be started
4  the configuration is invalid
"""
import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cone import elem_sym, random_hermitian
from .errors import (ConfigurationError, ConvergenceError, CoverError,
                     ExpressionError, GluingError, InitializationError,
                     ModificationError, PreconditionError)
from .expr import field_spec
from .grid import (TORUS, ChartCover, DomainSpec, GridField, atomic_write_text,
                   build_domain, density_to_rhs, load_field, sample, save_field,
                   wedge_hypothesis, wedge_normalization, wedge_ratio)
from .richberg import GlueConfig, downsample, run_pipeline
from .solver import SolverConfig, solve_dirichlet, solve_homogeneous
from .validation import (comparison_check, sandwich_check, viscosity_check)

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4
COMMANDS = ("solve", "glue", "check", "oracle")


@dataclass
class RunConfig:
    """Parsed run configuration; `raw` keeps the JSON document."""

    command: str
    raw: dict
    out: Path
    seed: int = 0
    quiet: bool = False
    digest: str = ""
    base_dir: Path = Path(".")
    lines: list = field(default_factory=list)

    def get(self, key, default=None, required=False):
        if key in self.raw:
            return self.raw[key]
        if required:
            raise ConfigurationError("missing required key", key)
        return default

    def say(self, text):
        self.lines.append(text)


def config_digest(raw):
    """sha256 of the canonical JSON form of a config."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _int_in(value, lo, hi, name):
    if isinstance(value, bool) or not isinstance(value, int) or not lo <= value <= hi:
        raise ConfigurationError(f"must be an integer in [{lo}, {hi}]", name)
    return value


def _dimensions(cfg):
    n = _int_in(cfg.get("n", required=True), 1, 3, "n")
    m = _int_in(cfg.get("m", required=True), 1, n, "m")
    return n, m


def _domain(cfg, n):
    spec = cfg.get("domain", required=True)
    if not isinstance(spec, dict):
        raise ConfigurationError("must be an object", "domain")
    h = spec.get("h")
    if not isinstance(h, (int, float)) or h <= 0:
        raise ConfigurationError("must be a positive number", "domain.h")
    kind = spec.get("kind", "ball")
    centre = tuple(complex(*c) if isinstance(c, (list, tuple)) else complex(c)
                   for c in spec.get("center", [0.0] * n))
    if len(centre) != n:
        raise ConfigurationError(f"needs {n} complex entries", "domain.center")
    if kind == "ball":
        radius = float(spec.get("radius", 1.0))
        dom = DomainSpec.ball(n, radius, centre, spec.get("half_width"), h)
    elif kind == "ellipsoid":
        radii = tuple(float(r) for r in spec.get("radii", []))
        half = float(spec.get("half_width", max(radii, default=1.0) + 2 * h))
        c = np.array([[z.real, z.imag] for z in centre]).ravel()
        dom = DomainSpec(kind, centre, radii, tuple(c - half), tuple(c + half), h)
    else:
        raise ConfigurationError(f"unknown kind {kind!r}", "domain.kind")
    if "lower" in spec or "upper" in spec:
        dom = DomainSpec(dom.kind, dom.center, dom.radii,
                         tuple(spec.get("lower", dom.lower)),
                         tuple(spec.get("upper", dom.upper)), h)
    return dom.validate()


def _field_from(spec, grid, name):
    try:
        return sample(grid, field_spec(spec))
    except ExpressionError as exc:
        raise ConfigurationError(str(exc), name) from None


def _rhs(cfg, grid, n, m):
    spec = cfg.get("rhs", required=True)
    if isinstance(spec, dict) and "density" in spec:
        dens = _field_from(spec["density"], grid, "rhs.density")
        kappa = wedge_normalization(n, m)
        cfg.say(f"density converted with kappa({n},{m}) = {kappa:.12g}")
        return dens.with_values(density_to_rhs(dens.values, n, m))
    return _field_from(spec, grid, "rhs")


def _solver_config(cfg):
    return SolverConfig.from_dict(cfg.get("solver", {}))


def _write_json(path, data):
    atomic_write_text(path, json.dumps(data, indent=2, default=float))


# -- commands -----------------------------------------------------------------

def cmd_solve(cfg):
    n, m = _dimensions(cfg)
    dom = _domain(cfg, n)
    scfg = _solver_config(cfg)
    mask, rho = build_domain(dom)
    grid = dom.empty_field()
    phi = _field_from(cfg.get("boundary", required=True), grid, "boundary")
    homogeneous = bool(cfg.get("homogeneous", False))
    if homogeneous:
        u, diag = solve_homogeneous(dom, phi, m, scfg)
    else:
        f = _rhs(cfg, grid, n, m)
        u, diag = solve_dirichlet(dom, f, phi, m, scfg)
    save_field(u, cfg.out / "u.csv")
    out = diag.to_dict()
    cfg.say(f"solve: n={n} m={m} interior points={int(mask.sum())} "
            f"h={dom.h} scheme={scfg.scheme}")
    cfg.say(f"iterations {diag.iterations}, residual {diag.residual_max:.3e}, "
            f"min cone margin {diag.cone_margin_min:.3e}")
    status = EXIT_OK
    if "exact" in cfg.raw:
        exact = _field_from(cfg.raw["exact"], grid, "exact")
        err = float(np.abs(u.values - exact.values).max())
        out["max_error"] = err
        cfg.say(f"max error against exact solution {err:.3e}")
        limit = cfg.get("error_tol")
        if limit is not None and err > float(limit):
            status = EXIT_VERIFY
    vtol = float(cfg.get("viscosity_tol", 10.0 * dom.h ** 2))
    rep = viscosity_check(u, m, vtol)
    out["viscosity_pass"] = rep.passed
    _write_json(cfg.out / "viscosity.json", rep.to_dict())
    cfg.say(f"viscosity check at tol {vtol:.3e}: {'pass' if rep.passed else 'FAIL'}")
    if not rep.passed:
        status = EXIT_VERIFY
    _write_json(cfg.out / "diagnostics.json", out)
    return status


def _torus_field(cfg, n):
    spec = cfg.get("torus", required=True)
    points = _int_in(spec.get("points"), 4, 256, "torus.points")
    factor = _int_in(spec.get("downsample", 1), 1, 8, "torus.downsample")
    if points % factor:
        raise ConfigurationError("points must be divisible by downsample",
                                 "torus.downsample")
    fine = GridField(np.zeros((points,) * (2 * n)), 1.0 / points,
                     np.zeros(2 * n), TORUS)
    u = _field_from(cfg.get("u", required=True), fine, "u")
    return downsample(u, factor) if factor > 1 else u


def _cover(cfg, n):
    spec = cfg.get("cover", required=True)
    kind = spec.get("kind")
    try:
        inner, outer = float(spec["inner"]), float(spec["outer"])
        if kind == "cubic":
            return ChartCover.cubic(n, int(spec["per_axis"]), inner, outer)
        if kind == "cyclic":
            gen = np.asarray(spec["generator"], float) / float(spec.get("denominator", 1))
            return ChartCover.cyclic(gen, int(spec["count"]), inner, outer)
    except KeyError as exc:
        raise ConfigurationError(f"missing key {exc.args[0]!r}", "cover") from None
    raise ConfigurationError(f"unknown kind {kind!r}", "cover.kind")


def cmd_glue(cfg):
    n, m = _dimensions(cfg)
    u = _torus_field(cfg, n)
    cover = _cover(cfg, n)
    gcfg = GlueConfig.from_dict(cfg.get("glue", {}))
    scfg = _solver_config(cfg)
    try:
        cover.verify(u)
    except CoverError as exc:
        raise ConfigurationError(str(exc), "cover") from None
    res = run_pipeline(u, cover, m, gcfg, scfg)
    res.write(cfg.out)
    save_field(u, cfg.out / "u.csv")
    cfg.say(f"glue: {len(cover)} charts on a {u.shape[0]}^{u.values.ndim} torus, "
            f"h_target={gcfg.h_target}")
    cfg.say(f"final j = {res.j:g}; gap psi - u in [{res.sandwich.extra['min_gap']:.4g}, "
            f"{res.sandwich.extra['max_gap']:.4g}]")
    cfg.say(f"sandwich {'pass' if res.sandwich.passed else 'FAIL'}, "
            f"admissibility margin {res.margin:.4e}")
    return EXIT_OK if res.passed else EXIT_VERIFY


def cmd_check(cfg):
    kind = cfg.get("kind", "viscosity")
    path = cfg.get("field", required=True)
    base = cfg.base_dir
    try:
        u = load_field(base / path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read field: {exc}", "field") from None
    tol = cfg.get("tol")
    if kind == "viscosity":
        m = _int_in(cfg.get("m", required=True), 1, u.n, "m")
        tol = float(tol if tol is not None else 10.0 * u.spacing ** 2)
        rep = viscosity_check(u, m, tol, shift=float(cfg.get("shift", 0.0)))
    elif kind == "sandwich":
        psi = load_field(base / cfg.get("psi", required=True))
        rep = sandwich_check(u, psi, float(cfg.get("h", required=True)),
                             float(tol if tol is not None else 1e-9))
    elif kind == "comparison":
        m = _int_in(cfg.get("m", required=True), 1, u.n, "m")
        v = load_field(base / cfg.get("v", required=True))
        fu = _field_from(cfg.get("fu", required=True), u, "fu")
        fv = _field_from(cfg.get("fv", required=True), u, "fv")
        rep = comparison_check(u, v, fu, fv, m, float(tol if tol is not None else 1e-7))
    else:
        raise ConfigurationError(f"unknown check {kind!r}", "kind")
    _write_json(cfg.out / "violations.json", rep.to_dict())
    cfg.say(f"{kind} check at tol {rep.tol:.3e}: "
            f"{'pass' if rep.passed else 'FAIL'}; worst {rep.worst:.3e}, "
            f"{len(rep.violations)} violating points")
    if not rep.precondition_met:
        cfg.say("precondition not met")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_oracle(cfg):
    n, m = _dimensions(cfg)
    kappa = wedge_normalization(n, m)
    guess = wedge_hypothesis(n, m)
    rng = np.random.default_rng(cfg.seed)
    probes = int(cfg.get("probes", 5))
    spread = []
    for _ in range(probes):
        a = random_hermitian(n, rng)
        s = np.linalg.eigvalsh(a)
        sm = elem_sym(s, m)
        if abs(sm) > 1e-6:
            spread.append(abs(wedge_ratio(a, m).real / sm - kappa))
    out = {"n": n, "m": m, "kappa": kappa, "hypothesis": guess,
           "hypothesis_matches": bool(abs(kappa - guess) <= 1e-12 * max(1.0, guess)),
           "random_probe_max_deviation": max(spread, default=0.0)}
    _write_json(cfg.out / "oracle.json", out)
    cfg.say(f"kappa({n},{m}) = {kappa:.15g}")
    cfg.say(f"closed form m!(n-m)!/n! = {guess:.15g} "
            f"({'matches' if out['hypothesis_matches'] else 'differs'})")
    cfg.say(f"max deviation over {probes} random Hermitian probes: "
            f"{out['random_probe_max_deviation']:.3e}")
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "glue": cmd_glue, "check": cmd_check,
            "oracle": cmd_oracle}


# -- driver -------------------------------------------------------------------

def load_config(command, path, out, seed=0, quiet=False):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", "config") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno} column {exc.colno}: "
                                 f"{exc.msg}", "config") from None
    if not isinstance(raw, dict):
        raise ConfigurationError("must be a JSON object", "config")
    declared = raw.get("command", command)
    if declared != command:
        raise ConfigurationError(f"config is for {declared!r}, not {command!r}", "command")
    return RunConfig(command, raw, Path(out), seed, quiet, config_digest(raw),
                     base_dir=Path(path).resolve().parent)


def run(cfg):
    """Execute a RunConfig; returns the exit status and writes the summary."""
    start = time.perf_counter()
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        status = HANDLERS[cfg.command](cfg)
    except (ConfigurationError, ExpressionError) as exc:
        cfg.say(f"configuration error: {exc}")
        status = EXIT_CONFIG
    except (ConvergenceError, InitializationError) as exc:
        cfg.say(f"solver failure: {exc}")
        diag = getattr(exc, "diagnostics", None)
        if diag is not None:
            _write_json(cfg.out / "diagnostics.json", diag.to_dict())
        status = EXIT_SOLVER
    except (GluingError, ModificationError, PreconditionError, CoverError) as exc:
        cfg.say(f"verification failure: {exc}")
        status = EXIT_VERIFY
    cfg.say(f"config sha256 {cfg.digest}")
    cfg.say(f"status {status}, wall time {time.perf_counter() - start:.2f} s")
    atomic_write_text(cfg.out / "summary.txt", "\n".join(cfg.lines) + "\n")
    return status


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not verification failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: configuration error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="hessianlab",
        description="Finite-difference solver and verifiers for complex Hessian equations.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized probes (unsigned 64-bit)")
    parser.add_argument("--quiet", action="store_true", help="do not print the summary")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2 ** 64:
        print("configuration error: --seed must be an unsigned 64-bit integer",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.command, args.config, args.out, args.seed, args.quiet)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run(cfg)
    if not args.quiet:
        print("\n".join(cfg.lines))
    return status


if __name__ == "__main__":
    sys.exit(main())
