import numpy as np
import pytest
import scipy.sparse.linalg as spla

from hessianlab.errors import (ConeError, ConfigurationError, ConvergenceError,
                               PreconditionError)
from hessianlab.grid import DomainSpec, build_domain, sample
from hessianlab.solver import (SolverConfig, Stencil, initialize, linearized_apply,
                               residual, solve_dirichlet, solve_homogeneous)
from hessianlab.validation import admissibility_margin, checked_points

from conftest import quadratic


def fields(domain, fn):
    return sample(domain.empty_field(), fn)


def const(domain, c):
    return fields(domain, lambda *x: np.full(np.broadcast_shapes(*[np.shape(v) for v in x]), c))


def test_residual_trivial_cases(coarse_ball):
    u = fields(coarse_ball, quadratic(2.0))
    r = residual(u, const(coarse_ball, 4.0), 2)
    assert np.abs(r.values).max() < 1e-12
    lin = fields(coarse_ball, lambda x1, y1, x2, y2: x1 + 0 * (y1 + x2 + y2))
    assert np.abs(residual(lin, const(coarse_ball, 0.0), 2).values).max() < 1e-12


@pytest.mark.parametrize("h", [0.1, 0.05])
def test_residual_quartic_in_one_variable(h):
    dom = DomainSpec.ball(1, 1.0, h=h)
    u = fields(dom, lambda x, y: (x ** 2 + y ** 2) ** 2)
    f = fields(dom, lambda x, y: 0.0 * x + 0.0 * y)
    r = residual(u, f, 1)
    exact = fields(dom, lambda x, y: 4 * (x ** 2 + y ** 2))
    pts = checked_points(r) & build_domain(dom)[0]
    err = np.abs(r.values - exact.values)[pts].max()
    # the stencil error of |z|^4 is exactly h^2
    assert err == pytest.approx(h ** 2, rel=1e-6)


def test_residual_shape_mismatch(coarse_ball):
    other = DomainSpec.ball(2, 1.0, h=0.5)
    with pytest.raises(ValueError):
        residual(fields(coarse_ball, quadratic()), const(other, 1.0), 2)


def test_linearized_trivial_cases(coarse_ball):
    u = fields(coarse_ball, quadratic(1.0))
    w = fields(coarse_ball, lambda x1, y1, x2, y2: x1 ** 2 + y1 ** 2 + 0 * (x2 + y2))
    mask, _ = build_domain(coarse_ball)
    assert np.allclose(linearized_apply(u, w, 2).values[mask], 1.0)
    assert np.allclose(linearized_apply(u, const(coarse_ball, 3.0), 2).values, 0.0)


def test_linearized_matches_finite_difference(coarse_ball, rng):
    mask, _ = build_domain(coarse_ball)
    u = fields(coarse_ball, quadratic(1.0))
    u = u.with_values(u.values + 0.01 * rng.standard_normal(u.shape))
    w = u.with_values(rng.standard_normal(u.shape))
    f = const(coarse_ball, 0.0)
    t = 1e-4
    fd = (residual(u.with_values(u.values + t * w.values), f, 2).values
          - residual(u.with_values(u.values - t * w.values), f, 2).values) / (2 * t)
    assert np.abs(fd - linearized_apply(u, w, 2).values)[mask].max() < 1e-5


def test_linearized_rejects_inadmissible(coarse_ball):
    u = fields(coarse_ball, quadratic(-1.0))
    with pytest.raises(ConeError) as info:
        linearized_apply(u, u, 2)
    assert info.value.margin < 0


@pytest.mark.parametrize("m, c, f", [(2, 2.0, 4.0), (1, 1.0, 2.0)])
def test_quadratic_solutions_are_reproduced(coarse_ball, m, c, f):
    exact = fields(coarse_ball, quadratic(c))
    # start away from the answer so the solver has work to do
    u0 = initialize(coarse_ball, const(coarse_ball, f), exact, m, multiplier=1.0)
    u, diag = solve_dirichlet(coarse_ball, const(coarse_ball, f), exact, m, u0=u0)
    assert diag.iterations > 0
    assert np.abs(u.values - exact.values).max() <= 1e-7
    assert diag.residual_max <= SolverConfig().tol_residual


def test_diagnostics_match_recomputation(coarse_ball):
    mask, _ = build_domain(coarse_ball)
    phi = fields(coarse_ball, quadratic(2.0))
    f = const(coarse_ball, 1.0)
    u, diag = solve_dirichlet(coarse_ball, f, phi, 2)
    r = residual(u, f, 2)
    assert abs(np.abs(r.values[mask]).max() - diag.residual_max) <= 1e-14
    assert diag.cone_margin_min == pytest.approx(admissibility_margin(u, 2, where=mask))
    assert diag.residual_history[-1] == diag.residual_max
    assert set(diag.to_dict()) >= {"iterations", "residual_max", "cone_margin_min",
                                   "residual_history", "wall_time_s"}


def test_collar_is_untouched(coarse_ball):
    mask, _ = build_domain(coarse_ball)
    phi = fields(coarse_ball, quadratic(2.0))
    u, _ = solve_dirichlet(coarse_ball, const(coarse_ball, 1.0), phi, 2)
    assert np.array_equal(u.values[~mask], phi.values[~mask])


def test_ordering_in_right_hand_side(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    u1, _ = solve_dirichlet(coarse_ball, const(coarse_ball, 1.0), phi, 2)
    u2, _ = solve_dirichlet(coarse_ball, const(coarse_ball, 4.0), phi, 2)
    assert np.all(u1.values >= u2.values - 1e-7)
    assert (u1.values - u2.values).max() > 0.1


def test_ordering_in_boundary_data(coarse_ball):
    f = const(coarse_ball, 1.0)
    lo = fields(coarse_ball, quadratic(2.0))
    hi = lo.with_values(lo.values + 0.3 + 0.1 * lo.values)
    u1, _ = solve_dirichlet(coarse_ball, f, lo, 2)
    u2, _ = solve_dirichlet(coarse_ball, f, hi, 2)
    assert np.all(u1.values <= u2.values + 1e-7)


def test_schemes_agree(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    f = const(coarse_ball, 1.0)
    tol = 1e-9
    u_n, _ = solve_dirichlet(coarse_ball, f, phi, 2, SolverConfig(tol_residual=tol))
    u_g, d_g = solve_dirichlet(coarse_ball, f, phi, 2,
                               SolverConfig(scheme="gauss-seidel", tol_residual=tol,
                                            max_outer=20000))
    assert np.abs(u_n.values - u_g.values).max() <= 10 * tol
    assert d_g.residual_max <= tol


def test_uniqueness_from_two_starts(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    f = const(coarse_ball, 1.0)
    cfg = SolverConfig(tol_residual=1e-10)
    a, _ = solve_dirichlet(coarse_ball, f, phi, 2, cfg)
    b, _ = solve_dirichlet(coarse_ball, f, phi, 2, cfg,
                           u0=initialize(coarse_ball, f, phi, 2, multiplier=8.0))
    assert np.abs(a.values - b.values).max() <= 10 * cfg.tol_residual


def test_relaxation_and_ilu_inner_solves_agree(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    f = const(coarse_ball, 1.0)
    out = []
    for method in ("amg", "gmres", "relaxation"):
        cfg = SolverConfig.from_dict({"linear_solver": {"method": method,
                                                        "max_iter": 2000}})
        out.append(solve_dirichlet(coarse_ball, f, phi, 2, cfg)[0].values)
    assert np.abs(out[0] - out[1]).max() < 1e-9
    assert np.abs(out[0] - out[2]).max() < 1e-9


def test_poisson_case_matches_direct_solve():
    dom = DomainSpec.ball(1, 1.0, h=0.05)
    mask, _ = build_domain(dom)
    phi = fields(dom, lambda x, y: x ** 3 - y)
    f = fields(dom, lambda x, y: 1.0 + 0.5 * x ** 2 + 0 * y)
    u, _ = solve_dirichlet(dom, f, phi, 1, SolverConfig(tol_residual=1e-12))
    st = Stencil(mask, dom.h)
    lap = st.operator(np.broadcast_to(np.eye(1), (st.size, 1, 1)))
    flat = phi.values.reshape(-1).copy()
    flat[st.points] = 0.0
    # collar values enter the interior equations as a known term
    bterm = _collar_term(st, flat)
    direct = spla.spsolve(lap.tocsc(), f.values.reshape(-1)[st.points] - bterm)
    assert np.abs(u.values.reshape(-1)[st.points] - direct).max() <= 1e-8


def _collar_term(st, flat):
    d = st.differences(flat)
    return 0.25 * (d[0, 0] + d[1, 1])


def test_determinism(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    f = const(coarse_ball, 1.0)
    a, da = solve_dirichlet(coarse_ball, f, phi, 2)
    b, db = solve_dirichlet(coarse_ball, f, phi, 2)
    assert np.array_equal(a.values, b.values)
    assert da.iterations == db.iterations
    assert da.residual_history == db.residual_history


def test_homogeneous_pluriharmonic_and_constant(coarse_ball):
    phi = fields(coarse_ball, lambda x1, y1, x2, y2: x1 + 0 * (y1 + x2 + y2))
    u, diag = solve_homogeneous(coarse_ball, phi, 2)
    assert np.abs(u.values - phi.values).max() <= 1e-3
    c = const(coarse_ball, 0.7)
    u, _ = solve_homogeneous(coarse_ball, c, 2)
    assert np.abs(u.values - 0.7).max() <= 1e-3


def test_homogeneous_levels_contract(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    u, diag = solve_homogeneous(coarse_ball, phi, 2)
    gaps = diag.extra["level_gaps"]
    assert len(gaps) == 2 and gaps[1] < gaps[0]
    assert diag.extra["cauchy_gap"] == gaps[-1]


def test_initialize_examples(coarse_ball):
    mask, _ = build_domain(coarse_ball)
    phi = fields(coarse_ball, quadratic(2.0))
    u0 = initialize(coarse_ball, const(coarse_ball, 4.0), phi, 2)
    assert np.array_equal(u0.values, phi.values)
    bad = fields(coarse_ball, lambda x1, y1, x2, y2: -10 * (x1 ** 2 + y1 ** 2) + 0 * (x2 + y2))
    u0 = initialize(coarse_ball, const(coarse_ball, 1.0), bad, 2)
    assert admissibility_margin(u0, 2, where=mask) > 0
    assert np.array_equal(u0.values[~mask], bad.values[~mask])
    zero = const(coarse_ball, 0.0)
    u0 = initialize(coarse_ball, zero, zero, 2)
    assert admissibility_margin(u0, 2, where=mask) > 0


def test_argument_errors(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    with pytest.raises(PreconditionError):
        solve_dirichlet(coarse_ball, const(coarse_ball, -1.0), phi, 2)
    with pytest.raises(PreconditionError):
        solve_dirichlet(coarse_ball, const(coarse_ball, 0.0), phi, 2)


def test_non_convergence_carries_diagnostics(coarse_ball):
    phi = fields(coarse_ball, quadratic(2.0))
    with pytest.raises(ConvergenceError) as info:
        solve_dirichlet(coarse_ball, const(coarse_ball, 1.0), phi, 2,
                        SolverConfig(max_outer=1))
    assert info.value.diagnostics is not None
    assert info.value.diagnostics.residual_max > 1e-8


@pytest.mark.parametrize("bad, name", [
    ({"tol_residual": 0}, "tol_residual"),
    ({"eps_schedule": [1e-3, 1e-2]}, "eps_schedule"),
    ({"scheme": "multigrid"}, "scheme"),
    ({"damping": 1.5}, "damping"),
    ({"linear_solver": {"method": "lu"}}, "linear_solver.method"),
    ({"typo": 1}, "solver"),
])
def test_config_errors_name_the_field(bad, name):
    with pytest.raises(ConfigurationError) as info:
        SolverConfig.from_dict(bad)
    assert info.value.field == name
