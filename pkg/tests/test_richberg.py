import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessianlab.errors import (ConfigurationError, CoverError, GluingError,
                               ModificationError)
from hessianlab.grid import ChartCover, GridField, sample
from hessianlab.richberg import (BULLETS, GlueConfig, LocalPiece, downsample, glue,
                                 local_solution, modify_extend, smooth_max,
                                 smooth_max_stack)


def test_smooth_max_examples():
    assert smooth_max([0.0, 0.0], 1.0) == pytest.approx(math.log(2.0), abs=1e-15)
    val = smooth_max([0.0, 1.0], 10.0)
    assert val == pytest.approx(1.0 + math.log1p(math.exp(-10.0)) / 10.0, abs=1e-15)
    assert 1.0 <= val <= 1.0 + math.log(2.0) / 10.0
    with pytest.raises(ValueError):
        smooth_max([], 1.0)
    with pytest.raises(ValueError):
        smooth_max([1.0], 0.0)


def test_smooth_max_extremes_do_not_overflow():
    v = [1e6, -1e6, 1e6 - 1e-3]
    assert np.isfinite(smooth_max(v, 1e6))
    assert smooth_max(v, 1e6) >= 1e6


values = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40)
sharp = st.floats(1e-3, 1e6)


@settings(max_examples=300, deadline=None)
@given(v=values, j=sharp)
def test_smooth_max_bounds(v, j):
    out = smooth_max(v, j)
    top = max(v)
    assert top - 1e-12 * max(1.0, abs(top)) <= out
    assert out <= top + math.log(len(v)) / j + 1e-12 * max(1.0, abs(top))


@settings(max_examples=200, deadline=None)
@given(v=values, j=st.floats(1e-2, 1e3), c=st.floats(-100, 100))
def test_smooth_max_translation(v, j, c):
    shifted = smooth_max([x + c for x in v], j)
    assert shifted == pytest.approx(smooth_max(v, j) + c, abs=1e-9 * (1 + max(map(abs, v))))


@settings(max_examples=200, deadline=None)
@given(v=st.lists(st.floats(-10, 10), min_size=2, max_size=10), j=st.floats(0.1, 100),
       i=st.integers(0, 9), bump=st.floats(0, 5))
def test_smooth_max_monotone(v, j, i, bump):
    w = list(v)
    w[i % len(w)] += bump
    assert smooth_max(w, j) >= smooth_max(v, j) - 1e-12
    assert smooth_max(v, 2 * j) <= smooth_max(v, j) + 1e-12


def test_stack_version_matches_scalar(rng):
    stack = rng.standard_normal((5, 7))
    out = smooth_max_stack(stack, 3.0)
    assert np.allclose(out, [smooth_max(stack[:, i], 3.0) for i in range(7)])


# -- pieces on a flat torus -----------------------------------------------------

@pytest.fixture(scope="module")
def torus():
    return GridField(np.zeros((16,) * 4), 1 / 16, np.zeros(4), "torus")


@pytest.fixture(scope="module")
def small_cover():
    return ChartCover.cubic(2, 2, 0.2, 0.35)


def test_local_solution_exceeds_lift(torus, small_cover):
    cfg = GlueConfig(delta_boundary=0.075)
    loc = local_solution(torus, small_cover, 0, 2, cfg)
    assert loc.margin > 0 and loc.attempts == 1 and loc.delta == 0.075


def test_local_solution_retries_with_smaller_pulldown(torus, small_cover):
    loc = local_solution(torus, small_cover, 0, 2, GlueConfig(delta_boundary=10.0))
    assert loc.attempts > 1
    assert loc.delta == 10.0 / 2 ** (loc.attempts - 1)
    assert loc.delta < small_cover.outer ** 2 - small_cover.inner ** 2
    assert loc.margin > 0


def test_local_solution_gives_up_when_halvings_run_out(torus, small_cover):
    with pytest.raises(GluingError) as info:
        local_solution(torus, small_cover, 0, 2,
                       GlueConfig(delta_boundary=10.0, max_halvings=2))
    assert info.value.worst_margin < 0


def test_tiny_chart_is_infeasible(torus):
    with pytest.raises(GluingError):
        local_solution(torus, ChartCover.cubic(2, 2, 0.05, 0.1), 0, 2, GlueConfig())


@pytest.fixture(scope="module")
def small_piece(torus, small_cover):
    cfg = GlueConfig(delta_boundary=0.075, cutoff_inner=0.8, cutoff_outer=1.0)
    return cfg, local_solution(torus, small_cover, 0, 2, cfg)


def test_modified_piece_has_all_properties(torus, small_cover, small_piece):
    cfg, loc = small_piece
    piece = modify_extend(loc, torus, small_cover, 2, cfg)
    assert all(piece.checks[b] > 0 for b in BULLETS)
    narrow = modify_extend(loc, torus, small_cover, 2, replace(cfg, cutoff_outer=0.9))
    assert all(narrow.checks[b] > 0 for b in BULLETS)
    dist = np.broadcast_to(small_cover.distance(torus, 0), torus.shape)
    differ = piece.values.values != narrow.values.values
    r = small_cover.outer
    assert differ.any()
    assert np.all((dist[differ] > 0.8 * r) & (dist[differ] < r))


def test_sabotaged_piece_is_rejected(torus, small_cover, small_piece):
    cfg, loc = small_piece
    bad = replace(loc, v=loc.v.with_values(loc.v.values - 10.0))
    with pytest.raises(ModificationError) as info:
        modify_extend(bad, torus, small_cover, 2, cfg)
    assert info.value.bullet == BULLETS[1]
    assert len(info.value.location) == 4


def _offset_pieces(u, cover, c):
    pieces = []
    for k in range(len(cover)):
        inner = np.broadcast_to(cover.distance(u, k) <= cover.inner, u.shape)
        pieces.append(LocalPiece(k, u.with_values(u.values + c), inner, inner, 0.0))
    return pieces


def test_glue_of_offset_pieces(torus):
    u = sample(torus, lambda x1, y1, x2, y2: 0.05 * np.cos(2 * np.pi * x1) + 0 * (y1 + x2 + y2))
    cover = ChartCover.cubic(2, 4, 0.26, 0.45)
    h = 0.2
    n_charts = len(cover)
    cfg = GlueConfig(h_target=h, j=2 * math.log(n_charts) / h)
    res = glue(_offset_pieces(u, cover, h / 2), u, 2, cfg)
    gap = res.psi.values - u.values
    assert gap.min() >= h / 2 - 1e-12
    assert gap.max() <= h / 2 + math.log(n_charts) / cfg.j + 1e-12
    assert res.sandwich.passed


def test_glue_detects_cover_gap(torus):
    cover = ChartCover.cubic(2, 2, 0.2, 0.35)
    with pytest.raises(CoverError):
        glue(_offset_pieces(torus, cover, 0.1), torus, 2, GlueConfig())


@pytest.mark.parametrize("kwargs, name", [
    ({"cutoff_inner": 0.9, "cutoff_outer": 0.8}, "cutoff"),
    ({"h_target": 0.0}, "h_target"),
    ({"inf_over": "both"}, "inf_over"),
])
def test_glue_config_errors(kwargs, name):
    with pytest.raises(ConfigurationError) as info:
        GlueConfig(**kwargs).validate()
    assert info.value.field == name


def test_sharpness_must_cover_chart_count():
    with pytest.raises(ConfigurationError):
        GlueConfig(h_target=0.5, j=1.0).validate(charts=16)
    GlueConfig(h_target=0.5, j=math.log(16) / 0.5).validate(charts=16)


def test_downsample_keeps_every_other_point():
    fine = GridField(np.arange(8.0 ** 2).reshape(8, 8), 1 / 8, np.zeros(2), "torus")
    coarse = downsample(fine)
    assert coarse.shape == (4, 4) and coarse.spacing == 0.25
    assert coarse.values[1, 1] == fine.values[2, 2]
