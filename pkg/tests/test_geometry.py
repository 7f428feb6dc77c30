import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracmin.energy import Window
from fracmin.experiments import interface_point, step_data
from fracmin.geometry import (blow_up, curvature_csv, density_csv, density_ratio, exterior_tangent_ball,
                              flat_order_sequence, flatness, flatness_csv, harnack_inclusion_check,
                              interior_tangent_ball, nonlocal_mean_curvature)
from fracmin.grid import Ball, CellSet, Empty, GridDomain, HalfSpace, full, rasterize
from fracmin.kernel import KernelTable
from fracmin.mincut import build_cut_problem, minimize
from fracmin.modulus import Modulus

D64 = GridDomain.centered(2, 64, 1.0)


# flatness --------------------------------------------------------------------------


def test_axis_halfspace_flatness():
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), D64)
    rep = flatness(E, (0.0, 0.0), 0.5)
    assert rep.width <= D64.h / (2 * 0.5)
    assert np.degrees(np.arccos(np.dot(rep.direction, (0.0, 1.0)))) < 1.0


def test_diagonal_halfspace_flatness():
    e0 = np.array([1.0, 1.0]) / math.sqrt(2)
    E = rasterize(HalfSpace(e0, 0.0), D64)
    rep = flatness(E, (0.0, 0.0), 0.5)
    # staircase face midpoints sit within h/(2 sqrt 2) of the plane
    assert rep.width <= D64.h / (2 * 0.5)
    assert np.degrees(np.arccos(np.dot(rep.direction, e0))) < 1.0


def test_ball_flatness_sagitta():
    d = GridDomain.centered(2, 256, 1.0)
    R, r = 0.5, 0.2
    E = rasterize(Ball((0.0, 0.0), R), d)
    x0 = interface_point(E, (0.0, R))
    rep = flatness(E, x0, r)
    assert rep.width == pytest.approx(r / (2 * R), rel=0.15)


def test_flatness_rotation_equivariance():
    rng = np.random.default_rng(0)
    E = rasterize(Ball((0.13, -0.07), 0.45), D64, exterior=Empty())
    m = E.mask ^ (rng.random(D64.dims) < 0.02)
    E = E.with_mask(m)
    x0 = np.array([0.1, 0.05])
    rep = flatness(E, x0, 0.4)
    # 90 degree lattice rotation (x, y) -> (-y, x) about the box center
    R = CellSet(D64, np.rot90(m), Empty())
    rot = flatness(R, (-x0[1], x0[0]), 0.4)
    assert rot.width == rep.width
    np.testing.assert_allclose(rot.direction, (-rep.direction[1], rep.direction[0]), atol=1e-12)


@given(st.integers(0, 1000))
def test_flatness_complement_and_translation_invariance(seed):
    rng = np.random.default_rng(seed)
    d = GridDomain.centered(2, 24, 1.0)
    E = CellSet(d, rasterize(HalfSpace(np.array([0.3, 1.0]) / math.hypot(0.3, 1.0), 0.0), d).mask ^ (rng.random(d.dims) < 0.05), Empty())
    x0 = rng.uniform(-0.3, 0.3, 2)
    a = flatness(E, x0, 0.5)
    assert flatness(E.complement(), x0, 0.5).width == a.width
    v = d.h * rng.integers(-5, 6, 2)
    assert flatness(E.translate(v), x0 + v, 0.5).width == pytest.approx(a.width, rel=1e-12)


def test_flatness_errors():
    with pytest.raises(ValueError, match="no interface"):
        flatness(full(D64), (0.0, 0.0), 0.5)
    with pytest.raises(ValueError):
        flatness(rasterize(HalfSpace((0.0, 1.0), 0.0), D64), (0.9, 0.0), 0.5)


def test_flat_order_sequence_halfspace():
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), D64)
    seq = flat_order_sequence(E, (0.0, 0.0), 3, Modulus.power(1.0, 0.25, 0.5))
    assert seq.holds and seq.witness is None
    assert max(seq.widths) <= D64.h
    with pytest.raises(ValueError, match="max feasible k is 3"):
        flat_order_sequence(E, (0.0, 0.0), 6, Modulus.power(1.0, 0.25, 0.5))


def test_flat_order_sequence_ball_widths_grow():
    h = 1 / 32
    d = GridDomain(2, (160, 160), h, (5.5, -2.5))
    E = rasterize(Ball((0.0, 0.0), 8.0), d)
    x0 = interface_point(E, (8.0, 0.0))
    seq = flat_order_sequence(E, x0, 3, lambda t: 1.0, r0=0.25)
    scales = 0.25 * 2.0 ** np.arange(4)
    sag = scales / 16.0
    assert np.all(np.diff(seq.widths) > 0)
    np.testing.assert_allclose(seq.widths[-2:], sag[-2:], rtol=0.25)


def test_flat_order_sequence_flags_witness():
    d = GridDomain.centered(2, 64, 1.0)
    m = rasterize(HalfSpace((0.0, 1.0), 0.0), d).mask.copy()
    m[32, 33:36] = True  # spike of height 3h at x0
    E = CellSet(d, m, HalfSpace((0.0, 1.0), 0.0))
    seq = flat_order_sequence(E, (0.0, 0.0), 2, lambda t: 0.1 * t, r0=4 * d.h)
    assert not seq.holds and seq.witness == 0


# density ---------------------------------------------------------------------------


def test_density_examples():
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), D64)
    r = 8 * D64.h
    assert abs(density_ratio(E, (0.0, 0.0), r) - 0.5) <= D64.h / r
    assert density_ratio(full(D64), (0.1, 0.2), r) == 1.0
    with pytest.raises(ValueError, match="under-resolved"):
        density_ratio(E, (0.0, 0.0), D64.h)


@given(st.integers(0, 1000))
def test_density_complement_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    E = CellSet(D64, rng.random(D64.dims) < 0.4, Empty())
    x0, r = rng.uniform(-0.4, 0.4, 2), rng.uniform(0.1, 0.5)
    assert density_ratio(E, x0, r) + density_ratio(E.complement(), x0, r) == 1.0


# curvature -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def K32():
    return KernelTable(GridDomain.centered(2, 32, 1.0), 0.5)


def test_halfspace_curvature_vanishes(K32):
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), K32.domain)
    rep = nonlocal_mean_curvature(E, (1 / 32, 0.0), K32)
    assert abs(rep.extrapolated) < 1e-9 and abs(rep.value) < 1e-9


def test_convex_square_has_positive_curvature(K32):
    d = K32.domain
    E = CellSet(d, np.all(np.abs(d.centers()) < 0.3, axis=-1), Empty())
    x0 = interface_point(E, (0.0, 0.3))
    rep = nonlocal_mean_curvature(E, x0, K32)
    assert rep.value > 0 and rep.extrapolated > 0
    flip = nonlocal_mean_curvature(E.complement(), x0, K32)
    assert flip.extrapolated == pytest.approx(-rep.extrapolated, rel=1e-13)
    assert flip.values == pytest.approx(tuple(-v for v in rep.values), rel=1e-13)


def test_curvature_errors(K32):
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), K32.domain)
    with pytest.raises(ValueError):
        nonlocal_mean_curvature(E, (0.0, 0.3), K32)
    with pytest.raises(ValueError):
        nonlocal_mean_curvature(E, (1 / 32, 0.0), K32, delta_cut=K32.domain.h)


def test_tangent_ball_curvature_on_flat_minimizer(K32):
    """Where both discrete tangent balls fit, the curvature lies within the half-space residual band.

    Face-level values on staircase minimizers are dominated by the neighbouring lattice step and are
    not asserted here.
    """
    d = K32.domain
    data = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
    res = minimize(build_cut_problem(K32, Window.ball(d, (0.0, 0.0), 0.6), data))
    flat = nonlocal_mean_curvature(data, (1 / 32, 0.0), K32)
    tol = 3 * max(abs(flat.extrapolated), 1e-12)
    mids, normals = res.E.boundary_faces()
    inside = np.linalg.norm(mids, axis=1) < 0.3
    R = 4 * d.h
    for x0, nv in zip(mids[inside], normals[inside]):
        assert interior_tangent_ball(res.E, x0, nv, R) and exterior_tangent_ball(res.E, x0, nv, R)
        H = nonlocal_mean_curvature(res.E, x0, K32).extrapolated
        # interior ball: H >= -tol; exterior ball: H <= tol
        assert -tol <= H <= tol


def test_tangent_balls_on_halfspace():
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), D64)
    assert interior_tangent_ball(E, (0.0, 0.0), (0.0, 1.0), 0.2)
    assert exterior_tangent_ball(E, (0.0, 0.0), (0.0, 1.0), 0.2)
    assert not interior_tangent_ball(E, (0.0, 0.0), (0.0, -1.0), 0.2)


# blow-up ---------------------------------------------------------------------------


@pytest.mark.parametrize("r", [0.25, 0.5, 1.0, 2.0])
def test_blow_up_of_a_cone(r):
    ext = HalfSpace((0.0, 1.0), 0.0)
    E = rasterize(ext, D64)
    B = blow_up(E, (0.0, 0.0), r)
    assert B.exterior == ext
    assert B == rasterize(ext, B.domain)


def test_blow_up_unit_radius_translates():
    E = rasterize(Ball((0.1, 0.0), 0.5), D64)
    B = blow_up(E, (0.6, 0.0), 1.0)
    assert B == E.translate((-0.6, 0.0))


def test_blow_up_of_ball_converges_to_halfspace():
    d = GridDomain.centered(2, 256, 1.0)
    E = rasterize(Ball((0.0, 0.0), 0.5), d)
    x0 = interface_point(E, (0.0, 0.5))
    errs = []
    radii = (0.4, 0.2, 0.1)
    for r in radii:
        B = blow_up(E, x0, r)
        x = B.domain.centers()
        unit = np.linalg.norm(x, axis=-1) < 1
        H = x[..., 1] < 0
        errs.append(np.count_nonzero((B.mask != H) & unit) * B.domain.cell_volume)
    assert errs[0] > errs[1] > errs[2]
    # area between the blown-up circle of radius R/r and its tangent inside B_1 is about r/(3R)
    for r, err in zip(radii, errs):
        assert err <= 1.2 * r / (3 * 0.5)


# Harnack inclusions -------------------------------------------------------------


def test_harnack_on_halfspace():
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), D64)
    rep = harnack_inclusion_check(E, (0.0, 0.0), D64.h / 0.5, 0.5, e0=(0.0, 1.0), r=0.5)
    assert rep.holds and rep.largest_delta0 == pytest.approx(0.95)


def test_harnack_detects_violation():
    m = rasterize(HalfSpace((0.0, 1.0), 0.0), D64).mask.copy()
    m[32, 20:32] = False  # a notch reaching deep below the plane
    E = CellSet(D64, m, HalfSpace((0.0, 1.0), 0.0))
    rep = harnack_inclusion_check(E, (0.0, 0.0), 0.05, 0.5, e0=(0.0, 1.0), r=0.5)
    assert not rep.holds and not rep.lower_ok and rep.upper_ok


def test_csv_emitters(tmp_path):
    curvature_csv(tmp_path / "c.csv", [0.5, 1.0], [1.0, 0.7])
    density_csv(tmp_path / "d.csv", [0.1], [0.5])
    E = rasterize(HalfSpace((0.0, 1.0), 0.0), D64)
    flatness_csv(tmp_path / "f.csv", flat_order_sequence(E, (0.0, 0.0), 1, lambda t: 1.0))
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "r,H"
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "r,density"
    assert len((tmp_path / "f.csv").read_text().splitlines()) == 3
