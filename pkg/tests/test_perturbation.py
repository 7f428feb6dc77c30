import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracmin.experiments import interface_point, kernel
from fracmin.grid import CellSet, Full, GridDomain, HalfSpace
from fracmin.modulus import Modulus
from fracmin.perturbation import (DeformedBall, Frame, build_perturbation, check_inclusions,
                                  euler_lagrange_residual, involution_T, scan_epsilon)


def ring_points(V: DeformedBall, rng, count: int, rmax: float | None = None) -> np.ndarray:
    """Random points of the ring 0 < |y - c| < 2 rho_m, optionally clipped to |y| < rmax."""
    n = V.n
    out = []
    while sum(len(o) for o in out) < count:
        if rmax is None:
            v = rng.normal(size=(count, n))
            v /= np.linalg.norm(v, axis=1)[:, None]
            rm = V._rho_m(v)[0]
            y = V.center + (rng.uniform(0.02, 1.98, count) * rm)[:, None] * v
        else:
            y = rng.uniform(-rmax, rmax, (count, n))
            y = y[np.linalg.norm(y, axis=1) < rmax]
        out.append(V.frame.to_world(y))
    return np.concatenate(out)[:count]


def random_ball(rng, n=2) -> DeformedBall:
    R = rng.uniform(1.0, 3.0)
    eps = rng.uniform(0.05, 0.95) / (6 * n)
    ang = rng.uniform(0, 2 * math.pi)
    frame = Frame.from_normal(rng.normal(size=n), (math.cos(ang), math.sin(ang)) if n == 2 else rng.normal(size=n))
    return DeformedBall(R, eps, frame)


# frame ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3])
def test_frame_is_rigid_and_maps_normal(n):
    rng = np.random.default_rng(n)
    nu = rng.normal(size=n)
    nu /= np.linalg.norm(nu)
    F = Frame.from_normal(rng.normal(size=n), nu)
    np.testing.assert_allclose(F.Q.T @ F.Q, np.eye(n), atol=1e-14)
    assert np.linalg.det(F.Q) == pytest.approx(1.0)
    e = np.zeros(n)
    e[-1] = -1.0
    np.testing.assert_allclose(F.Q @ e, nu, atol=1e-14)
    y = rng.normal(size=(5, n))
    np.testing.assert_allclose(F.to_canonical(F.to_world(y)), y, atol=1e-13)


# involution ------------------------------------------------------------------------


def test_admissibility_errors():
    F = Frame.canonical(2)
    with pytest.raises(ValueError):
        DeformedBall(0.5, 0.01, F)
    with pytest.raises(ValueError):
        DeformedBall(1.0, 1 / 12, F)
    with pytest.raises(ValueError):
        DeformedBall(1.0, 0.0, F)


@pytest.mark.parametrize("n", [2, 3])
def test_involution_is_identity_when_applied_twice(n):
    rng = np.random.default_rng(10 + n)
    V = random_ball(rng, n)
    x = ring_points(V, rng, 10_000)
    err = np.linalg.norm(V.T(V.T(x)) - x, axis=1) / np.maximum(1.0, np.linalg.norm(x, axis=1))
    assert err.max() <= 1e-12


def test_fixed_points_are_the_deformed_sphere():
    rng = np.random.default_rng(3)
    V = random_ball(rng)
    # points on dV along random rays, concentrated on the bent cap
    th = rng.uniform(-0.2, 0.2, 2000) - math.pi / 2
    v = np.stack([np.cos(th), -np.sin(th)], axis=1)
    v[:, 1] = np.abs(v[:, 1])
    on = V.frame.to_world(V.center + V._rho_m(v)[0][:, None] * v)
    assert np.max(np.linalg.norm(V.T(on) - on, axis=1)) <= 1e-12
    rho, rm = V.radial_boundary(on)
    np.testing.assert_allclose(rho, rm, rtol=1e-14)
    # off the sphere the map moves points by twice their radial offset
    off = ring_points(V, rng, 1000)
    rho, rm = V.radial_boundary(off)
    moved = np.linalg.norm(V.T(off) - off, axis=1)
    np.testing.assert_allclose(moved, 2 * np.abs(rho - rm), atol=1e-12)


def test_small_eps_reduces_to_sphere_reflection():
    R = 1.7
    rng = np.random.default_rng(4)
    th = rng.uniform(0, 2 * math.pi, 500)
    v = np.stack([np.cos(th), np.sin(th)], axis=1)
    t = rng.uniform(-0.9 * R, 0.9 * R, 500)
    c = np.array([0.0, -R])
    # rays avoiding the bent cap |y'| < eps see d_eps = 0 exactly
    x = c + (R + t)[:, None] * v
    keep = np.abs(x[:, 0]) > 1e-3
    expected = c + (R - t)[:, None] * v
    got = involution_T(x[keep], R, 1e-9)
    np.testing.assert_allclose(got, expected[keep], atol=1e-12)


def test_involution_errors():
    V = DeformedBall(1.0, 0.05, Frame.canonical(2))
    with pytest.raises(ValueError, match="outside involution domain"):
        V.T(np.array([[0.0, 1.5]]))
    with pytest.raises(ValueError, match="singular"):
        V.T(np.array([[0.0, -1.0]]))


@pytest.mark.parametrize("n", [2, 3])
def test_jacobian_matches_finite_differences(n):
    rng = np.random.default_rng(20 + n)
    V = random_ball(rng, n)
    x = ring_points(V, rng, 1000)
    # keep away from the kink of d_eps at |y'| = eps and from the ring edges
    y = V.frame.to_canonical(x)
    rho, rm = V.radial_boundary(x)
    kink = np.abs(np.linalg.norm(y[:, :-1] / (rho / rm)[:, None], axis=1) - V.eps)
    x = x[(kink > 1e-3) & (rho > 0.05 * rm) & (rho < 1.95 * rm)]
    J = V.DT(x)
    hstep = 1e-6
    fd = np.empty_like(J)
    for j in range(n):
        e = np.zeros(n)
        e[j] = hstep
        fd[..., :, j] = (V.T(x + e) - V.T(x - e)) / (2 * hstep)
    rel = np.linalg.norm(J - fd, axis=(1, 2)) / np.linalg.norm(J, axis=(1, 2))
    assert len(x) > 900
    assert rel.max() <= 1e-6


def test_jacobian_is_reflection_on_flat_part_of_sphere():
    V = DeformedBall(2.0, 0.05, Frame.canonical(2))
    # away from the cap dV is the round sphere and T is the inversion-reflection there
    th = np.linspace(0.3, 2.8, 20)
    on = V.center + V.R * np.stack([np.cos(th), -np.sin(th)], axis=1)
    np.testing.assert_allclose(V.DT(on), V.reflection(on), atol=1e-12)


def test_distortion_bound():
    rng = np.random.default_rng(5)
    n, tested = 2, 0
    while tested < 200:
        V = random_ball(rng)
        e = V.eps
        x, y = ring_points(V, rng, 2, rmax=8 * e)
        lhs = abs(np.linalg.norm(V.T(x) - V.T(y)) / np.linalg.norm(x - y) - 1.0)
        cx, cy = V.frame.to_canonical(x), V.frame.to_canonical(y)
        rx, ry = V.distance_to_boundary(x), V.distance_to_boundary(y)
        bound = 2 / V.R * max(3 * n * rx + abs(cx[0]), 3 * n * ry + abs(cy[0]))
        assert lhs <= bound
        tested += 1


def test_distance_to_boundary_on_round_part():
    V = DeformedBall(1.5, 0.04, Frame.canonical(2))
    # below the cap dV is the circle |y - c| = R
    p = V.center + np.array([1.2, 0.0])
    assert V.distance_to_boundary(p) == pytest.approx(0.3, abs=1e-9)


# perturbation sets ------------------------------------------------------------------


def tangent_ball_set(rng, R, eps, cells=None):
    """The interior tangent ball itself as E, on a grid resolving the eps^2/R bulge."""
    half = 8.5 * eps
    cells = cells or int(3 * 2 * half * R / eps ** 2) + 1
    ang = rng.uniform(0, 2 * math.pi)
    nu = np.array([math.cos(ang), math.sin(ang)])
    x0 = rng.uniform(-0.5, 0.5, 2)
    d = GridDomain(2, (cells, cells), 2 * half / cells, tuple(x0 - half))
    mask = np.linalg.norm(d.centers() - (x0 + 2 * R * nu), axis=-1) <= 2 * R
    return CellSet(d, mask, Full()), x0, nu


def test_crescent_for_tangent_ball():
    R, eps = 1.0, 0.06
    d = GridDomain.centered(2, 400, 0.15)
    c = np.array([0.0, -2 * R])
    E = CellSet(d, np.linalg.norm(d.centers() - c, axis=-1) <= 2 * R, Full())
    sets = build_perturbation(E, (0.0, 0.0), (0.0, -1.0), R, eps)
    X = d.centers()[sets.A_minus]
    assert len(X) > 0
    # thin crescent: within eps of the axis, at most eps^2/R above the tangent plane
    assert np.all(np.abs(X[:, 0]) < eps)
    assert np.all(X[:, 1] <= eps ** 2 / R + 1e-12)
    assert np.all(np.linalg.norm(X, axis=1) <= 2 * eps)
    # the reflected half lies inside the ball's complement, symmetric across dV
    assert sets.A_plus.sum() == pytest.approx(sets.A_minus.sum(), rel=0.1)
    assert not np.any(sets.A & E.mask & ~sets.A_minus)


def test_crescent_volume_lower_bound():
    R = 1.0
    d = GridDomain.centered(2, 800, 0.2)
    E = CellSet(d, np.linalg.norm(d.centers() - (0.0, -2 * R), axis=-1) <= 2 * R, Full())
    for eps in (0.04, 0.06, 0.08):
        sets = build_perturbation(E, (0.0, 0.0), (0.0, -1.0), R, eps)
        vol = sets.A.sum() * d.cell_volume
        r = eps ** 2 / (2 * R)
        # half-disk of radius eps^2/2R minus the ball, up to one cell layer
        assert vol >= 0.5 * math.pi * r * r * 0.5


def test_inclusions_hold_for_random_pairs():
    rng = np.random.default_rng(6)
    for _ in range(20):
        R = rng.uniform(1.0, 2.0)
        eps = rng.uniform(0.05, 0.08)
        E, x0, nu = tangent_ball_set(rng, R, eps)
        sets = build_perturbation(E, x0, nu, R, eps)
        assert sets.A_minus.any()
        assert all(check_inclusions(sets, E).values())
        assert sets.dropped == 0


def test_set_algebra():
    rng = np.random.default_rng(7)
    E, x0, nu = tangent_ball_set(rng, 1.3, 0.07)
    sets = build_perturbation(E, x0, nu, 1.3, 0.07)
    assert np.array_equal(sets.A, sets.A_minus | sets.A_plus)
    assert np.array_equal(sets.A, sets.S | sets.D)
    assert not np.any(sets.S & sets.D)
    assert np.all(sets.A_minus[sets.D])
    assert not np.any(E.mask & sets.A_plus)
    assert sets.snap_error <= E.domain.h * math.sqrt(2) / 2 + 1e-12
    rec = sets.to_dict(E)
    assert set(rec["roles"]) == {"A_minus", "A_plus", "A", "S", "D"}
    assert rec["R"] == 1.3


def test_symmetric_part_is_closed_under_T():
    rng = np.random.default_rng(8)
    E, x0, nu = tangent_ball_set(rng, 1.0, 0.08, cells=200)
    sets = build_perturbation(E, x0, nu, 1.0, 0.08)
    d = E.domain
    img = sets.ball.T(d.centers()[sets.S])
    # every image lands within one cell of another S cell
    S_pts = d.centers()[sets.S]
    dist = np.min(np.linalg.norm(img[:, None, :] - S_pts[None, :, :], axis=-1), axis=1)
    assert dist.max() <= d.h * math.sqrt(2)


def test_missing_tangent_ball_is_rejected():
    d = GridDomain.centered(2, 64, 1.0)
    X = d.centers()
    E = CellSet(d, X[..., 1] < 0, HalfSpace((0.0, 1.0), 0.0))
    # a hole of the complement inside the would-be tangent ball
    E = E.with_mask(E.mask & ~(np.linalg.norm(X - (0.1, -0.5), axis=-1) < 0.1))
    with pytest.raises(ValueError, match="tangent ball"):
        build_perturbation(E, (0.0, 0.0), (0.0, -1.0), 1.0, 0.05)


def test_empty_set_warns():
    d = GridDomain.centered(2, 32, 1.0)
    E = CellSet(d, d.centers()[..., 1] < 0, HalfSpace((0.0, 1.0), 0.0))
    with pytest.warns(UserWarning, match="empty perturbation set"):
        sets = build_perturbation(E, (0.0, 0.0), (0.0, -1.0), 1.0, 0.02)
    assert not sets.A.any()


# Euler-Lagrange residuals --------------------------------------------------------------


@pytest.fixture(scope="module")
def K256():
    return kernel(2, (256, 256), 1.0, 0.5)


def test_halfplane_residual_is_nonpositive(K256):
    d = K256.domain
    E = CellSet(d, d.centers()[..., 1] < 0, HalfSpace((0.0, 1.0), 0.0))
    x0 = interface_point(E, (0.0, 0.0))
    sets = build_perturbation(E, x0, (0.0, -1.0), 1.0, 0.08)
    res = euler_lagrange_residual(E, sets, 0.7, Modulus.zero(0.5), K256)
    assert res.rhs_shape > 0
    assert res.ratio <= 0.1
    assert res.to_dict()["eps"] == 0.08


def test_dent_witness_has_large_ratio(K256):
    d = K256.domain
    X = d.centers()
    # E is everything except a slot above the tangency point
    E = CellSet(d, ~((np.abs(X[..., 0]) < 0.15) & (X[..., 1] > 0)), Full())
    x0 = interface_point(E, (0.0, 0.0))
    rho = Modulus.zero(0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        best = scan_epsilon(E, x0, (0.0, -1.0), 1.0, 0.042, 0.7, rho, K256)
    assert 0.042 < best.eps < 0.084
    assert best.ratio > 5.0


def test_residual_geometry_errors(K256):
    d = K256.domain
    E = CellSet(d, d.centers()[..., 1] < 0, HalfSpace((0.0, 1.0), 0.0))
    x0 = interface_point(E, (0.0, 0.0))
    sets = build_perturbation(E, x0, (0.0, -1.0), 1.0, 0.08)
    with pytest.raises(ValueError, match="8 eps"):
        euler_lagrange_residual(E, sets, 0.5, Modulus.zero(0.5), K256)
    with pytest.raises(ValueError, match="within the box"):
        euler_lagrange_residual(E, sets, 1.2, Modulus.zero(0.5), K256)


@given(st.floats(0.0, 2 * math.pi), st.floats(1.0, 4.0), st.floats(0.01, 0.08))
def test_involution_property(angle, R, eps):
    F = Frame.from_normal((0.3, -0.2), (math.cos(angle), math.sin(angle)))
    V = DeformedBall(R, eps, F)
    rng = np.random.default_rng(0)
    x = ring_points(V, rng, 200)
    np.testing.assert_allclose(V.T(V.T(x)), x, atol=1e-12 * max(1.0, R))
    # the ring is preserved: images stay inside the involution domain
    assert np.all(V.in_ring(V.T(x)))
