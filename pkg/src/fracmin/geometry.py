"""Geometric diagnostics: flatness, density ratios, non-local mean curvature, blow-ups."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .grid import CellSet, rescale
from .kernel import KernelTable
from .modulus import Modulus, rho_hat
from .reporting import write_csv

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _ball_in_box(E: CellSet, x0, r) -> np.ndarray:
    x0 = np.asarray(x0, float)
    if not E.domain.contains_box(x0 - r, x0 + r):
        raise ValueError("ball B_r(x0) must lie within the box")
    return x0


# ---------------------------------------------------------------------------
# flatness


@dataclass(frozen=True)
class FlatnessReport:
    direction: tuple[float, ...]  # unit vector, oriented from E toward its complement
    width: float  # slab half-width divided by r
    center: tuple[float, ...]
    r: float

    def to_dict(self) -> dict:
        return asdict(self)


def _interface_points(E: CellSet, x0, r):
    mids, normals = E.boundary_faces()
    rel = mids - x0
    sel = np.einsum("ij,ij->i", rel, rel) <= r * r
    return rel[sel], normals[sel]


def _slab(rel, e) -> float:
    return float(np.max(np.abs(rel @ e)))


def _fibonacci_hemisphere(m: int) -> np.ndarray:
    k = np.arange(m) + 0.5
    z = k / m
    phi = math.pi * (1 + 5 ** 0.5) * k
    rho = np.sqrt(1 - z * z)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def _golden_min(f, a, b, iters=60):
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _best_direction_2d(rel) -> np.ndarray:
    # The optimal centered slab supports the symmetric hull conv(+-p) along one of its edges.
    pts = np.concatenate([rel, -rel])
    cand = []
    try:
        hull = ConvexHull(pts)
        cand.append(hull.equations[:, :2])
    except (QhullError, ValueError):
        pass
    # degenerate (collinear) input: the normal of the principal line
    _, _, vt = np.linalg.svd(pts, full_matrices=True)
    cand.append(vt[-1:])
    ang = np.linspace(0.0, math.pi, 2048, endpoint=False)
    cand.append(np.stack([np.cos(ang), np.sin(ang)], axis=-1))
    cand = np.concatenate(cand)
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    widths = np.max(np.abs(pts @ cand.T), axis=0)
    return cand[int(np.argmin(widths))]


def _best_direction_3d(rel) -> np.ndarray:
    pts = np.concatenate([rel, -rel])
    cand = [_fibonacci_hemisphere(2048)]
    try:
        cand.append(ConvexHull(pts).equations[:, :3])
    except (QhullError, ValueError):
        pass
    _, _, vt = np.linalg.svd(pts, full_matrices=True)
    cand.append(vt[-1:])
    cand = np.concatenate(cand)
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    widths = np.max(np.abs(pts @ cand.T), axis=0)
    e = cand[int(np.argmin(widths))]
    # golden-section refinement along the two tangent great circles, alternating
    for _ in range(4):
        t1 = np.linalg.svd(e[None, :])[2][1]
        t2 = np.cross(e, t1)
        for t in (t1, t2):
            f = lambda a: _slab(pts, math.cos(a) * e + math.sin(a) * t)
            a, _ = _golden_min(f, -0.05, 0.05)
            e_new = math.cos(a) * e + math.sin(a) * t
            if _slab(pts, e_new) < _slab(pts, e):
                e = e_new / np.linalg.norm(e_new)
    return e


def flatness(E: CellSet, x0, r: float) -> FlatnessReport:
    """Thinnest slab ``{|(x - x0).e| <= w r}`` holding the interface faces in B_r(x0)."""
    x0 = _ball_in_box(E, x0, r)
    rel, normals = _interface_points(E, x0, r)
    if len(rel) == 0:
        raise ValueError("no interface in B_r(x0)")
    e = _best_direction_2d(rel) if E.domain.n == 2 else _best_direction_3d(rel)
    if normals.sum(axis=0) @ e < 0:
        e = -e
    return FlatnessReport(tuple(float(v) for v in e), _slab(rel, e) / r, tuple(float(v) for v in x0), float(r))


@dataclass(frozen=True)
class FlatOrderSequence:
    k: int
    r0: float
    directions: tuple[tuple[float, ...], ...]
    widths: tuple[float, ...]  # a_l, dimensionless
    bounds: tuple[float, ...]  # gamma(2^(l-k))
    holds: bool
    witness: int | None  # first scale l where a_l > gamma(2^(l-k))

    def to_dict(self) -> dict:
        return asdict(self)


def flat_order_sequence(E: CellSet, x0, k: int, gamma, r0: float | None = None) -> FlatOrderSequence:
    """Flatness at the dyadic scales ``2^l r0``, ``l = 0..k``, against ``gamma(2^(l-k))``.

    ``gamma`` is a Modulus (its rho_hat is used) or any callable on (0, 1].
    ``r0`` defaults to 4 cells.
    """
    d = E.domain
    x0 = np.asarray(x0, float)
    r0 = 4.0 * d.h if r0 is None else float(r0)
    room = float(min(np.min(x0 - d.lower), np.min(d.upper - x0)))
    kmax = int(math.floor(math.log2(room / r0))) if room >= r0 else -1
    if k > kmax:
        raise ValueError(f"box too small for k={k} at r0={r0}; max feasible k is {kmax}")
    if isinstance(gamma, Modulus):
        # rho_hat is continuous, so its value at t = delta is the limit from inside the domain
        top = gamma.delta * (1.0 - 1e-12)
        g = lambda t: rho_hat(gamma, min(t, top))
    else:
        g = gamma
    dirs, widths, bounds = [], [], []
    witness = None
    for l in range(k + 1):
        rep = flatness(E, x0, r0 * 2 ** l)
        b = float(g(2.0 ** (l - k)))
        dirs.append(rep.direction)
        widths.append(rep.width)
        bounds.append(b)
        if witness is None and rep.width > b:
            witness = l
    return FlatOrderSequence(k, r0, tuple(dirs), tuple(widths), tuple(bounds), witness is None, witness)


# ---------------------------------------------------------------------------
# density


def density_ratio(E: CellSet, x0, r: float) -> float:
    """|E cap B_r(x0)| / |B_r(x0)|, both counted over cell centers."""
    d = E.domain
    if r < 2 * d.h:
        raise ValueError("under-resolved: r must be at least 2h")
    x0 = _ball_in_box(E, x0, r)
    ball = np.linalg.norm(d.centers() - x0, axis=-1) < r
    return int(np.count_nonzero(E.mask & ball)) / int(np.count_nonzero(ball))


# ---------------------------------------------------------------------------
# non-local mean curvature


@dataclass(frozen=True)
class CurvatureReport:
    value: float  # truncated value at the smallest cutoff
    extrapolated: float  # H0 of the fit H(delta) = H0 + c delta^(1-s)
    cutoffs: tuple[float, ...]
    values: tuple[float, ...]

    def to_dict(self) -> dict:
        return asdict(self)


def _check_boundary_point(E: CellSet, x0):
    mids, _ = E.boundary_faces()
    if len(mids) == 0 or np.min(np.max(np.abs(mids - x0), axis=1)) > 1e-9 * E.domain.h:
        raise ValueError("x0 is not a boundary face midpoint of E")


def nonlocal_mean_curvature(E: CellSet, x0, K: KernelTable, delta_cut: float | None = None) -> CurvatureReport:
    """H(x0) = -(1-s) PV integral of (chi_E - chi_E^c)(x) |x - x0|^-(n+s).

    The principal value drops the cells whose centers lie within ``delta`` of
    x0, a set symmetric under reflection through the face midpoint x0.
    Cutoffs are ``delta_cut * (1, 2, 4)``; ``delta_cut`` defaults to 2h.
    """
    d = E.domain
    if E.domain != K.domain:
        raise ValueError("kernel table does not match the set's domain")
    x0 = np.asarray(x0, float)
    _check_boundary_point(E, x0)
    dc = 2 * d.h if delta_cut is None else float(delta_cut)
    if dc < 2 * d.h * (1 - 1e-12):
        raise ValueError("delta_cut must be at least 2h")
    cuts = (dc, 2 * dc, 4 * dc)
    if not d.contains_box(x0 - cuts[-1], x0 + cuts[-1]):
        raise ValueError("cutoff ball must lie within the box")
    dist = np.linalg.norm(d.centers() - x0, axis=-1)
    tol = 1e-9 * d.h
    far = dist >= cuts[0] - tol
    I = K.point_cell_integrals(x0, far)
    sign = np.where(E.mask, 1.0, -1.0)
    tail = K.point_tail(x0, E.exterior) - K.point_tail(x0, E.exterior.complement())
    vals = []
    for c in cuts:
        sel = dist >= c - tol
        vals.append(-(1.0 - K.s) * (float(np.sum(sign[sel] * I[sel])) + tail))
    A = np.stack([np.ones(3), np.asarray(cuts) ** (1.0 - K.s)], axis=1)
    coef = np.linalg.lstsq(A, np.asarray(vals), rcond=None)[0]
    return CurvatureReport(vals[0], float(coef[0]), cuts, tuple(vals))


def interior_tangent_ball(E: CellSet, x0, normal, R: float) -> bool:
    """Discrete test: the ball of radius R touching x0 from the E side has all its cells in E.

    ``normal`` points from E to the complement.
    """
    nrm = np.asarray(normal, float)
    c = np.asarray(x0, float) - R * nrm / np.linalg.norm(nrm)
    return _ball_cells_in(E.mask, E, c, R)


def exterior_tangent_ball(E: CellSet, x0, normal, R: float) -> bool:
    nrm = np.asarray(normal, float)
    c = np.asarray(x0, float) + R * nrm / np.linalg.norm(nrm)
    return _ball_cells_in(~E.mask, E, c, R)


def _ball_cells_in(mask, E, c, R) -> bool:
    d = E.domain
    if not d.contains_box(c - R, c + R):
        return False
    ball = np.linalg.norm(d.centers() - c, axis=-1) < R
    return bool(ball.any() and np.all(mask[ball]))


# ---------------------------------------------------------------------------
# blow-up and Harnack inclusions


def blow_up(E: CellSet, x0, r: float) -> CellSet:
    """E_r = (E - x0) / r on the correspondingly moved and dilated grid."""
    return rescale(E.translate(-np.asarray(x0, float)), 1.0 / r)


@dataclass(frozen=True)
class HarnackReport:
    holds: bool  # both inclusions at the requested delta0
    largest_delta0: float  # largest ladder value for which both hold (0 if none)
    upper_ok: bool
    lower_ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


DELTA_LADDER = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))


def _inclusions(E: CellSet, x0, e0, a, delta0, r):
    d = E.domain
    rel = (d.centers() - x0) / r
    ball = np.linalg.norm(rel, axis=-1) < delta0
    t = rel @ e0
    lim = a * (1.0 - delta0 ** 2)
    upper = not np.any(E.mask & ball & (t >= lim))
    lower = bool(np.all(E.mask[ball & (t < -lim)]))
    return upper, lower


def harnack_inclusion_check(E: CellSet, x0, a: float, delta0: float, e0=None, r: float = 1.0,
                            ladder=DELTA_LADDER) -> HarnackReport:
    """Both inclusions E cap B_d0 in {x.e0 < a(1-d0^2)} and B_d0 cap {x.e0 < -a(1-d0^2)} in E.

    Lengths are measured in units of ``r`` around x0. ``e0`` defaults to the
    flatness direction at (x0, r).
    """
    x0 = _ball_in_box(E, x0, r)
    if e0 is None:
        e0 = np.asarray(flatness(E, x0, r).direction)
    e0 = np.asarray(e0, float) / np.linalg.norm(e0)
    up, lo = _inclusions(E, x0, e0, a, delta0, r)
    best = 0.0
    for dl in ladder:
        if all(_inclusions(E, x0, e0, a, dl, r)):
            best = float(dl)
    return HarnackReport(up and lo, best, up, lo)


# ---------------------------------------------------------------------------
# profiles

CURVATURE_COLUMNS = ("r", "H")
FLATNESS_COLUMNS = ("scale", "width")
DENSITY_COLUMNS = ("r", "density")


def curvature_csv(path, radii, values):
    return write_csv(path, CURVATURE_COLUMNS, zip(map(float, radii), map(float, values)))


def flatness_csv(path, seq: FlatOrderSequence):
    scales = [seq.r0 * 2 ** l for l in range(seq.k + 1)]
    return write_csv(path, FLATNESS_COLUMNS, zip(scales, seq.widths))


def density_csv(path, radii, ratios):
    return write_csv(path, DENSITY_COLUMNS, zip(map(float, radii), map(float, ratios)))
