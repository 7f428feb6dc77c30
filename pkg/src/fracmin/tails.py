"""Integrals of |x - y|^-(n+s) over the part of an exterior set outside the box.

Everything here works in cell units: the box is ``[0, D_1] x ... x [0, D_n]``.
For a point p inside the box,

    g(p) = integral over (Ext minus box) of |p - y|^-(n+s) dy
         = integral over the box boundary of  n_q.(q - p) / |q - p|^n * R(p, q) dA(q)

where R is the closed-form radial integral of t^(-1-s) over the parameter
intervals of the ray from p through q that lie in Ext beyond the exit point q.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .grid import Ball, Cone, Empty, Exterior, Full, HalfSpace
from .quadrature import GK_WG, GK_WK, GK_X, axis_rule, graded_toward

EMPTY, FULL, HALF, BALL_IN, BALL_OUT, CONE, CONE_C = range(7)


def encode(ext: Exterior, n: int):
    """Numeric code for the numba kernels: (kind, params, parallel normals, focus points)."""
    none = np.zeros((0, n))
    if isinstance(ext, Empty):
        return EMPTY, np.zeros(1), none, none
    if isinstance(ext, Full):
        return FULL, np.zeros(1), none, none
    if isinstance(ext, HalfSpace):
        e = np.asarray(ext.e)
        return HALF, np.concatenate([e, [ext.c]]), e[None, :].copy(), none
    if isinstance(ext, Ball):
        kind = BALL_IN if ext.inside else BALL_OUT
        return kind, np.concatenate([ext.center, [ext.radius]]), none, none
    if isinstance(ext, Cone):
        cone, kind = (ext, CONE) if ext.aperture <= math.pi / 2 else (ext.complement(), CONE_C)
        a = np.asarray(cone.axis)
        prm = np.concatenate([cone.vertex, a, [math.cos(cone.aperture)]])
        normals = none
        if n == 2:
            ang = math.atan2(a[1], a[0])
            normals = np.array([[-math.sin(ang + sg * cone.aperture), math.cos(ang + sg * cone.aperture)] for sg in (1, -1)])
        return kind, prm, normals, np.asarray(cone.vertex, float)[None, :].copy()
    raise ValueError(f"exterior {ext!r} is not radially quadrable")


@njit(cache=True)
def _dot(a, b):
    acc = 0.0
    for k in range(a.shape[0]):
        acc += a[k] * b[k]
    return acc


@njit(cache=True)
def _seg(a, b, s):
    # integral of t^(-1-s) over (a, b)
    if b == np.inf:
        return a ** (-s) / s
    return (a ** (-s) - b ** (-s)) / s


@njit(cache=True)
def _cone_part(prm, p, u, t0, s):
    n = p.shape[0]
    w = np.empty(n)
    for k in range(n):
        w[k] = p[k] - prm[k]
    ax = prm[n:2 * n]
    ca = prm[2 * n]
    c2 = ca * ca
    wa = _dot(w, ax)
    ua = _dot(u, ax)
    A = ua * ua - c2
    B = 2.0 * (wa * ua - c2 * _dot(w, u))
    C = wa * wa - c2 * _dot(w, w)
    cuts = np.empty(4)
    cuts[0] = t0
    nc = 1
    if abs(A) > 1e-14:
        disc = B * B - 4.0 * A * C
        if disc > 0:
            sq = math.sqrt(disc)
            r1 = (-B - sq) / (2.0 * A)
            r2 = (-B + sq) / (2.0 * A)
            if r1 > r2:
                r1, r2 = r2, r1
            if r1 > t0:
                cuts[nc] = r1
                nc += 1
            if r2 > t0:
                cuts[nc] = r2
                nc += 1
    elif abs(B) > 0:
        r = -C / B
        if r > t0:
            cuts[nc] = r
            nc += 1
    cuts[nc] = np.inf
    total = 0.0
    x = np.empty(n)
    for k in range(nc):
        lo, hi = cuts[k], cuts[k + 1]
        mid = lo + 1.0 + abs(lo) if hi == np.inf else 0.5 * (lo + hi)
        for d in range(n):
            x[d] = w[d] + mid * u[d]
        nx = math.sqrt(_dot(x, x))
        if _dot(x, ax) >= nx * ca:
            total += _seg(lo, hi, s)
    return total


@njit(cache=True)
def ray_R(kind, prm, p, u, t0, s):
    """Integral of t^(-1-s) over {t >= t0 : p + t u in Ext}."""
    if kind == EMPTY:
        return 0.0
    full = t0 ** (-s) / s
    if kind == FULL:
        return full
    n = p.shape[0]
    if kind == HALF:
        e = prm[:n]
        c = prm[n]
        pe = _dot(p, e)
        ue = _dot(u, e)
        if ue == 0.0:
            return full if pe < c else 0.0
        tc = (c - pe) / ue
        if ue > 0:
            return _seg(t0, tc, s) if tc > t0 else 0.0
        return _seg(max(t0, tc), np.inf, s)
    if kind == BALL_IN or kind == BALL_OUT:
        r = prm[n]
        b = 0.0
        ww = 0.0
        for k in range(n):
            wk = p[k] - prm[k]
            b += wk * u[k]
            ww += wk * wk
        disc = b * b - (ww - r * r)
        val = 0.0
        if disc > 0:
            sq = math.sqrt(disc)
            t1 = -b - sq
            t2 = -b + sq
            if t2 > t0:
                val = _seg(max(t1, t0), t2, s)
        return val if kind == BALL_IN else full - val
    val = _cone_part(prm, p, u, t0, s)
    return val if kind == CONE else full - val


# ---------------------------------------------------------------------------
# n = 2: adaptive Gauss-Kronrod along the four box edges


@njit(cache=True)
def _edge_point(e, tau, W, H, q):
    if e == 0:
        q[0] = tau
        q[1] = 0.0
    elif e == 1:
        q[0] = W
        q[1] = tau
    elif e == 2:
        q[0] = tau
        q[1] = H
    else:
        q[0] = 0.0
        q[1] = tau


@njit(cache=True)
def _edge_f(e, tau, p, W, H, kind, prm, s, q, u):
    _edge_point(e, tau, W, H, q)
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    r = math.sqrt(dx * dx + dy * dy)
    if e == 0:
        nd = -dy
    elif e == 1:
        nd = dx
    elif e == 2:
        nd = dy
    else:
        nd = -dx
    u[0] = dx / r
    u[1] = dy / r
    return nd / (r * r) * ray_R(kind, prm, p, u, r, s)


@njit(cache=True)
def _gk(e, a, b, p, W, H, kind, prm, s, q, u, gx, wk, wg):
    c = 0.5 * (a + b)
    hw = 0.5 * (b - a)
    ik = 0.0
    ig = 0.0
    for k in range(15):
        f = _edge_f(e, c + hw * gx[k], p, W, H, kind, prm, s, q, u)
        ik += wk[k] * f
        ig += wg[k] * f
    return ik * hw, abs(ik - ig) * hw


@njit(cache=True)
def point_tail_2d(p, W, H, kind, prm, normals, foci, fixed_bp, s, rtol, gx, wk, wg):
    """g(p) for a point strictly inside [0, W] x [0, H]."""
    if kind == EMPTY:
        return 0.0
    q = np.empty(2)
    u = np.empty(2)
    segs_a = np.empty(4096)
    segs_b = np.empty(4096)
    segs_e = np.empty(4096, np.int64)
    ns = 0
    total_len = 2.0 * (W + H)
    bp = np.empty(64)
    for e in range(4):
        L = W if e % 2 == 0 else H
        nb = 0
        bp[nb] = 0.0
        nb += 1
        bp[nb] = L
        nb += 1
        # foot of the perpendicular and a few multiples of the wall distance
        if e % 2 == 0:
            foot = p[0]
            dist = p[1] if e == 0 else H - p[1]
        else:
            foot = p[1]
            dist = W - p[0] if e == 1 else p[0]
        for m in (0.0, -1.0, 1.0, -4.0, 4.0):
            t = foot + m * dist
            if 0.0 < t < L:
                bp[nb] = t
                nb += 1
        for k in range(fixed_bp.shape[0]):
            if fixed_bp[k, 0] == e and 0.0 < fixed_bp[k, 1] < L:
                bp[nb] = fixed_bp[k, 1]
                nb += 1
        # directions parallel to planar pieces of dExt
        for k in range(normals.shape[0]):
            _edge_point(e, 0.0, W, H, q)
            d0 = (q[0] - p[0]) * normals[k, 0] + (q[1] - p[1]) * normals[k, 1]
            slope = normals[k, 0] if e % 2 == 0 else normals[k, 1]
            if slope != 0.0:
                t = -d0 / slope
                if 0.0 < t < L:
                    bp[nb] = t
                    nb += 1
        # direction through focus points (cone vertex)
        for k in range(foci.shape[0]):
            fx = foci[k, 0] - p[0]
            fy = foci[k, 1] - p[1]
            _edge_point(e, 0.0, W, H, q)
            # cross(q(t) - p, f - p) = 0, linear in t
            c0 = (q[0] - p[0]) * fy - (q[1] - p[1]) * fx
            c1 = fy if e % 2 == 0 else -fx
            if c1 != 0.0:
                t = -c0 / c1
                if 0.0 < t < L:
                    bp[nb] = t
                    nb += 1
        srt = np.sort(bp[:nb])
        for k in range(nb - 1):
            if srt[k + 1] - srt[k] > 1e-14 * L:
                segs_a[ns] = srt[k]
                segs_b[ns] = srt[k + 1]
                segs_e[ns] = e
                ns += 1
    # global adaptive bisection: split the worst segment until the error budget is met
    cap = 4000
    va = np.empty(cap)
    ve = np.empty(cap)
    A = np.empty(cap)
    B = np.empty(cap)
    Ed = np.empty(cap, np.int64)
    for k in range(ns):
        A[k] = segs_a[k]
        B[k] = segs_b[k]
        Ed[k] = segs_e[k]
        va[k], ve[k] = _gk(Ed[k], A[k], B[k], p, W, H, kind, prm, s, q, u, gx, wk, wg)
    m = ns
    while m < cap - 1:
        tot = 0.0
        err = 0.0
        worst = 0
        for k in range(m):
            tot += va[k]
            err += ve[k]
            if ve[k] > ve[worst]:
                worst = k
        if err <= rtol * abs(tot) + 1e-300:
            break
        a = A[worst]
        b = B[worst]
        if b - a < 1e-13 * total_len:
            break
        mid = 0.5 * (a + b)
        B[worst] = mid
        va[worst], ve[worst] = _gk(Ed[worst], a, mid, p, W, H, kind, prm, s, q, u, gx, wk, wg)
        A[m] = mid
        B[m] = b
        Ed[m] = Ed[worst]
        va[m], ve[m] = _gk(Ed[m], mid, b, p, W, H, kind, prm, s, q, u, gx, wk, wg)
        m += 1
    total = 0.0
    for k in range(m):
        total += va[k]
    return total


@njit(cache=True)
def _many_points_2d(pts, W, H, kind, prm, normals, foci, fixed_bp, s, rtol, gx, wk, wg):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = point_tail_2d(pts[i], W, H, kind, prm, normals, foci, fixed_bp, s, rtol, gx, wk, wg)
    return out


def _fixed_breakpoints_2d(ext: Exterior, W: float, H: float) -> np.ndarray:
    """Edge parameters where dExt crosses the box boundary."""
    out = []
    edges = [((0, 0), (1, 0), W), ((W, 0), (0, 1), H), ((0, H), (1, 0), W), ((0, 0), (0, 1), H)]
    for e, (o, d, L) in enumerate(edges):
        o, d = np.asarray(o, float), np.asarray(d, float)
        ts = []
        if isinstance(ext, HalfSpace):
            en = np.asarray(ext.e)
            den = d @ en
            if den != 0:
                ts.append((ext.c - o @ en) / den)
        elif isinstance(ext, Ball):
            w = o - np.asarray(ext.center)
            b = w @ d
            disc = b * b - (w @ w - ext.radius ** 2)
            if disc >= 0:
                ts += [-b - math.sqrt(disc), -b + math.sqrt(disc)]
        elif isinstance(ext, Cone):
            v = np.asarray(ext.vertex)
            a = np.asarray(ext.axis)
            ang = math.atan2(a[1], a[0])
            for sg in (1, -1):
                dr = np.array([math.cos(ang + sg * ext.aperture), math.sin(ang + sg * ext.aperture)])
                M = np.column_stack([d, -dr])
                if abs(np.linalg.det(M)) > 1e-14:
                    t, lam = np.linalg.solve(M, v - o)
                    if lam >= 0:
                        ts.append(t)
            # the vertex itself
            if abs(np.cross(d, v - o)) < 1e-12:
                ts.append((v - o) @ d)
        out += [(e, t) for t in ts if 0 < t < L]
    return np.array(out, float).reshape(-1, 2)


def point_tails_2d(ext_unit: Exterior, dims, pts, s: float, rtol: float = 1e-10) -> np.ndarray:
    W, H = float(dims[0]), float(dims[1])
    kind, prm, normals, foci = encode(ext_unit, 2)
    fixed = _fixed_breakpoints_2d(ext_unit, W, H)
    pts = np.ascontiguousarray(pts, float).reshape(-1, 2)
    return _many_points_2d(pts, W, H, kind, prm, normals.astype(float), foci.astype(float), fixed, s, rtol,
                           GK_X, GK_WK, GK_WG)


# ---------------------------------------------------------------------------
# n = 3: adaptive tensor Gauss-Kronrod over the six box faces (single points)


@njit(cache=True)
def _face_point(f, a, b, dims, q):
    ax = f // 2
    side = f % 2
    i1 = (ax + 1) % 3
    i2 = (ax + 2) % 3
    q[ax] = dims[ax] * side
    q[i1] = a
    q[i2] = b


@njit(cache=True)
def _face_gk(f, a0, a1, b0, b1, p, dims, kind, prm, s, gx, wk, wg):
    q = np.empty(3)
    u = np.empty(3)
    ca = 0.5 * (a0 + a1)
    ha = 0.5 * (a1 - a0)
    cb = 0.5 * (b0 + b1)
    hb = 0.5 * (b1 - b0)
    ax = f // 2
    sgn = 1.0 if f % 2 == 1 else -1.0
    ik = 0.0
    ig = 0.0
    for i in range(15):
        for j in range(15):
            _face_point(f, ca + ha * gx[i], cb + hb * gx[j], dims, q)
            r2 = 0.0
            for k in range(3):
                u[k] = q[k] - p[k]
                r2 += u[k] * u[k]
            r = math.sqrt(r2)
            nd = sgn * u[ax]
            for k in range(3):
                u[k] /= r
            val = nd / (r2 * r) * ray_R(kind, prm, p, u, r, s)
            ik += wk[i] * wk[j] * val
            ig += wg[i] * wg[j] * val
    return ik * ha * hb, abs(ik - ig) * ha * hb


@njit(cache=True)
def point_tail_3d(p, dims, kind, prm, s, rtol, gx, wk, wg):
    if kind == EMPTY:
        return 0.0
    cap = 3000
    sf = np.empty(cap, np.int64)
    sa0 = np.empty(cap)
    sa1 = np.empty(cap)
    sb0 = np.empty(cap)
    sb1 = np.empty(cap)
    va = np.empty(cap)
    ve = np.empty(cap)
    m = 0
    for f in range(6):
        ax = f // 2
        i1 = (ax + 1) % 3
        i2 = (ax + 2) % 3
        # split each face at the foot of the perpendicular from p
        ea = np.array([0.0, p[i1], dims[i1]])
        eb = np.array([0.0, p[i2], dims[i2]])
        for i in range(2):
            for j in range(2):
                if ea[i + 1] - ea[i] > 0 and eb[j + 1] - eb[j] > 0:
                    sf[m] = f
                    sa0[m] = ea[i]
                    sa1[m] = ea[i + 1]
                    sb0[m] = eb[j]
                    sb1[m] = eb[j + 1]
                    va[m], ve[m] = _face_gk(f, ea[i], ea[i + 1], eb[j], eb[j + 1], p, dims, kind, prm, s, gx, wk, wg)
                    m += 1
    while m < cap - 4:
        tot = 0.0
        err = 0.0
        worst = 0
        for k in range(m):
            tot += va[k]
            err += ve[k]
            if ve[k] > ve[worst]:
                worst = k
        if err <= rtol * abs(tot) + 1e-300:
            break
        f = sf[worst]
        a0 = sa0[worst]
        a1 = sa1[worst]
        b0 = sb0[worst]
        b1 = sb1[worst]
        am = 0.5 * (a0 + a1)
        bm = 0.5 * (b0 + b1)
        slots = (worst, m, m + 1, m + 2)
        boxes = ((a0, am, b0, bm), (am, a1, b0, bm), (a0, am, bm, b1), (am, a1, bm, b1))
        for k in range(4):
            sl = slots[k]
            x0, x1, y0, y1 = boxes[k]
            sf[sl] = f
            sa0[sl] = x0
            sa1[sl] = x1
            sb0[sl] = y0
            sb1[sl] = y1
            va[sl], ve[sl] = _face_gk(f, x0, x1, y0, y1, p, dims, kind, prm, s, gx, wk, wg)
        m += 3
    total = 0.0
    for k in range(m):
        total += va[k]
    return total


def point_tails(ext_unit: Exterior, dims, pts, s: float, rtol: float = 1e-10) -> np.ndarray:
    """g at points (cell units, no (1-s) factor) for the set ``ext_unit`` minus the box."""
    n = len(dims)
    pts = np.atleast_2d(np.asarray(pts, float))
    if n == 2:
        return point_tails_2d(ext_unit, dims, pts, s, rtol)
    kind, prm, _, _ = encode(ext_unit, 3)
    d = np.asarray(dims, float)
    return np.array([point_tail_3d(p, d, kind, prm, s, rtol, GK_X, GK_WK, GK_WG) for p in pts])


# ---------------------------------------------------------------------------
# cell tails for general exteriors (n = 2)


_CORNER_LEVELS = 16


def cell_rule_2d(dims, s: float, wall_points=()):
    """Quadrature points, weights and owning flat cell index for every cell.

    ``wall_points`` are points of the box boundary where the exterior set
    switches on or off; wall cells touching one are graded toward it along the wall.
    """
    W, H = dims
    pts, wts, owner = [], [], []
    for i in range(W):
        for j in range(H):
            layer = min(i, W - 1 - i, j, H - 1 - j)
            q = 8 if layer <= 3 else 4
            xwall, ywall = i in (0, W - 1), j in (0, H - 1)
            hits = []
            for px, py in wall_points:
                on_x_wall = (i == 0 and px == 0) or (i == W - 1 and px == W)
                on_y_wall = (j == 0 and py == 0) or (j == H - 1 and py == H)
                if on_x_wall and j <= py <= j + 1:
                    hits.append((1, py - j))
                if on_y_wall and i <= px <= i + 1:
                    hits.append((0, px - i))
            lv = _CORNER_LEVELS if (xwall and ywall) or hits else 12
            xr, xw = axis_rule(i, W, s, q, lv)
            yr, yw = axis_rule(j, H, s, q, lv)
            for ax, (k, D) in enumerate(((i, W), (j, H))):
                taus = [tau for a, tau in hits if a == ax]
                if not taus:
                    continue
                ends = ([0.0] if k == 0 else []) + ([1.0] if k == D - 1 else [])
                r = graded_toward(taus + ends, s, lv)
                if ax == 0:
                    xr, xw = r
                else:
                    yr, yw = r
            X, Y = np.meshgrid(i + xr, j + yr, indexing="ij")
            pts.append(np.stack([X.ravel(), Y.ravel()], axis=-1))
            wts.append(np.outer(xw, yw).ravel())
            owner.append(np.full(X.size, i * H + j))
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(owner)


def _wall_points(ext_unit: Exterior, W: float, H: float) -> list[tuple[float, float]]:
    pts = []
    for e, t in _fixed_breakpoints_2d(ext_unit, W, H):
        pts.append([(t, 0.0), (W, t), (t, H), (0.0, t)][int(e)])
    if isinstance(ext_unit, Cone):
        v = ext_unit.vertex
        if (v[0] in (0.0, W) and 0 <= v[1] <= H) or (v[1] in (0.0, H) and 0 <= v[0] <= W):
            pts.append((float(v[0]), float(v[1])))
    return pts


def cell_tails_general(ext_unit: Exterior, dims, s: float, rtol: float = 1e-10) -> np.ndarray:
    """Per-cell (1-s) * integral over the cell of g (cell units), for n = 2."""
    if len(dims) != 2:
        raise ValueError("general exterior tails are only available for n = 2 (not radially quadrable here)")
    pts, wts, owner = cell_rule_2d(tuple(dims), s, _wall_points(ext_unit, *map(float, dims)))
    g = point_tails_2d(ext_unit, dims, pts, s, rtol)
    out = np.bincount(owner, weights=wts * g, minlength=int(np.prod(dims)))
    return (1.0 - s) * out.reshape(dims)

