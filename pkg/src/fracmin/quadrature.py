"""Quadrature rules used by the kernel and tail integrators."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss01(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def tensor_gauss01(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss01(q)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    wg = np.meshgrid(*([w] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    return pts, np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)


@lru_cache(maxsize=None)
def mixed_rule(q: int, s: float) -> tuple[np.ndarray, np.ndarray]:
    """2q-point rule on [0, 1] exact for x^k and x^(k-s), k < q."""
    xg, _ = gauss01(q)
    xj, _ = roots_jacobi(q, 0.0, -s)
    xj = 0.5 * (xj + 1.0)
    x = np.sort(np.concatenate([xg, xj]))
    ks = np.arange(q)
    V = np.vstack([x[None, :] ** ks[:, None], x[None, :] ** (ks[:, None] - s)])
    mom = np.concatenate([1.0 / (ks + 1.0), 1.0 / (ks + 1.0 - s)])
    w = np.linalg.solve(V, mom)
    return x, w


@lru_cache(maxsize=None)
def graded_rule(s: float, levels: int = 12, q: int = 8, qm: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Rule on [0, 1] for integrands behaving like a x^-s + smooth near x = 0.

    Geometric mesh toward 0 with Gauss-Legendre pieces and the mixed rule on
    the innermost piece.
    """
    xg, wg = gauss01(q)
    xs, ws = [], []
    eps = 2.0 ** -levels
    xm, wm = mixed_rule(qm, s)
    xs.append(eps * xm)
    ws.append(eps * wm)
    for k in range(levels, 0, -1):
        a, b = 2.0 ** -k, 2.0 ** (-k + 1)
        xs.append(a + (b - a) * xg)
        ws.append((b - a) * wg)
    return np.concatenate(xs), np.concatenate(ws)


def graded_toward(points, s: float, levels: int = 12, q: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Rule on [0, 1] graded toward every point of ``points`` (each in [0, 1])."""
    P = sorted({float(p) for p in points})
    knots = sorted(set([0.0, 1.0] + P))
    x, w = graded_rule(s, levels)
    xg, wg = gauss01(q)
    xs, ws = [], []
    for a, b in zip(knots[:-1], knots[1:]):
        ga, gb = a in P, b in P
        if ga and gb:
            m = 0.5 * (a + b)
            xs += [a + (m - a) * x, b - (b - m) * x]
            ws += [(m - a) * w, (b - m) * w]
        elif ga:
            xs.append(a + (b - a) * x)
            ws.append((b - a) * w)
        elif gb:
            xs.append(b - (b - a) * x)
            ws.append((b - a) * w)
        else:
            xs.append(a + (b - a) * xg)
            ws.append((b - a) * wg)
    return np.concatenate(xs), np.concatenate(ws)


def axis_rule(i: int, D: int, s: float, q_inner: int, levels: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """1-D rule on cell ``i`` of ``D`` (cell-local [0, 1]); graded toward box walls.

    Cells where two graded directions meet (box corners) need deeper grading.
    """
    if D == 1:
        x, w = graded_rule(s, levels)
        return np.concatenate([0.5 * x, 1.0 - 0.5 * x[::-1]]), np.concatenate([0.5 * w, 0.5 * w[::-1]])
    if i == 0:
        return graded_rule(s, levels)
    if i == D - 1:
        x, w = graded_rule(s, levels)
        return 1.0 - x[::-1], w[::-1]
    return gauss01(q_inner)


# Gauss-Kronrod 7-15 on [-1, 1]
GK_X = np.array([
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
GK_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
GK_WG = np.array([
    0.0, 0.129484966168869693270611432679082, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.417959183673469387755102040816327,
    0.0, 0.381830050505118944950369775488975, 0.0, 0.279705391489276667901467771423780,
    0.0, 0.129484966168869693270611432679082, 0.0,
])
