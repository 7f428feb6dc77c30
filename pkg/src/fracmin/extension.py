"""Weighted half-space extension of u = chi_E - chi_E^c and its monotonicity quantity.

Finite volumes on cells (x_i, z_k): the trace grid times a z-column whose
first levels are uniform (height h) and then grow geometrically. Lateral and
top boundaries are homogeneous Neumann; the trace enters through the bottom
faces with the exact conductance of z^a over [0, z_0].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import Window, localized_energy
from .grid import CellSet, GridDomain
from .kernel import KernelTable
from .modulus import Modulus, rho_integral
from .reporting import write_csv

UNIFORM_LEVELS = 8
STRETCH = 1.15


def z_edges(h: float, M: int, uniform: int = UNIFORM_LEVELS, ratio: float = STRETCH) -> np.ndarray:
    widths = h * ratio ** np.maximum(np.arange(M) - uniform + 1, 0)
    return np.concatenate([[0.0], np.cumsum(widths)])


@dataclass(eq=False)
class ExtensionField:
    base: GridDomain  # trace grid (possibly padded beyond the set's box)
    trace: np.ndarray  # +-1 per trace cell
    z_edges: np.ndarray
    values: np.ndarray  # shape base.dims + (M,)
    a: float
    residual: float

    @property
    def z_levels(self) -> np.ndarray:
        return 0.5 * (self.z_edges[1:] + self.z_edges[:-1])

    @property
    def M(self) -> int:
        return len(self.z_edges) - 1

    def save(self, path) -> None:
        """Flat float64 binary plus a JSON sidecar."""
        path = Path(path)
        self.values.astype("<f8").tofile(path)
        meta = {"dims": list(self.values.shape), "z_levels": self.z_levels.tolist(),
                "z_edges": self.z_edges.tolist(), "a": self.a, "h": self.base.h,
                "origin": list(self.base.origin), "residual": self.residual}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta))


def _conductances(base: GridDomain, ze: np.ndarray, a: float):
    """Face conductances: lateral per axis (shape dims-1 along the axis, M), vertical, trace."""
    h, n = base.h, base.n
    w = np.diff(ze)
    zc = 0.5 * (ze[1:] + ze[:-1])
    area_x = h ** (n - 1)
    lat = (zc ** a) * w * area_x / h  # same for every lateral face at level k
    vert = (ze[1:-1] ** a) * h ** n / (zc[1:] - zc[:-1])
    # exact 1-D conductance of z^a between z = 0 and the first center
    trace = h ** n * (1.0 - a) / zc[0] ** (1.0 - a) if a < 1 else 0.0
    return lat, vert, trace


def _operator(dims, ze, a, h):
    n = len(dims)
    M = len(ze) - 1
    base = GridDomain(n, tuple(dims), h, (0.0,) * n)
    lat, vert, trace = _conductances(base, ze, a)
    shape = tuple(dims) + (M,)
    N = int(np.prod(shape))
    idx = np.arange(N).reshape(shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(shape)
    for ax in range(n):
        lo = np.take(idx, np.arange(dims[ax] - 1), axis=ax)
        hi = np.take(idx, np.arange(1, dims[ax]), axis=ax)
        c = np.broadcast_to(lat, lo.shape)
        rows += [lo.ravel(), hi.ravel()]
        cols += [hi.ravel(), lo.ravel()]
        vals += [-c.ravel(), -c.ravel()]
        sl_lo = [slice(None)] * (n + 1)
        sl_hi = [slice(None)] * (n + 1)
        sl_lo[ax] = slice(0, dims[ax] - 1)
        sl_hi[ax] = slice(1, dims[ax])
        diag[tuple(sl_lo)] += c
        diag[tuple(sl_hi)] += c
    lo = idx[..., :-1]
    hi = idx[..., 1:]
    c = np.broadcast_to(vert, lo.shape)
    rows += [lo.ravel(), hi.ravel()]
    cols += [hi.ravel(), lo.ravel()]
    vals += [-c.ravel(), -c.ravel()]
    diag[..., :-1] += c
    diag[..., 1:] += c
    diag[..., 0] += trace
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return A, trace


def _padded_trace(E: CellSet, pad: int, refine: int = 1):
    d = E.domain
    if pad == 0:
        big, inside = d, E.mask
    else:
        p = [0 if k == 1 else pad for k in d.dims]
        big = GridDomain(d.n, tuple(k + 2 * q for q, k in zip(p, d.dims)), d.h,
                         tuple(o - q * d.h for q, o in zip(p, d.origin)))
        inside = E.exterior.contains(big.centers())
        inside[tuple(slice(q, q + k) for q, k in zip(p, d.dims))] = E.mask
    if refine > 1:
        # the same set on a finer trace grid; singleton axes stay invariant
        for ax, k in enumerate(big.dims):
            if k > 1:
                inside = np.repeat(inside, refine, axis=ax)
        big = GridDomain(big.n, inside.shape, big.h / refine, big.origin)
    return big, np.where(inside, 1.0, -1.0)


def levels_for_height(h: float, height: float) -> int:
    """Smallest M >= 16 whose z-grid with first height h reaches ``height``."""
    M = 16
    while z_edges(h, M)[-1] < height:
        M += 1
    return M


_SOLVER_CACHE: dict = {}


def solve_extension(E: CellSet, M: int = 24, tol: float = 1e-10, s: float | None = None, pad: int = 0,
                    maxiter: int = 2000, refine: int = 1) -> ExtensionField:
    """Extension of chi_E - chi_E^c with weight z^(1-s).

    ``pad`` extra trace cells per side come from the exterior descriptor. A
    grid axis with a single cell carries no lateral faces, so the field is
    invariant along it. ``refine`` splits every trace cell into refine^n
    subcells: the same set, solved on a finer grid.
    """
    if M < 16:
        raise ValueError("need at least 16 z-levels")
    if s is None:
        raise ValueError("the order s is required")
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0, 1]")
    a = 1.0 - s
    if refine < 1:
        raise ValueError("refine must be a positive integer")
    base, g = _padded_trace(E, pad, refine)
    ze = z_edges(base.h, M)
    key = (base.dims, base.h, M, a)
    if key not in _SOLVER_CACHE:
        A, trace_c = _operator(base.dims, ze, a, base.h)
        if len(_SOLVER_CACHE) >= 2:
            _SOLVER_CACHE.clear()
        if sum(k > 1 for k in base.dims) <= 1:
            # a 2-D problem: the stretched cells defeat aggregation, a sparse factorization does not
            lu = spla.splu(A.tocsc())
            solve = lambda b: lu.solve(b)
        else:
            ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric")
            solve = lambda b: ml.solve(b, x0=np.zeros_like(b), tol=tol, accel="cg", maxiter=maxiter)
        _SOLVER_CACHE[key] = (A, trace_c, solve)
    A, trace_c, solve = _SOLVER_CACHE[key]
    b = np.zeros(base.dims + (M,))
    b[..., 0] = trace_c * g
    b = b.ravel()
    u = solve(b)
    rel = float(np.linalg.norm(b - A @ u) / np.linalg.norm(b)) if np.any(b) else 0.0
    if rel > tol * 10:
        raise ArithmeticError(f"extension solver did not converge (relative residual {rel:.3e})")
    return ExtensionField(base, g, ze, u.reshape(base.dims + (M,)), a, rel)


# ---------------------------------------------------------------------------
# energies


def _cell_face_energy(f: ExtensionField) -> np.ndarray:
    """Per-cell share of the discrete energy: half of each interior face, all of its trace face."""
    u = f.values
    n = f.base.n
    lat, vert, trace = _conductances(f.base, f.z_edges, f.a)
    e = np.zeros_like(u)
    for ax in range(n):
        du = np.diff(u, axis=ax)
        fe = 0.5 * lat * du ** 2
        sl_lo = [slice(None)] * (n + 1)
        sl_hi = [slice(None)] * (n + 1)
        sl_lo[ax] = slice(0, u.shape[ax] - 1)
        sl_hi[ax] = slice(1, u.shape[ax])
        e[tuple(sl_lo)] += fe
        e[tuple(sl_hi)] += fe
    fe = 0.5 * vert * np.diff(u, axis=-1) ** 2
    e[..., :-1] += fe
    e[..., 1:] += fe
    e[..., 0] += trace * (u[..., 0] - f.trace) ** 2
    return e


def total_energy(f: ExtensionField) -> float:
    return float(_cell_face_energy(f).sum())


def _invariant_axes(f: ExtensionField) -> list[int]:
    return [k for k, m in enumerate(f.base.dims) if m == 1]


def _half_ball_weights(f: ExtensionField, x0, r: float) -> np.ndarray:
    """Fraction of each cell counted in B_r^+((x0, 0)).

    Cells are sampled at their centers. Axes carrying a single trace cell are
    invariant directions of the field: the count there is the exact measure of
    the ball's section along them, divided by the cell width.
    """
    x0 = np.asarray(x0, float)
    base = f.base
    inv = _invariant_axes(f)
    act = [k for k in range(base.n) if k not in inv]
    lo, hi = base.lower[act], base.upper[act]
    if np.any(x0[act] - r < lo - 1e-12) or np.any(x0[act] + r > hi + 1e-12) or r > f.z_edges[-1]:
        raise ValueError("half-ball exceeds the truncated domain")
    X = base.centers() - x0
    d2 = np.sum(X[..., act] ** 2, axis=-1)[..., None] + f.z_levels ** 2
    k = len(inv)
    if k == 0:
        return _fractional_weights(f, X[..., act], r)
    rad2 = np.maximum(r * r - d2, 0.0)
    unit = math.pi ** (k / 2) / math.gamma(k / 2 + 1)
    return unit * rad2 ** (k / 2) / base.h ** k


def _fractional_weights(f: ExtensionField, X: np.ndarray, r: float, q: int = 6) -> np.ndarray:
    """Volume fraction of each cell inside the ball; cut cells are subsampled on a q^(n+1) grid."""
    h = f.base.h
    zc, dz = f.z_levels, np.diff(f.z_edges)
    d = np.sqrt(np.sum(X ** 2, axis=-1)[..., None] + zc ** 2)
    half_diag = np.sqrt(X.shape[-1] * (h / 2) ** 2 + (dz / 2) ** 2)
    w = (d + half_diag <= r).astype(float)
    cut = np.argwhere(np.abs(d - r) < half_diag)
    if len(cut) == 0:
        return w
    t = (np.arange(q) + 0.5) / q - 0.5
    nb = X.shape[-1]
    grids = np.stack(np.meshgrid(*([t] * (nb + 1)), indexing="ij"), -1).reshape(-1, nb + 1)
    idx = tuple(cut.T)
    base_pts = X[idx[:-1]][:, None, :] + grids[None, :, :nb] * h
    z_pts = zc[idx[-1]][:, None] + grids[None, :, nb] * dz[idx[-1]][:, None]
    inside = np.sum(base_pts ** 2, axis=-1) + z_pts ** 2 < r * r
    w[idx] = inside.mean(axis=1)
    return w


def half_ball_mask(f: ExtensionField, x0, r: float) -> np.ndarray:
    return _half_ball_weights(f, x0, r) > 0


def weighted_energy(f: ExtensionField, x0, r: float, mask: np.ndarray | None = None) -> float:
    """Energy of the cells of the half-ball B_r^+((x0, 0)) (or of an explicit cell mask)."""
    e = _cell_face_energy(f)
    if mask is not None:
        return float(e[mask].sum())
    return float((e * _half_ball_weights(f, x0, r)).sum())


@dataclass(frozen=True)
class MonotonicityProfile:
    radii: tuple[float, ...]
    phi: tuple[float, ...]
    energy_term: tuple[float, ...]
    rho_term: tuple[float, ...]

    def to_csv(self, path):
        return write_csv(path, ("r", "phi", "energy_term", "rho_term"),
                         zip(self.radii, self.phi, self.energy_term, self.rho_term))

    def to_dict(self) -> dict:
        return {"r": list(self.radii), "phi": list(self.phi), "energy_term": list(self.energy_term),
                "rho_term": list(self.rho_term)}


def phi_profile(f: ExtensionField, x0, rho: Modulus, radii) -> MonotonicityProfile:
    """Phi(r) = energy(B_r^+)/r^(n-s) + (n-s) int_0^r rho(t) t^(n-s-1) dt."""
    n, s = f.base.n, 1.0 - f.a
    radii = [float(r) for r in radii]
    act = [k for k in range(n) if k not in _invariant_axes(f)]
    x0 = np.asarray(x0, float)
    room = min(np.min(x0[act] - f.base.lower[act]), np.min(f.base.upper[act] - x0[act]), f.z_edges[-1])
    if max(radii) * 2 > room + 1e-12:
        raise ValueError("truncation must be at least twice the largest radius")
    e = _cell_face_energy(f)
    et, rt = [], []
    for r in radii:
        et.append(float((e * _half_ball_weights(f, x0, r)).sum()) / r ** (n - s))
        rt.append(rho_integral(rho, r, n, s))
    return MonotonicityProfile(tuple(radii), tuple(a + b for a, b in zip(et, rt)), tuple(et), tuple(rt))


@dataclass(frozen=True)
class EnergyRelation:
    lhs: float  # extension energy difference
    rhs: float  # J_s difference
    c: float  # lhs / rhs (nan when rhs is zero)

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "c": self.c}


_ENERGY_CACHE: dict = {}


def _cached_total_energy(E: CellSet, M, tol, s, pad, refine=1) -> float:
    d = E.domain
    key = (E.mask.tobytes(), E.exterior.key(), d.dims, d.h, d.origin, M, tol, s, pad, refine)
    if key not in _ENERGY_CACHE:
        if len(_ENERGY_CACHE) > 64:
            _ENERGY_CACHE.clear()
        _ENERGY_CACHE[key] = total_energy(solve_extension(E, M, tol, s, pad, refine=refine))
    return _ENERGY_CACHE[key]


def energy_relation_experiment(E: CellSet, F: CellSet, omega: Window, K: KernelTable, M: int = 24,
                               tol: float = 1e-10, pad: int = 0, extrapolate: bool = False) -> EnergyRelation:
    """Extension-energy difference against the J_s difference for one pair.

    The finite-volume energy of a jump trace is low by about h^(1-s) times the
    interface length. With ``extrapolate`` the same pair is also solved on the
    trace grid refined once, and the leading error is eliminated by Richardson
    extrapolation with the known exponent 1 - s.
    """
    if np.any((E.mask ^ F.mask) & ~omega.mask):
        raise ValueError("F delta E must lie inside the window")
    s = K.s
    runs = [(M, 1)]
    if extrapolate:
        runs.append((levels_for_height(K.domain.h / 2, z_edges(K.domain.h, M)[-1]), 2))
    diffs = []
    for m, k in runs:
        eE = _cached_total_energy(E, m, tol, s, pad, k)
        eF = _cached_total_energy(F, m, tol, s, pad, k) if F != E else eE
        diffs.append(eF - eE)
    if extrapolate:
        q = 2.0 ** (s - 1.0)
        lhs = (diffs[1] - q * diffs[0]) / (1.0 - q)
    else:
        lhs = diffs[0]
    rhs = localized_energy(F, omega, K).total - localized_energy(E, omega, K).total
    c = lhs / rhs if rhs != 0 else math.nan
    return EnergyRelation(float(lhs), float(rhs), float(c))
