"""Discrete interaction kernel for (1-s)|x-y|^-(n+s) on whole grid cells.

Pair weights depend only on the integer offset between two cells, so the
table stores one weight per offset computed at h = 1 and scales by h^(n-s).

For an offset k,

    w(k) = (1-s) * integral of Lam(u - k) |u|^-(n+s) du,   Lam(z) = prod (1 - |z_d|)_+

(Lam is the overlap volume of two unit cubes). On each of the 2^n unit
sub-boxes of the support Lam is a product of linear factors. Sub-boxes with
a corner at the origin use a Duffy pyramid map, where the radial integral is
closed form; the rest use tensor Gauss-Legendre after dyadic splitting until
distance/diameter >= 2.
"""
from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .grid import Ball, Cone, Empty, Exterior, Full, GridDomain, HalfSpace
from .quadrature import gauss01, tensor_gauss01
from . import tails

DEFAULT_QUAD_TOL = 1e-8
_DENSE_LIMIT = 2500
_MAGIC = b"FRACK1"
_TAIL_RULE = 2  # bump when the general tail quadrature changes; invalidates cached tails


# ---------------------------------------------------------------------------
# offset weights


def _regular_boxes(lo, alpha, beta, owner, n, s, nout):
    """Sum of P(u)|u|^-(n+s) over unit boxes [lo, lo+1] (none touching the origin)."""
    out = np.zeros(nout)
    width = np.ones(len(lo))
    while len(lo):
        c = lo + 0.5 * width[:, None]
        gap = np.maximum(np.abs(c) - 0.5 * width[:, None], 0.0)
        dist = np.sqrt((gap ** 2).sum(axis=1))
        ratio = dist / (width * math.sqrt(n))
        done = ratio >= 2.0
        if np.any(done):
            qsel = np.where(ratio < 4, 6, np.where(ratio < 8, 5, np.where(ratio < 32, 4, 3)))
            for q in (3, 4, 5, 6):
                sel = done & (qsel == q)
                if not np.any(sel):
                    continue
                xi, wi = tensor_gauss01(q, n)
                for chunk in np.array_split(np.flatnonzero(sel), max(1, int(sel.sum()) // 20000 + 1)):
                    L, Wd = lo[chunk], width[chunk]
                    x = L[:, None, :] + Wd[:, None, None] * xi[None, :, :]
                    P = np.prod(alpha[chunk][:, None, :] + beta[chunk][:, None, :] * x, axis=-1)
                    r2 = (x ** 2).sum(axis=-1)
                    val = (P * r2 ** (-(n + s) / 2.0)) @ wi * Wd ** n
                    out += np.bincount(owner[chunk], weights=val, minlength=nout)
        keep = ~done
        if not np.any(keep):
            break
        lo, width, alpha, beta, owner = lo[keep], width[keep] * 0.5, alpha[keep], beta[keep], owner[keep]
        kids = np.array(list(np.ndindex(*(2,) * n)), float)
        m = len(lo)
        lo = (lo[:, None, :] + width[:, None, None] * kids[None, :, :]).reshape(-1, n)
        width = np.repeat(width, len(kids))
        alpha = np.repeat(alpha, len(kids), axis=0)
        beta = np.repeat(beta, len(kids), axis=0)
        owner = np.repeat(owner, len(kids))
    return out


def _corner_box(alpha, beta, sigma, n, s, q=24) -> float:
    """Integral over the unit box {sigma_d v_d, v in [0,1]^n} of prod(alpha + beta u)|u|^-(n+s)."""
    b = np.asarray(beta, float) * np.asarray(sigma, float)
    a = np.asarray(alpha, float)
    total = 0.0
    xw, ww = gauss01(q)
    if n == 1:
        raise ValueError("n >= 2 required")
    grids = np.meshgrid(*([xw] * (n - 1)), indexing="ij")
    wts = np.prod(np.meshgrid(*([ww] * (n - 1)), indexing="ij"), axis=0).ravel()
    W = np.stack([g.ravel() for g in grids], axis=-1)
    for j in range(n):
        vt = np.insert(W, j, 1.0, axis=1)  # direction with v_j = 1
        coef = np.zeros((len(vt), n + 1))
        coef[:, 0] = 1.0
        for d in range(n):
            new = np.zeros_like(coef)
            new[:, :] += coef * a[d]
            new[:, 1:] += coef[:, :-1] * (b[d] * vt[:, d])[:, None]
            coef = new
        radial = sum(coef[:, m] / (m - s) for m in range(1, n + 1))
        total += np.sum(wts * radial * np.linalg.norm(vt, axis=1) ** (-(n + s)))
    return float(total)


def offset_weights_reduced(n: int, s: float, ks: np.ndarray) -> np.ndarray:
    """w(k) (including the 1-s factor) for nonzero nonnegative offsets ``ks`` (shape (K, n))."""
    ks = np.asarray(ks, int)
    K = len(ks)
    out = np.zeros(K)
    sigmas = np.array(list(np.ndindex(*(2,) * n)), int)
    lo_all, al_all, be_all, own_all = [], [], [], []
    for sig in sigmas:
        # sig_d = 0: z_d in [0,1], u_d in [k_d, k_d+1]; sig_d = 1: z_d in [-1,0], u_d in [k_d-1, k_d]
        lo = ks - sig
        alpha = np.where(sig == 0, 1 + ks, 1 - ks).astype(float)
        beta = np.where(sig == 0, -1.0, 1.0) * np.ones_like(alpha)
        corner = np.all((lo == 0) | (lo == -1), axis=1)
        for idx in np.flatnonzero(corner):
            sign = np.where(lo[idx] == 0, 1.0, -1.0)
            out[idx] += _corner_box(alpha[idx], beta[idx], sign, n, s)
        reg = ~corner
        lo_all.append(lo[reg].astype(float))
        al_all.append(alpha[reg])
        be_all.append(beta[reg])
        own_all.append(np.flatnonzero(reg))
    out += _regular_boxes(np.concatenate(lo_all), np.concatenate(al_all), np.concatenate(be_all),
                          np.concatenate(own_all), n, s, K)
    return (1.0 - s) * out


@lru_cache(maxsize=32)
def _offset_table_cached(n: int, extent: tuple[int, ...], s: float) -> np.ndarray:
    E = max(extent)
    # weights depend on the sorted absolute offset; compute each class once
    classes = np.array(sorted({tuple(sorted(k)) for k in np.ndindex(*(E,) * n) if any(k)}), int)
    vals = offset_weights_reduced(n, s, classes)
    lookup = {tuple(c): v for c, v in zip(classes, vals)}
    quad = np.zeros((E,) * n)
    for k in np.ndindex(*(E,) * n):
        if any(k):
            quad[k] = lookup[tuple(sorted(k))]
    idx = [np.abs(np.arange(-(d - 1), d)) for d in extent]
    full = quad[np.ix_(*idx)]
    full.flags.writeable = False
    return full


def _cache_dir() -> Path | None:
    d = os.environ.get("FRACMIN_CACHE_DIR")
    return Path(d) if d else None


def _cache_path(n, dims, s, quad_tol) -> Path | None:
    d = _cache_dir()
    if d is None:
        return None
    tag = hashlib.sha1(repr((n, tuple(dims), float(s), float(quad_tol))).encode()).hexdigest()[:16]
    return d / f"kernel-{tag}.frack"


def _tail_cache_path(n, dims, s, quad_tol, key: str) -> Path | None:
    d = _cache_dir()
    if d is None:
        return None
    tag = hashlib.sha1(repr((n, tuple(dims), float(s), float(quad_tol), key, _TAIL_RULE)).encode()).hexdigest()[:16]
    return d / f"tail-{tag}.npy"


def write_cache(path: Path, n, dims, h, s, quad_tol, offsets: np.ndarray, tails_block: dict | None = None):
    path.parent.mkdir(parents=True, exist_ok=True)
    tails_block = tails_block or {}
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<i", n))
        f.write(struct.pack(f"<{n}i", *dims))
        f.write(struct.pack("<ddd", h, s, quad_tol))
        f.write(np.ascontiguousarray(offsets, "<f8").tobytes())
        f.write(struct.pack("<i", len(tails_block)))
        for key, arr in tails_block.items():
            kb = key.encode()
            f.write(struct.pack("<i", len(kb)))
            f.write(kb)
            f.write(np.ascontiguousarray(arr, "<f8").tobytes())


def read_cache(path: Path):
    with open(path, "rb") as f:
        if f.read(6) != _MAGIC:
            raise ValueError("not a kernel cache file")
        (n,) = struct.unpack("<i", f.read(4))
        dims = struct.unpack(f"<{n}i", f.read(4 * n))
        h, s, tol = struct.unpack("<ddd", f.read(24))
        shape = tuple(2 * d - 1 for d in dims)
        offsets = np.frombuffer(f.read(8 * int(np.prod(shape))), "<f8").reshape(shape)
        (nt,) = struct.unpack("<i", f.read(4))
        block = {}
        for _ in range(nt):
            (kl,) = struct.unpack("<i", f.read(4))
            key = f.read(kl).decode()
            block[key] = np.frombuffer(f.read(8 * int(np.prod(dims))), "<f8").reshape(dims)
    return {"n": n, "dims": dims, "h": h, "s": s, "quad_tol": tol, "offsets": offsets, "tails": block}


def offset_table(n: int, dims, s: float, quad_tol: float = DEFAULT_QUAD_TOL) -> np.ndarray:
    """Unit-cell weights indexed by offset + (dims - 1); disk cached under FRACMIN_CACHE_DIR."""
    dims = tuple(int(d) for d in dims)
    path = _cache_path(n, dims, s, quad_tol)
    if path is not None and path.exists():
        try:
            return read_cache(path)["offsets"]
        except (ValueError, struct.error):
            pass
    table = _offset_table_cached(n, dims, float(s))
    if path is not None:
        write_cache(path, n, dims, 1.0, s, quad_tol, table)
    return table


# ---------------------------------------------------------------------------
# closed forms


def cell_perimeter(n: int, s: float, q: int = 40) -> float:
    """(1-s) * integral over Q of integral over Q^c of |x-y|^-(n+s) for the unit cube Q."""
    x, w = gauss01(q)
    if n == 2:
        th = 0.25 * math.pi * x
        a1, a2 = np.cos(th), np.sin(th)
        R = 1.0 / a1
        f = (a1 + a2) * R ** (1 - s) / (1 - s) - a1 * a2 * R ** (2 - s) / (2 - s) + R ** (-s) / s
        return float(8.0 * (1 - s) * 0.25 * math.pi * np.dot(w, f))
    if n == 3:
        Y, T = np.meshgrid(x, x, indexing="ij")
        WY = np.outer(w, w)
        Z = Y * T
        p = np.stack([np.ones_like(Y), Y, Z], axis=-1)
        rp = np.linalg.norm(p, axis=-1)
        a = p / rp[..., None]
        e1 = a.sum(-1)
        e2 = a[..., 0] * a[..., 1] + a[..., 0] * a[..., 2] + a[..., 1] * a[..., 2]
        e3 = a.prod(-1)
        R = rp
        f = e1 * R ** (1 - s) / (1 - s) - e2 * R ** (2 - s) / (2 - s) + e3 * R ** (3 - s) / (3 - s) + R ** (-s) / s
        return float(48.0 * (1 - s) * np.sum(WY * f * rp ** -3 * Y))
    raise ValueError("n must be 2 or 3")


def halfspace_constant(n: int, s: float) -> float:
    """integral over R^(n-1) of (1+|z|^2)^(-(n+s)/2) dz."""
    return math.pi ** ((n - 1) / 2) * math.gamma((1 + s) / 2) / math.gamma((n + s) / 2)


def cell_halfspace(a, n: int, s: float):
    """(1-s) * interaction of a unit cell at distance ``a`` from a half-space not containing it."""
    a = np.asarray(a, float)
    return halfspace_constant(n, s) / s * ((a + 1) ** (1 - s) - a ** (1 - s))


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class KernelTable:
    domain: GridDomain
    s: float
    quad_tol: float = DEFAULT_QUAD_TOL
    offsets: np.ndarray = field(init=False, repr=False)
    _tails: dict = field(init=False, repr=False, default_factory=dict)
    _dense: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        self.offsets = offset_table(self.domain.n, self.domain.dims, self.s, self.quad_tol)
        self.scale = self.domain.h ** (self.domain.n - self.s)
        self.p_cell = cell_perimeter(self.domain.n, self.s)

    @property
    def n(self):
        return self.domain.n

    def pair_weight(self, i, j) -> float:
        i, j = np.asarray(i, int), np.asarray(j, int)
        if np.array_equal(i, j):
            raise ValueError("self-pair undefined")
        k = tuple(i - j + np.asarray(self.domain.dims) - 1)
        return float(self.offsets[k] * self.scale)

    def dense(self) -> np.ndarray:
        """Full N x N pair matrix in C-order cell numbering (zero diagonal)."""
        if self._dense is None:
            idx = np.array(list(np.ndindex(*self.domain.dims)), int)
            off = tuple(idx[:, None, d] - idx[None, :, d] + self.domain.dims[d] - 1 for d in range(self.n))
            self._dense = self.offsets[off] * self.scale
        return self._dense

    def apply(self, mask) -> np.ndarray:
        """(W m)_i = sum_j w_ij m_j for every cell i."""
        m = np.asarray(mask, float).reshape(self.domain.dims)
        if self.domain.size <= _DENSE_LIMIT:
            return (self.dense() @ m.ravel()).reshape(self.domain.dims)
        full = fftconvolve(m, self.offsets, mode="full")
        sl = tuple(slice(d - 1, 2 * d - 1) for d in self.domain.dims)
        return full[sl] * self.scale

    def pairs(self, A, B) -> float:
        """sum over i in A, j in B of w_ij (A, B disjoint masks)."""
        A = np.asarray(A, bool).reshape(self.domain.dims)
        B = np.asarray(B, bool).reshape(self.domain.dims)
        if not A.any() or not B.any():
            return 0.0
        # canonical argument order so that pairs(A, B) == pairs(B, A) bit for bit
        if (int(B.sum()), B.tobytes()) < (int(A.sum()), A.tobytes()):
            A, B = B, A
        if self.domain.size <= _DENSE_LIMIT:
            W = self.dense()
            return float(W[np.ix_(A.ravel(), B.ravel())].sum())
        return float(self.apply(B)[A].sum())

    # tails -----------------------------------------------------------------

    def _unit_exterior(self, ext: Exterior) -> Exterior:
        d = self.domain
        return ext.translate(-np.asarray(d.origin)).dilate(1.0 / d.h)

    def tail(self, ext: Exterior) -> np.ndarray:
        """Per-cell interaction with ``ext`` minus the box (h-scaled)."""
        u = self._unit_exterior(ext)
        key = u.key()
        if key not in self._tails:
            ckey = u.complement().key()
            if ckey in self._tails and not isinstance(u, (Empty, Full)):
                arr = self._full_unit() - self._tails[ckey]
            else:
                arr = self._unit_tail(u)
            arr.flags.writeable = False
            self._tails[key] = arr
        return self._tails[key] * self.scale

    def tail_weight(self, i, ext: Exterior) -> float:
        return float(self.tail(ext)[tuple(i)])

    def _full_unit(self) -> np.ndarray:
        key = Full().key()
        if key not in self._tails:
            ones = np.ones(self.domain.dims)
            t = self.p_cell - self.apply(ones) / self.scale
            t.flags.writeable = False
            self._tails[key] = t
        return self._tails[key]

    def _lattice_halfspace(self, u: HalfSpace):
        ax = u.axis()
        if ax is None:
            return None
        c = u.c * u.e[ax]  # plane at x_ax = c
        if abs(c - round(c)) > 1e-9:
            return None
        c = int(round(c))
        lower = u.e[ax] > 0  # H = {x_ax < c}
        D = self.domain.dims[ax]
        j = np.arange(D)
        shape = [1] * self.n
        shape[ax] = D
        # in-box cells of H and of its complement
        inH = (j + 1 <= c) if lower else (j >= c)
        dist_to_H = np.where(lower, j - c, c - (j + 1))  # valid for cells outside H
        inH_b = np.broadcast_to(inH.reshape(shape), self.domain.dims)
        outside_cells = cell_halfspace(np.maximum(dist_to_H, 0), self.n, self.s).reshape(shape)
        # H cells inside the box
        boxH = self.apply(inH_b) / self.scale
        boxHc = self.apply(~inH_b) / self.scale
        tH_out = outside_cells - boxH  # for cells not in H
        dist_to_Hc = np.where(lower, c - (j + 1), j - c)
        tHc_out = cell_halfspace(np.maximum(dist_to_Hc, 0), self.n, self.s).reshape(shape) - boxHc
        full = self._full_unit()
        return np.where(inH_b, full - tHc_out, np.broadcast_to(tH_out, self.domain.dims))

    def _unit_tail(self, u: Exterior) -> np.ndarray:
        dims = self.domain.dims
        if isinstance(u, Empty):
            return np.zeros(dims)
        if isinstance(u, Full):
            return self._full_unit().copy()
        if isinstance(u, HalfSpace):
            t = self._lattice_halfspace(u)
            if t is not None:
                return t
        if isinstance(u, (HalfSpace, Ball, Cone)):
            path = _tail_cache_path(self.n, dims, self.s, self.quad_tol, u.key())
            if path is not None and path.exists():
                return np.load(path)
            arr = tails.cell_tails_general(u, dims, self.s, rtol=min(1e-10, self.quad_tol * 1e-2))
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                np.save(path, arr)
            return arr
        raise ValueError(f"exterior {u!r} is not radially quadrable")

    # point integrals (used by curvature) -----------------------------------

    def point_cell_integrals(self, x0, cells_mask) -> np.ndarray:
        """integral over each selected cell of |x - x0|^-(n+s) (no 1-s factor), h-scaled."""
        d = self.domain
        p = (np.asarray(x0, float) - d.lower) / d.h
        idx = np.argwhere(np.asarray(cells_mask, bool).reshape(d.dims))
        lo = idx.astype(float) - p
        ones = np.ones_like(lo)
        vals = _regular_boxes(lo, ones, np.zeros_like(lo), np.arange(len(lo)), d.n, self.s, len(lo))
        out = np.zeros(d.dims)
        out[tuple(idx.T)] = vals
        return out * d.h ** (-self.s)

    def point_tail(self, x0, ext: Exterior, rtol: float = 1e-11) -> float:
        """integral over ext minus the box of |x - x0|^-(n+s) (no 1-s factor)."""
        d = self.domain
        u = self._unit_exterior(ext)
        p = (np.asarray(x0, float) - d.lower) / d.h
        return float(tails.point_tails(u, d.dims, p[None, :], self.s, rtol)[0]) * d.h ** (-self.s)


def cell_pair_weight(i, j, domain: GridDomain, s: float, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    i, j = np.asarray(i, int), np.asarray(j, int)
    if np.array_equal(i, j):
        raise ValueError("self-pair undefined")
    k = np.sort(np.abs(i - j))
    return float(offset_weights_reduced(domain.n, s, k[None, :])[0] * domain.h ** (domain.n - s))


def tail_weight(i, exterior: Exterior, K: KernelTable) -> float:
    return K.tail_weight(i, exterior)


def _as_mask(domain, A):
    return np.asarray(A, bool).reshape(domain.dims)


def interaction(A, B, K: KernelTable, A_ext: Exterior | None = None, B_ext: Exterior | None = None) -> float:
    """L_s(A, B) where each side is a cell mask plus optional material outside the box."""
    d = K.domain
    A = _as_mask(d, A)
    B = _as_mask(d, B)
    if np.any(A & B):
        raise ValueError("interaction of non-disjoint sets")
    a_out = A_ext is not None and not isinstance(A_ext, Empty)
    b_out = B_ext is not None and not isinstance(B_ext, Empty)
    if a_out and b_out:
        raise ValueError("both sides carry exterior material; their mutual interaction is not tabulated")
    total = K.pairs(A, B)
    if b_out:
        total += float(K.tail(B_ext)[A].sum())
    if a_out:
        total += float(K.tail(A_ext)[B].sum())
    return total
