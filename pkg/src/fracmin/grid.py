"""Uniform cell grids, analytic exterior data and binary cell sets.

A set is a union of closed grid cells inside the computational box together
with an analytic descriptor saying which points outside the box belong to it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class GridDomain:
    """Cells ``origin + h*[i, i+1]`` per axis, ``dims`` cells along each axis."""

    n: int
    dims: tuple[int, ...]
    h: float
    origin: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "h", float(self.h))
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.n}")
        if len(self.dims) != self.n or len(self.origin) != self.n:
            raise ValueError("dims and origin must have length n")
        if min(self.dims) < 1:
            raise ValueError("all dims must be >= 1")
        if not self.h > 0:
            raise ValueError("h must be positive")

    @classmethod
    def centered(cls, n: int, cells: int | Sequence[int], half_width: float | Sequence[float]):
        """Box ``[-w, w]`` per axis split into ``cells`` cells (cells per axis must give equal h)."""
        cells = (cells,) * n if np.isscalar(cells) else tuple(cells)
        hw = (half_width,) * n if np.isscalar(half_width) else tuple(half_width)
        hs = {2 * w / c for w, c in zip(hw, cells)}
        if len(hs) != 1:
            raise ValueError("cells and half widths give unequal spacing")
        return cls(n, cells, hs.pop(), tuple(-w for w in hw))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.h * np.asarray(self.dims)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def axes(self) -> list[np.ndarray]:
        """Cell-center coordinates per axis."""
        return [o + self.h * (np.arange(d) + 0.5) for o, d in zip(self.origin, self.dims)]

    def centers(self) -> np.ndarray:
        """Array of shape ``dims + (n,)`` with cell centers."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def index_of(self, x) -> tuple[int, ...]:
        """Index of the cell containing point ``x`` (ties go to the upper cell)."""
        idx = np.floor((np.asarray(x, float) - self.lower) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.dims)):
            raise ValueError(f"point {x} outside the box")
        return tuple(int(i) for i in idx)

    def contains_box(self, lo, hi, slack: float = 1e-12) -> bool:
        return bool(np.all(np.asarray(lo) >= self.lower - slack) and np.all(np.asarray(hi) <= self.upper + slack))

    def dilate(self, lam: float) -> "GridDomain":
        return GridDomain(self.n, self.dims, self.h * lam, tuple(lam * o for o in self.origin))

    def translate(self, v) -> "GridDomain":
        return GridDomain(self.n, self.dims, self.h, tuple(o + float(t) for o, t in zip(self.origin, v)))

    def to_dict(self) -> dict:
        return {"n": self.n, "dims": list(self.dims), "h": self.h, "origin": list(self.origin)}


# ---------------------------------------------------------------------------
# exterior descriptors


def _unit(v) -> np.ndarray:
    v = np.asarray(v, float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValueError("zero direction")
    return v / nrm


def _merge(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _gap(intervals, t0: float) -> list[tuple[float, float]]:
    """Complement of ``intervals`` inside ``[t0, inf)``."""
    out, cur = [], t0
    for a, b in _merge(intervals):
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    out.append((cur, math.inf))
    return [(a, b) for a, b in out if b > a]


class Exterior:
    """Base class for analytic descriptions of a set's material outside the box."""

    kind: str = ""

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def dilate(self, lam: float) -> "Exterior":
        raise NotImplementedError

    def translate(self, v) -> "Exterior":
        raise NotImplementedError

    def complement(self) -> "Exterior":
        raise NotImplementedError

    def ray_intervals(self, p, u, t0: float = 0.0) -> list[tuple[float, float]]:
        """Parameter intervals ``t >= t0`` with ``p + t u`` in the set (``u`` unit)."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}

    def key(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class Empty(Exterior):
    kind = "empty"

    def contains(self, x):
        return np.zeros(np.shape(x)[:-1], bool)

    def dilate(self, lam):
        return self

    def translate(self, v):
        return self

    def complement(self):
        return Full()

    def ray_intervals(self, p, u, t0=0.0):
        return []

    def params(self):
        return {}


@dataclass(frozen=True)
class Full(Exterior):
    kind = "full"

    def contains(self, x):
        return np.ones(np.shape(x)[:-1], bool)

    def dilate(self, lam):
        return self

    def translate(self, v):
        return self

    def complement(self):
        return Empty()

    def ray_intervals(self, p, u, t0=0.0):
        return [(t0, math.inf)]

    def params(self):
        return {}


@dataclass(frozen=True)
class HalfSpace(Exterior):
    """The open half-space ``{x : x.e < c}``."""

    e: tuple[float, ...]
    c: float = 0.0
    kind = "half_space"

    def __post_init__(self):
        e = np.asarray(self.e, float)
        if abs(np.linalg.norm(e) - 1.0) > _UNIT_TOL:
            raise ValueError("half-space normal must be a unit vector")
        object.__setattr__(self, "e", tuple(float(v) for v in e))
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def through(cls, point, e) -> "HalfSpace":
        e = _unit(e)
        return cls(tuple(e), float(np.dot(point, e)))

    def contains(self, x):
        return np.asarray(x, float) @ np.asarray(self.e) < self.c

    def dilate(self, lam):
        return HalfSpace(self.e, self.c * lam)

    def translate(self, v):
        return HalfSpace(self.e, self.c + float(np.dot(v, self.e)))

    def complement(self):
        return HalfSpace(tuple(-v for v in self.e), -self.c)

    def ray_intervals(self, p, u, t0=0.0):
        e = np.asarray(self.e)
        pe, ue = float(np.dot(p, e)), float(np.dot(u, e))
        if ue == 0.0:
            return [(t0, math.inf)] if pe < self.c else []
        tc = (self.c - pe) / ue
        if ue > 0:
            return [(t0, tc)] if tc > t0 else []
        return [(max(t0, tc), math.inf)]

    def axis(self) -> int | None:
        """Coordinate axis if the normal is axis-aligned."""
        e = np.asarray(self.e)
        k = int(np.argmax(np.abs(e)))
        return k if abs(abs(e[k]) - 1.0) <= _UNIT_TOL else None

    def params(self):
        return {"e": list(self.e), "c": self.c}


@dataclass(frozen=True)
class Ball(Exterior):
    """Closed ball (``inside=True``) or the complement of the open ball."""

    center: tuple[float, ...]
    radius: float
    inside: bool = True
    kind = "ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, x):
        d = np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1)
        return d <= self.radius if self.inside else d > self.radius

    def dilate(self, lam):
        return Ball(tuple(lam * c for c in self.center), lam * self.radius, self.inside)

    def translate(self, v):
        return Ball(tuple(c + float(t) for c, t in zip(self.center, v)), self.radius, self.inside)

    def complement(self):
        return Ball(self.center, self.radius, not self.inside)

    def ray_intervals(self, p, u, t0=0.0):
        w = np.asarray(p, float) - np.asarray(self.center)
        b = float(np.dot(w, u))
        disc = b * b - (float(np.dot(w, w)) - self.radius ** 2)
        if disc <= 0:
            hit = []
        else:
            sq = math.sqrt(disc)
            hit = [(-b - sq, -b + sq)]
        if self.inside:
            return [(max(a, t0), bb) for a, bb in hit if bb > t0 and bb > max(a, t0)]
        return _gap(hit, t0)

    def params(self):
        return {"center": list(self.center), "radius": self.radius, "inside": self.inside}


@dataclass(frozen=True)
class Cone(Exterior):
    """Closed circular cone ``{(x-v).a >= |x-v| cos(aperture)}`` (aperture is the half-angle)."""

    vertex: tuple[float, ...]
    axis: tuple[float, ...]
    aperture: float
    kind = "cone"

    def __post_init__(self):
        a = np.asarray(self.axis, float)
        if abs(np.linalg.norm(a) - 1.0) > _UNIT_TOL:
            raise ValueError("cone axis must be a unit vector")
        if not 0.0 < self.aperture < math.pi:
            raise ValueError("cone aperture must lie in (0, pi)")
        object.__setattr__(self, "vertex", tuple(float(v) for v in self.vertex))
        object.__setattr__(self, "axis", tuple(float(v) for v in a))
        object.__setattr__(self, "aperture", float(self.aperture))

    def contains(self, x):
        w = np.asarray(x, float) - np.asarray(self.vertex)
        return w @ np.asarray(self.axis) >= np.linalg.norm(w, axis=-1) * math.cos(self.aperture)

    def dilate(self, lam):
        return Cone(tuple(lam * v for v in self.vertex), self.axis, self.aperture)

    def translate(self, v):
        return Cone(tuple(a + float(t) for a, t in zip(self.vertex, v)), self.axis, self.aperture)

    def complement(self):
        return Cone(self.vertex, tuple(-v for v in self.axis), math.pi - self.aperture)

    def ray_intervals(self, p, u, t0=0.0):
        if self.aperture > math.pi / 2:
            return _gap(self.complement().ray_intervals(p, u, t0), t0)
        a = np.asarray(self.axis)
        w = np.asarray(p, float) - np.asarray(self.vertex)
        c2 = math.cos(self.aperture) ** 2
        # f(t) = ((w+tu).a)^2 - c2 |w+tu|^2 on the forward nappe
        wa, ua = float(np.dot(w, a)), float(np.dot(u, a))
        A = ua * ua - c2
        B = 2 * (wa * ua - c2 * float(np.dot(w, u)))
        C = wa * wa - c2 * float(np.dot(w, w))
        roots = []
        if abs(A) > 1e-14:
            disc = B * B - 4 * A * C
            if disc > 0:
                sq = math.sqrt(disc)
                roots = sorted(((-B - sq) / (2 * A), (-B + sq) / (2 * A)))
        elif abs(B) > 0:
            roots = [-C / B]
        cuts = [t0] + [r for r in roots if r > t0]
        out = []
        for lo, hi in zip(cuts, cuts[1:] + [math.inf]):
            mid = lo + 1.0 if hi == math.inf else 0.5 * (lo + hi)
            x = w + mid * np.asarray(u)
            if np.dot(x, a) >= np.linalg.norm(x) * math.cos(self.aperture):
                out.append((lo, hi))
        return _merge(out)

    def params(self):
        return {"vertex": list(self.vertex), "axis": list(self.axis), "aperture": self.aperture}


_KINDS = {"empty": Empty, "full": Full, "half_space": HalfSpace, "ball": Ball, "cone": Cone}


def exterior_from_dict(d: dict) -> Exterior:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown exterior kind {kind!r}")
    return _KINDS[kind](**d)


def parse_exterior(text: str) -> Exterior:
    """Parse ``kind:params`` strings such as ``half_space:0,1:0`` or ``ball:0,0:0.5:in``."""
    parts = text.split(":")
    kind = parts[0]
    vec = lambda s: tuple(float(v) for v in s.split(","))
    if kind in ("empty", "full"):
        return _KINDS[kind]()
    if kind in ("half_space", "halfspace"):
        return HalfSpace(tuple(_unit(vec(parts[1]))), float(parts[2]) if len(parts) > 2 else 0.0)
    if kind == "ball":
        inside = len(parts) < 4 or parts[3] in ("in", "inside", "1", "true")
        return Ball(vec(parts[1]), float(parts[2]), inside)
    if kind == "cone":
        return Cone(vec(parts[1]), tuple(_unit(vec(parts[2]))), float(parts[3]))
    raise ValueError(f"unknown exterior kind {kind!r}")


def format_exterior(ext: Exterior) -> str:
    f = lambda v: ",".join(repr(float(x)) for x in v)
    if isinstance(ext, (Empty, Full)):
        return ext.kind
    if isinstance(ext, HalfSpace):
        return f"half_space:{f(ext.e)}:{ext.c!r}"
    if isinstance(ext, Ball):
        return f"ball:{f(ext.center)}:{ext.radius!r}:{'in' if ext.inside else 'out'}"
    return f"cone:{f(ext.vertex)}:{f(ext.axis)}:{ext.aperture!r}"


@dataclass(frozen=True)
class Subgraph:
    """Rasterization-only shape ``{x_n < u(x')}``."""

    u: Callable[[np.ndarray], np.ndarray]

    def contains(self, x):
        x = np.asarray(x, float)
        vals = np.asarray(self.u(x[..., :-1]), float)
        if vals.shape != x.shape[:-1] or not np.all(np.isfinite(vals)):
            raise ValueError("shape-domain mismatch")
        return x[..., -1] < vals


# ---------------------------------------------------------------------------
# cell sets


@dataclass(frozen=True, eq=False)
class CellSet:
    domain: GridDomain
    mask: np.ndarray
    exterior: Exterior = field(default_factory=Empty)

    def __post_init__(self):
        m = np.asarray(self.mask, bool)
        if m.size != self.domain.size:
            raise ValueError("mask length must equal the product of dims")
        m = m.reshape(self.domain.dims).copy()
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    def __eq__(self, other):
        return (
            isinstance(other, CellSet)
            and self.domain == other.domain
            and self.exterior == other.exterior
            and bool(np.array_equal(self.mask, other.mask))
        )

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def volume(self) -> float:
        return self.count * self.domain.cell_volume

    def with_mask(self, mask) -> "CellSet":
        return CellSet(self.domain, np.asarray(mask, bool).reshape(self.domain.dims), self.exterior)

    def complement(self) -> "CellSet":
        return CellSet(self.domain, ~self.mask, self.exterior.complement())

    def translate(self, v) -> "CellSet":
        return CellSet(self.domain.translate(v), self.mask, self.exterior.translate(v))

    def padded_mask(self) -> np.ndarray:
        """Mask with one layer of virtual neighbors sampled from the exterior at their centers."""
        d = self.domain
        big = GridDomain(d.n, tuple(k + 2 for k in d.dims), d.h, tuple(o - d.h for o in d.origin))
        out = self.exterior.contains(big.centers())
        out[(slice(1, -1),) * d.n] = self.mask
        return out

    def boundary_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Face midpoints and normals (pointing from E to its complement) of ``dE``.

        Faces on the box wall use the exterior sampled at the virtual neighbor center.
        """
        pm = self.padded_mask()
        d = self.domain
        mids, normals = [], []
        for ax in range(d.n):
            lo = np.take(pm, np.arange(pm.shape[ax] - 1), axis=ax)
            hi = np.take(pm, np.arange(1, pm.shape[ax]), axis=ax)
            # restrict transverse axes to the real box
            sl = tuple(slice(None) if k == ax else slice(1, -1) for k in range(d.n))
            lo, hi = lo[sl], hi[sl]
            for sign, sel in ((1.0, lo & ~hi), (-1.0, ~lo & hi)):
                idx = np.argwhere(sel).astype(float)
                if idx.size == 0:
                    continue
                p = np.asarray(d.origin) + d.h * (idx + 0.5)
                p[:, ax] = d.origin[ax] + d.h * idx[:, ax]
                mids.append(p)
                nv = np.zeros((len(p), d.n))
                nv[:, ax] = sign
                normals.append(nv)
        if not mids:
            return np.zeros((0, d.n)), np.zeros((0, d.n))
        return np.concatenate(mids), np.concatenate(normals)

    def boundary_cells(self) -> np.ndarray:
        """Cells of E having a face neighbor (or exterior sample) outside E."""
        pm = self.padded_mask()
        inner = (slice(1, -1),) * self.domain.n
        touch = np.zeros(self.domain.dims, bool)
        for ax in range(self.domain.n):
            for sh in (-1, 1):
                touch |= ~np.roll(pm, sh, axis=ax)[inner]
        return self.mask & touch

    def to_dict(self) -> dict:
        flat = self.mask.ravel(order="C").astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0] == 1:
            runs = [0] + runs
        return {**self.domain.to_dict(), "exterior": self.exterior.to_dict(),
                "mask": {"encoding": "rle", "runs": runs}}

    @classmethod
    def from_dict(cls, d: dict) -> "CellSet":
        dom = GridDomain(int(d["n"]), tuple(d["dims"]), float(d["h"]), tuple(d["origin"]))
        m = d["mask"]
        if m.get("encoding") != "rle":
            raise ValueError("only rle mask encoding is supported")
        runs = np.asarray(m["runs"], int)
        vals = np.arange(len(runs)) % 2
        flat = np.repeat(vals, runs).astype(bool)
        if flat.size != dom.size:
            raise ValueError("rle runs do not cover the grid")
        return cls(dom, flat.reshape(dom.dims), exterior_from_dict(d["exterior"]))


def rasterize(shape, domain: GridDomain, rule: str = "center", exterior: Exterior | None = None) -> CellSet:
    """Cells whose center (or at least half their corners) lie in ``shape``.

    The descriptor itself becomes the exterior unless ``exterior`` is given;
    subgraph shapes default to an empty exterior.
    """
    def inside(x):
        try:
            return shape.contains(x)
        except ValueError as exc:
            raise ValueError("shape-domain mismatch") from exc

    if rule == "center":
        mask = inside(domain.centers())
    elif rule == "majority":
        corners = np.stack(
            np.meshgrid(*[o + domain.h * np.arange(d + 1) for o, d in zip(domain.origin, domain.dims)], indexing="ij"),
            axis=-1,
        )
        hits = inside(corners).astype(int)
        total = np.zeros(domain.dims, int)
        for off in np.ndindex(*(2,) * domain.n):
            sl = tuple(slice(o, o + d) for o, d in zip(off, domain.dims))
            total += hits[sl]
        mask = 2 * total >= 2 ** domain.n
    else:
        raise ValueError(f"unknown rasterization rule {rule!r}")
    if exterior is None:
        exterior = shape if isinstance(shape, Exterior) else Empty()
    return CellSet(domain, mask, exterior)


def full(domain: GridDomain) -> CellSet:
    return rasterize(Full(), domain)


def empty(domain: GridDomain) -> CellSet:
    return rasterize(Empty(), domain)


def symmetric_difference_measure(E: CellSet, F: CellSet) -> float:
    if E.domain != F.domain:
        raise ValueError("domain mismatch")
    if E.exterior != F.exterior:
        raise ValueError("exterior descriptor mismatch")
    return float(np.count_nonzero(E.mask != F.mask)) * E.domain.cell_volume


def rescale(E: CellSet, lam: float) -> CellSet:
    """The dilated set ``lam * E`` on the dilated grid."""
    if not lam > 0:
        raise ValueError("scale factor must be positive")
    return CellSet(E.domain.dilate(lam), E.mask, E.exterior.dilate(lam))


# ---------------------------------------------------------------------------
# file IO


def save_cellset(E: CellSet, path) -> None:
    path = Path(path)
    if path.suffix == ".grid":
        path.write_text(to_grid_text(E))
    else:
        path.write_text(json.dumps(E.to_dict()))


def load_cellset(path) -> CellSet:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".grid":
        return from_grid_text(text)
    return CellSet.from_dict(json.loads(text))


def to_grid_text(E: CellSet) -> str:
    """Plain-text form for n=2; rows run from top (largest y) to bottom."""
    d = E.domain
    if d.n != 2:
        raise ValueError(".grid format is for n=2 only")
    head = (f"n=2 dims={d.dims[0]},{d.dims[1]} h={d.h!r} origin={d.origin[0]!r},{d.origin[1]!r} "
            f"exterior={format_exterior(E.exterior)}")
    rows = ["".join("1" if E.mask[ix, iy] else "0" for ix in range(d.dims[0])) for iy in reversed(range(d.dims[1]))]
    return "\n".join([head] + rows) + "\n"


def from_grid_text(text: str) -> CellSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    fields = dict(tok.split("=", 1) for tok in lines[0].split())
    if fields.get("n") != "2":
        raise ValueError(".grid format is for n=2 only")
    W, H = (int(v) for v in fields["dims"].split(","))
    dom = GridDomain(2, (W, H), float(fields["h"]), tuple(float(v) for v in fields["origin"].split(",")))
    rows = lines[1:]
    if len(rows) != H or any(len(r) != W for r in rows):
        raise ValueError("grid body does not match dims")
    mask = np.array([[c == "1" for c in r] for r in reversed(rows)], bool).T
    return CellSet(dom, mask, parse_exterior(fields["exterior"]))
