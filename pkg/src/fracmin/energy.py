"""Localized energy J_s(E; Omega), its first-variation identities and gaps."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .grid import CellSet, GridDomain
from .kernel import KernelTable
from .modulus import Modulus


@dataclass(frozen=True, eq=False)
class Window:
    """Cell-resolved region Omega: a cell belongs to it iff its center does."""

    domain: GridDomain
    mask: np.ndarray
    shape: dict

    def __post_init__(self):
        m = np.asarray(self.mask, bool).reshape(self.domain.dims).copy()
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    @classmethod
    def ball(cls, domain: GridDomain, center, r: float, check: bool = True) -> "Window":
        c = np.asarray(center, float)
        if check and not domain.contains_box(c - r, c + r):
            raise ValueError("window ball must lie within the computational box")
        mask = np.linalg.norm(domain.centers() - c, axis=-1) < r
        return cls(domain, mask, {"kind": "ball", "center": c.tolist(), "r": float(r)})

    @classmethod
    def box(cls, domain: GridDomain, lo, hi) -> "Window":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        if not domain.contains_box(lo, hi):
            raise ValueError("window box must lie within the computational box")
        x = domain.centers()
        mask = np.all((x > lo) & (x < hi), axis=-1)
        return cls(domain, mask, {"kind": "box", "lo": lo.tolist(), "hi": hi.tolist()})

    @classmethod
    def from_mask(cls, domain: GridDomain, mask) -> "Window":
        return cls(domain, mask, {"kind": "mask"})

    @classmethod
    def everything(cls, domain: GridDomain) -> "Window":
        return cls(domain, np.ones(domain.dims, bool), {"kind": "box", "lo": list(domain.lower), "hi": list(domain.upper)})

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class EnergyReport:
    total: float
    term_in_out: float
    term_out_in: float
    tail_share: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass(frozen=True)
class EnergyDelta:
    delta: float  # J(F) - J(E) by direct evaluation
    decomposition: float  # 2 L(A-,A+) + sub_part - super_part
    cross: float  # L(A-, A+)
    super_part: float  # L(A+, E) - L(A+, E^c \ A+)
    sub_part: float  # L(A-, E \ A-) - L(A-, E^c)


def _check(E: CellSet, K: KernelTable):
    if E.domain != K.domain:
        raise ValueError("kernel table does not match the set's domain")


def _tails(E: CellSet, K: KernelTable):
    """Per-cell interactions with E's and E^c's material outside the box."""
    tE = K.tail(E.exterior)
    tEc = K.tail(E.exterior.complement())
    return tE, tEc


def localized_energy(E: CellSet, omega: Window, K: KernelTable) -> EnergyReport:
    _check(E, K)
    if omega.domain != E.domain:
        raise ValueError("window does not match the set's domain")
    m, om = E.mask, omega.mask
    tE, tEc = _tails(E, K)
    e_in, e_out, c_in = m & om, m & ~om, ~m & om
    tail_a = float(tEc[e_in].sum())
    tail_b = float(tE[c_in].sum())
    a = K.pairs(e_in, ~m) + tail_a
    b = K.pairs(e_out, c_in) + tail_b
    return EnergyReport(a + b, a, b, tail_a + tail_b)


def _L_with_E(A, E: CellSet, K, tE):
    """L(A, E minus A) for a cell mask A."""
    return K.pairs(A, E.mask & ~A) + float(tE[A].sum())


def _L_with_Ec(A, E: CellSet, K, tEc):
    """L(A, E^c minus A)."""
    return K.pairs(A, ~E.mask & ~A) + float(tEc[A].sum())


def energy_delta(E: CellSet, F: CellSet, omega: Window, K: KernelTable) -> EnergyDelta:
    _check(E, K)
    if F.domain != E.domain or F.exterior != E.exterior:
        raise ValueError("E and F must share domain and exterior data")
    diff = E.mask ^ F.mask
    if np.any(diff & ~omega.mask):
        raise ValueError("F delta E is not inside the window")
    ap = F.mask & ~E.mask
    am = E.mask & ~F.mask
    tE, tEc = _tails(E, K)
    cross = K.pairs(am, ap)
    # A- lies in E, so E^c minus A- is all of E^c (A+ included)
    sub = _L_with_E(am, E, K, tE) - _L_with_Ec(am, E, K, tEc)
    sup = _L_with_E(ap, E, K, tE) - _L_with_Ec(ap, E, K, tEc)
    direct = localized_energy(F, omega, K).total - localized_energy(E, omega, K).total
    return EnergyDelta(direct, 2.0 * cross + sub - sup, cross, sup, sub)


def _rho_term(rho: Modulus, r: float, n: int, s: float) -> float:
    return 0.0 if rho.is_zero else rho(r) * r ** (n - s)


def _in_ball(domain: GridDomain, x0, r):
    return np.linalg.norm(domain.centers() - np.asarray(x0, float), axis=-1) <= r


def supersolution_gap(E: CellSet, A, x0, r: float, rho: Modulus, K: KernelTable) -> float:
    """L(A,E) - L(A, E^c minus A) - rho(r) r^(n-s); the property holds iff <= 0."""
    _check(E, K)
    A = np.asarray(A, bool).reshape(E.domain.dims)
    if np.any(A & E.mask) or np.any(A & ~_in_ball(E.domain, x0, r)):
        raise ValueError("A must lie in E^c within B_r(x0)")
    tE, tEc = _tails(E, K)
    return _L_with_E(A, E, K, tE) - _L_with_Ec(A, E, K, tEc) - _rho_term(rho, r, E.domain.n, K.s)


def subsolution_gap(E: CellSet, A, x0, r: float, rho: Modulus, K: KernelTable) -> float:
    """-(L(A, E minus A) - L(A, E^c)) - rho(r) r^(n-s); the property holds iff <= 0."""
    _check(E, K)
    A = np.asarray(A, bool).reshape(E.domain.dims)
    if np.any(A & ~E.mask) or np.any(A & ~_in_ball(E.domain, x0, r)):
        raise ValueError("A must lie in E within B_r(x0)")
    tE, tEc = _tails(E, K)
    return -(_L_with_E(A, E, K, tE) - _L_with_Ec(A, E, K, tEc)) - _rho_term(rho, r, E.domain.n, K.s)


def single_cell_drive(E: CellSet, K: KernelTable) -> np.ndarray:
    """D_i = L(i, E minus i) - L(i, E^c minus i) for every cell.

    Adding an outside cell i to E changes the energy by -D_i, removing an
    inside cell changes it by +D_i.
    """
    tE, tEc = _tails(E, K)
    m = E.mask
    return K.apply(m) + tE - K.apply(~m) - tEc


@dataclass(frozen=True)
class Residual:
    worst_gap: float
    kind: str  # "super" or "sub"
    witness: np.ndarray  # mask of the witnessing A
    samples: int


def _cluster_gap(idx, D, K, sign):
    """Gap of A = cells idx without the rho term: sign * (sum D + 2 sum_pairs w)."""
    d = K.domain
    pts = np.asarray(idx)
    s = float(D[tuple(pts.T)].sum())
    pair = 0.0
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            pair += K.pair_weight(pts[a], pts[b])
    # super: A in E^c: L(A,E) - L(A,E^c\A) = sum D_i + 2 sum w_ij
    # sub:   A in E:   -(L(A,E\A) - L(A,E^c)) = -(sum D_i - 2 sum w_ij)
    return s + 2 * pair if sign > 0 else -(s - 2 * pair)


def almost_minimality_residual(E: CellSet, x0, r: float, rho: Modulus, K: KernelTable,
                               budget: int = 2000, omega: Window | None = None, seed: int = 0) -> Residual:
    """Worst positive gap over singletons, face pairs, random clusters and slab caps in B_r(x0)."""
    _check(E, K)
    d = E.domain
    ball = _in_ball(d, x0, r)
    if omega is not None:
        ball &= omega.mask
    D = single_cell_drive(E, K)
    c = _rho_term(rho, r, d.n, K.s)
    best = (-np.inf, "super", np.zeros(d.dims, bool))
    count = 0

    def consider(gap, kind, cells):
        nonlocal best, count
        count += 1
        if gap > best[0]:
            w = np.zeros(d.dims, bool)
            w[tuple(np.asarray(cells).T)] = True
            best = (gap, kind, w)

    out_cells = np.argwhere(ball & ~E.mask)
    in_cells = np.argwhere(ball & E.mask)
    for cells, kind, sign in ((out_cells, "super", 1), (in_cells, "sub", -1)):
        if len(cells):
            g = sign * D[tuple(cells.T)] - c
            k = int(np.argmax(g))
            consider(float(g[k]), kind, cells[k:k + 1])
            count += len(cells) - 1
    region = {"super": ball & ~E.mask, "sub": ball & E.mask}
    # face-connected pairs
    for kind, sign in (("super", 1), ("sub", -1)):
        reg = region[kind]
        for ax in range(d.n):
            a = np.take(reg, np.arange(d.dims[ax] - 1), axis=ax) & np.take(reg, np.arange(1, d.dims[ax]), axis=ax)
            for cell in np.argwhere(a):
                if count >= budget:
                    break
                other = cell.copy()
                other[ax] += 1
                consider(_cluster_gap([cell, other], D, K, sign) - c, kind, [cell, other])
    # random 3-4 clusters grown by face steps
    rng = np.random.default_rng(seed)
    for kind, sign in (("super", 1), ("sub", -1)):
        reg = region[kind]
        cand = np.argwhere(reg)
        if len(cand) == 0:
            continue
        for _ in range(max(0, (budget - count) // 4)):
            size = int(rng.integers(3, 5))
            cl = [cand[rng.integers(len(cand))]]
            for _ in range(40):
                if len(cl) == size:
                    break
                base = cl[rng.integers(len(cl))].copy()
                ax = rng.integers(d.n)
                base[ax] += rng.choice([-1, 1])
                if np.all(base >= 0) and np.all(base < d.dims) and reg[tuple(base)] and not any(np.array_equal(base, q) for q in cl):
                    cl.append(base)
            consider(_cluster_gap(cl, D, K, sign) - c, kind, cl)
    # slab caps {(x - x0).e > t} within the ball
    x = d.centers() - np.asarray(x0, float)
    tE, tEc = _tails(E, K)
    for ax in range(d.n):
        for sgn in (1.0, -1.0):
            for frac in (0.0, 0.25, 0.5, 0.75):
                cap = sgn * x[..., ax] > frac * r
                for kind, sign in (("super", 1), ("sub", -1)):
                    A = cap & region[kind]
                    if not A.any():
                        continue
                    val = _L_with_E(A, E, K, tE) - _L_with_Ec(A, E, K, tEc)
                    consider(sign * val - c, kind, np.argwhere(A))
    return Residual(float(best[0]), best[1], best[2], count)
