"""Deformed tangent balls, the reflection-like involution T_eps and the perturbation sets.

Canonical frame: the tangency point is 0, the inner tangent ball is
B_2R(-2R e_n) (so E lies below), and T_eps reflects along rays from
c = -R e_n across the deformed sphere dV_{R,eps}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .grid import CellSet
from .kernel import KernelTable
from .modulus import Modulus


@dataclass(frozen=True, eq=False)
class Frame:
    """Rigid motion x_world = origin + Q @ y_canonical."""

    origin: np.ndarray
    Q: np.ndarray

    @classmethod
    def canonical(cls, n: int) -> "Frame":
        return cls(np.zeros(n), np.eye(n))

    @classmethod
    def from_normal(cls, point, inward_normal) -> "Frame":
        """Frame whose canonical -e_n is ``inward_normal`` (pointing into E)."""
        p = np.asarray(point, float)
        out = -np.asarray(inward_normal, float)
        out = out / np.linalg.norm(out)
        n = len(p)
        if n == 2:
            Q = np.array([[out[1], out[0]], [-out[0], out[1]]])
        else:
            basis = np.linalg.qr(np.column_stack([out, np.eye(n)]))[0]
            Q = np.column_stack([basis[:, 1:n], out])
            if np.linalg.det(Q) < 0:
                Q[:, 0] *= -1
        return cls(p, Q)

    def to_world(self, y):
        return self.origin + np.asarray(y, float) @ self.Q.T

    def to_canonical(self, x):
        return (np.asarray(x, float) - self.origin) @ self.Q


@dataclass(frozen=True, eq=False)
class DeformedBall:
    """V_{R,eps} = {|y + R e_n| <= R + d_eps(y)}, d_eps(y) = (eps^2 - |y'|^2)_+ / R."""

    R: float
    eps: float
    frame: Frame
    n: int = field(init=False)

    def __post_init__(self):
        n = len(self.frame.origin)
        object.__setattr__(self, "n", n)
        if self.R < 1.0:
            raise ValueError("tangent-ball scale R must be >= 1")
        if not 0.0 < self.eps < 1.0 / (6 * n):
            raise ValueError(f"eps must lie in (0, 1/{6 * n})")

    @property
    def center(self) -> np.ndarray:
        c = np.zeros(self.n)
        c[-1] = -self.R
        return c

    def d_eps(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        yp2 = np.sum(y[..., :-1] ** 2, axis=-1)
        return np.maximum(self.eps ** 2 - yp2, 0.0) / self.R

    def contains(self, x) -> np.ndarray:
        y = self.frame.to_canonical(x)
        return np.linalg.norm(y - self.center, axis=-1) <= self.R + self.d_eps(y)

    def _polar(self, y):
        rel = y - self.center
        rho = np.linalg.norm(rel, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = rel / rho[..., None]
        return rho, v

    def _rho_m(self, v):
        """Radius of dV along the unit direction v, and its derivative in q = |v'|^2."""
        R, e = self.R, self.eps
        q = np.sum(v[..., :-1] ** 2, axis=-1)
        # rho_m = R + (eps^2 - rho_m^2 q)/R while rho_m |v'| < eps, else R
        disc = np.sqrt(R * R + 4 * q * (R * R + e * e))
        root = 2 * (R * R + e * e) / (R + disc)
        bent = q * R * R < e * e
        rm = np.where(bent, root, R)
        drm = np.where(bent, -rm * rm / (2 * q * rm + R), 0.0)
        return rm, drm

    def radial_boundary(self, x):
        """|x - c| and the radius of dV along the same ray (canonical center c)."""
        rho, v = self._polar(self.frame.to_canonical(x))
        return rho, self._rho_m(v)[0]

    def in_ring(self, x) -> np.ndarray:
        rho, rm = self.radial_boundary(x)
        return (rho > 0) & (rho < 2 * rm)

    def T(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        y = self.frame.to_canonical(x)
        rho, v = self._polar(y)
        if np.any(rho <= 1e-14 * self.R):
            raise ValueError("T_eps is singular at the center -R e_n")
        rm, _ = self._rho_m(v)
        if np.any(rho >= 2 * rm):
            raise ValueError("outside involution domain")
        ty = self.center + (2 * rm - rho)[..., None] * v
        return self.frame.to_world(ty)

    def DT(self, x) -> np.ndarray:
        """Jacobian of T in world coordinates, shape (..., n, n)."""
        y = self.frame.to_canonical(x)
        rho, v = self._polar(y)
        rm, drm = self._rho_m(v)
        n = self.n
        I = np.eye(n)
        Pv = v.copy()
        Pv[..., -1] = 0.0
        proj = I - v[..., :, None] * v[..., None, :]
        # grad_y rho_m(v) = (I - v v^T)/rho * 2 P v * drho_m/dq
        g = np.einsum("...ij,...j->...i", proj, 2 * Pv) * (drm / rho)[..., None]
        J = -I + (2 * rm / rho)[..., None, None] * proj + 2 * v[..., :, None] * g[..., None, :]
        return self.frame.Q @ J @ self.frame.Q.T

    def reflection(self, x) -> np.ndarray:
        """P_x = I - 2 v v^T for the ray direction v through x, world coordinates."""
        _, v = self._polar(self.frame.to_canonical(x))
        P = np.eye(self.n) - 2 * v[..., :, None] * v[..., None, :]
        return self.frame.Q @ P @ self.frame.Q.T

    def distance_to_boundary(self, x) -> float:
        """Euclidean distance from one point to dV (local search around its ray)."""
        y = self.frame.to_canonical(x)
        rho, v = self._polar(y)
        t1 = np.linalg.svd(v[None, :])[2][1:]  # tangent basis at v

        def f(a):
            w = v + a @ t1
            w = w / np.linalg.norm(w)
            return float(np.linalg.norm(self.center + self._rho_m(w)[0] * w - y))

        best = minimize(f, np.zeros(self.n - 1), method="Nelder-Mead",
                        options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        return min(float(best.fun), f(np.zeros(self.n - 1)))


def involution_T(x, R: float, eps: float, frame: Frame | None = None) -> np.ndarray:
    x = np.asarray(x, float)
    frame = Frame.canonical(x.shape[-1]) if frame is None else frame
    return DeformedBall(R, eps, frame).T(x)


# ---------------------------------------------------------------------------
# perturbation sets


@dataclass(frozen=True, eq=False)
class PerturbationSets:
    ball: DeformedBall
    A_minus: np.ndarray
    A_plus: np.ndarray
    A: np.ndarray
    S: np.ndarray
    D: np.ndarray
    dropped: int  # images that left the box
    snap_error: float  # largest distance between an image and its snapped cell center

    def to_cellsets(self, E: CellSet) -> dict[str, CellSet]:
        return {k: E.with_mask(getattr(self, k)) for k in ("A_minus", "A_plus", "A", "S", "D")}

    def to_dict(self, E: CellSet) -> dict:
        return {"R": self.ball.R, "eps": self.ball.eps, "dropped": self.dropped, "snap_error": self.snap_error,
                "roles": {k: v.to_dict() for k, v in self.to_cellsets(E).items()}}


def _check_tangent_ball(E: CellSet, x0, inward, R):
    d = E.domain
    c = x0 + 2 * R * inward
    ball = np.linalg.norm(d.centers() - c, axis=-1) < 2 * R - d.h
    if not np.all(E.mask[ball]):
        raise ValueError("no interior tangent ball of radius 2R at the tangency point")


def build_perturbation(E: CellSet, x0, inward_normal, R: float, eps: float, check: bool = True) -> PerturbationSets:
    """A_minus = V_{R,eps} minus E, A_plus = T(A_minus) minus E (snapped), and the S/D split."""
    x0 = np.asarray(x0, float)
    nu = np.asarray(inward_normal, float)
    nu = nu / np.linalg.norm(nu)
    V = DeformedBall(R, eps, Frame.from_normal(x0, nu))
    d = E.domain
    if check:
        _check_tangent_ball(E, x0, nu, R)
    X = d.centers()
    Am = V.contains(X) & ~E.mask
    idx = np.argwhere(Am)
    Ap = np.zeros(d.dims, bool)
    S = np.zeros(d.dims, bool)
    dropped, snap = 0, 0.0
    if len(idx):
        img = V.T(X[tuple(idx.T)])
        cell = np.floor((img - d.lower) / d.h).astype(int)
        inside = np.all((cell >= 0) & (cell < np.asarray(d.dims)), axis=1)
        dropped = int(np.count_nonzero(~inside))
        cell, src, img = cell[inside], idx[inside], img[inside]
        if len(cell):
            snap = float(np.max(np.linalg.norm(d.lower + (cell + 0.5) * d.h - img, axis=1)))
        tgt = tuple(cell.T)
        out = ~E.mask[tgt]
        Ap[tuple(cell[out].T)] = True
        # a pair (q, snap T q) is symmetric when both ends belong to A
        S[tuple(src[out].T)] = True
        S[tuple(cell[out].T)] = True
    A = Am | Ap
    D = A & ~S
    if not A.any():
        import warnings
        warnings.warn("empty perturbation set: the interface lies on dV", stacklevel=2)
    return PerturbationSets(V, Am, Ap, A, S, D, dropped, snap)


def check_inclusions(sets: PerturbationSets, E: CellSet) -> dict:
    """Cellwise A_minus in B_2eps, B_{eps^2/2R} minus E in A, A in B_8eps (with snapping slack)."""
    d = E.domain
    V = sets.ball
    r = np.linalg.norm(d.centers() - V.frame.origin, axis=-1)
    slack = 0.5 * d.h * math.sqrt(d.n)
    e, R = V.eps, V.R
    return {
        "A_minus_in_B2eps": bool(np.all(r[sets.A_minus] <= 2 * e)),
        "small_ball_in_A": bool(np.all(sets.A[(r <= e * e / (2 * R)) & ~E.mask])),
        "A_in_B8eps": bool(np.all(r[sets.A] <= 8 * e + slack)),
    }


# ---------------------------------------------------------------------------
# Euler-Lagrange residuals


@dataclass(frozen=True)
class ELResidual:
    lhs: float
    rhs_shape: float
    ratio: float
    eps: float

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs_shape": self.rhs_shape, "ratio": self.ratio, "eps": self.eps}


def euler_lagrange_residual(E: CellSet, sets: PerturbationSets, delta: float, rho: Modulus,
                            K: KernelTable) -> ELResidual:
    """lhs = L(A, E minus B_delta) - L(A, E^c minus B_delta) against rho(8 eps) eps^(n-s) + delta^((1-s)/2)|A_minus|/R."""
    V = sets.ball
    d = E.domain
    if not 8 * V.eps < delta:
        raise ValueError("need 8 eps < delta")
    x0 = V.frame.origin
    if not d.contains_box(x0 - delta, x0 + delta):
        raise ValueError("B_delta must lie within the box")
    far = np.linalg.norm(d.centers() - x0, axis=-1) >= delta
    A = sets.A
    lhs = (K.pairs(A, E.mask & far) + float(K.tail(E.exterior)[A].sum())
           - K.pairs(A, ~E.mask & far) - float(K.tail(E.exterior.complement())[A].sum()))
    n, s = d.n, K.s
    vol = float(sets.A_minus.sum()) * d.cell_volume
    rho_part = 0.0 if rho.is_zero else float(rho(8 * V.eps)) * V.eps ** (n - s)
    rhs = rho_part + delta ** ((1 - s) / 2) * vol / V.R
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.copysign(math.inf, lhs))
    return ELResidual(float(lhs), float(rhs), float(ratio), float(V.eps))


def scan_epsilon(E: CellSet, x0, inward_normal, R: float, eps_star: float, delta: float, rho: Modulus,
                 K: KernelTable, count: int = 8) -> ELResidual:
    """Best (smallest ratio) residual over ``count`` equispaced eps in (eps*, 2 eps*)."""
    best = None
    for e in eps_star * (1 + np.arange(1, count + 1) / (count + 1)):
        sets = build_perturbation(E, x0, inward_normal, R, float(e))
        if not sets.A.any():
            continue
        res = euler_lagrange_residual(E, sets, delta, rho, K)
        if best is None or res.ratio < best.ratio:
            best = res
    if best is None:
        raise ValueError("every scanned eps gave an empty perturbation set")
    return best
