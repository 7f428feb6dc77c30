"""Almost-minimality moduli rho and the auxiliary function rho_hat."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


class ModulusDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Modulus:
    """rho on ``(0, delta)``: ``power`` (C t^alpha), ``table`` (log-log interpolated) or ``zero``.

    ``m`` defaults to ``n + s + 1``.
    """

    form: str
    s: float
    n: int = 2
    C: float = 0.0
    alpha: float = 0.0
    points: tuple[tuple[float, float], ...] = ()
    delta: float = 1.0
    m: float | None = None
    _t: np.ndarray = field(init=False, repr=False, compare=False)
    _v: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m is None:
            object.__setattr__(self, "m", self.n + self.s + 1.0)
        if not 0.0 < self.s <= 1.0:
            raise ValueError("s must lie in (0, 1]")
        if self.delta < 1.0:
            raise ValueError("delta must be >= 1 (rescale the problem instead)")
        if not self.m > self.n + self.s:
            raise ValueError("m must exceed n + s")
        if self.form == "power":
            if not self.C > 0 or not self.alpha > 0:
                raise ValueError("power modulus needs C > 0 and alpha > 0")
        elif self.form == "table":
            pts = tuple(sorted((float(t), float(v)) for t, v in self.points))
            if len(pts) < 2:
                raise ValueError("table modulus needs at least two samples")
            t = np.array([p[0] for p in pts])
            v = np.array([p[1] for p in pts])
            if np.any(t <= 0) or np.any(v <= 0) or np.any(np.diff(t) <= 0):
                raise ValueError("table samples must be positive with distinct radii")
            if t[-1] > self.delta:
                raise ValueError("table samples must lie in (0, delta]")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "_t", t)
            object.__setattr__(self, "_v", v)
        elif self.form != "zero":
            raise ValueError(f"unknown modulus form {self.form!r}")

    # construction helpers
    @classmethod
    def power(cls, C, alpha, s, n=2, delta=1.0, m=None):
        return cls("power", s, n, C=C, alpha=alpha, delta=delta, m=m)

    @classmethod
    def table(cls, points, s, n=2, delta=1.0, m=None):
        return cls("table", s, n, points=tuple(map(tuple, points)), delta=delta, m=m)

    @classmethod
    def zero(cls, s, n=2, delta=1.0, m=None):
        return cls("zero", s, n, delta=delta, m=m)

    @property
    def is_zero(self) -> bool:
        return self.form == "zero"

    def _check(self, t):
        t = np.asarray(t, float)
        if np.any(t <= 0) or np.any(t >= self.delta):
            raise ModulusDomainError(f"radius outside (0, {self.delta})")
        return t

    def _slopes(self) -> np.ndarray:
        lt, lv = np.log(self._t), np.log(self._v)
        return np.diff(lv) / np.diff(lt)

    def _eval(self, t):
        if self.form == "zero":
            return np.zeros_like(t)
        if self.form == "power":
            return self.C * t ** self.alpha
        lt, lv = np.log(self._t), np.log(self._v)
        beta0 = self._slopes()[0]
        with np.errstate(divide="ignore"):
            x = np.log(t)
        out = np.interp(x, lt, lv)
        below = x < lt[0]
        out = np.where(below, lv[0] + beta0 * (x - lt[0]), out)
        return np.exp(out)

    def __call__(self, t):
        t = self._check(t)
        out = self._eval(t)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        d = {"form": self.form, "delta": self.delta, "m": self.m, "s": self.s, "n": self.n}
        if self.form == "power":
            d.update(C=self.C, alpha=self.alpha)
        elif self.form == "table":
            d["points"] = [list(p) for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Modulus":
        d = dict(d)
        form = d.pop("form")
        pts = d.pop("points", ())
        return cls(form, points=tuple(map(tuple, pts)), **d)


def eval_rho(rho: Modulus, t):
    return rho(t)


def _rho_hat_table(rho: Modulus, t: np.ndarray) -> np.ndarray:
    """Piecewise closed form: on each log-log segment rho^(1/m) is a power of z."""
    m = rho.m
    slopes = rho._slopes()
    if slopes[0] <= 0:
        raise ValueError("A3 violated: tabulated rho does not vanish at 0")
    lt = np.log(rho._t)
    lv = np.log(rho._v)
    # breakpoints: 0, t_1..t_K ; segment k uses exponent g_k = beta_k / m
    betas = np.concatenate([[slopes[0]], slopes, [0.0]])
    anchors_t = np.concatenate([[lt[0]], lt[:-1], [lt[-1]]])
    anchors_v = np.concatenate([[lv[0]], lv[:-1], [lv[-1]]])
    edges = np.concatenate([[-np.inf], lt, [np.inf]])

    def seg_integral(k, a, b):
        # integral over log z in (a, b) of exp((lv_k + beta_k (x - lt_k)) / m) dx
        g = betas[k] / m
        base = (anchors_v[k] - betas[k] * anchors_t[k]) / m
        if g == 0:
            return np.exp(base) * (b - a)
        ea = 0.0 if np.isneginf(a) else np.exp(g * a)
        return np.exp(base) * (np.exp(g * b) - ea) / g

    x = np.log(t)
    out = np.zeros_like(x)
    for k in range(len(betas)):
        lo, hi = edges[k], edges[k + 1]
        b = np.minimum(x, hi)
        active = b > lo
        if np.any(active):
            out[active] += seg_integral(k, lo, b[active])
    return rho.s / m * out


def rho_hat(rho: Modulus, t, method: str = "exact"):
    """(s/m) * integral_0^t z^-1 rho(z)^(1/m) dz.

    ``method="quad"`` evaluates by adaptive quadrature in log z instead of the
    closed forms; it is used to cross-check them.
    """
    t = rho._check(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if rho.form == "zero":
        out = np.zeros_like(t)
    elif method == "quad":
        out = np.array([_rho_hat_quad(rho, float(tt)) for tt in t])
    elif rho.form == "power":
        out = rho.s / rho.alpha * rho.C ** (1.0 / rho.m) * t ** (rho.alpha / rho.m)
    else:
        out = _rho_hat_table(rho, t)
    return float(out[0]) if scalar else out


def _rho_hat_quad(rho: Modulus, t: float) -> float:
    if rho.form == "table" and rho._slopes()[0] <= 0:
        raise ValueError("A3 violated: tabulated rho does not vanish at 0")
    def f(x):
        with np.errstate(divide="ignore"):
            return rho._eval(np.exp(x)) ** (1.0 / rho.m)

    lt = math.log(t)
    pts = [] if rho.form != "table" else [p for p in np.log(rho._t) if p < lt]
    total, lo = 0.0, lt
    # integrate downward in decades of log z until the germ contribution is negligible
    for p in sorted(pts, reverse=True) + [None]:
        a = p if p is not None else -np.inf
        val, _ = integrate.quad(f, a, lo, epsabs=0.0, epsrel=1e-12, limit=200)
        total += val
        if p is None:
            break
        lo = p
    if not math.isfinite(total):
        raise ValueError("A3 violated: divergent rho_hat integral")
    return rho.s / rho.m * total


def check_assumptions(rho: Modulus, samples: int = 64) -> dict:
    if samples < 2:
        raise ValueError("need at least two samples")
    if rho.is_zero:
        return {"A1": True, "A2": True, "A3_monotone": True, "A3_integral": True}
    t = rho.delta * np.geomspace(1e-8, 1 - 1e-9, samples)
    v = rho._eval(t)
    slack = 1e-12
    a1 = bool(np.all(np.isfinite(v)) and np.all(np.diff(v) >= -slack * np.abs(v[1:])))
    # local log-log slope at the smallest radii decides the germ at 0
    slope = np.polyfit(np.log(t[:3]), np.log(v[:3]), 1)[0]
    a2 = bool(slope > 0 or v[0] < 1e-12)
    q = t ** (-rho.s) * v
    a3m = bool(np.all(np.diff(q) <= slack * np.abs(q[:-1])))
    # integral: successive decade contributions must shrink geometrically
    f = lambda x: rho._eval(np.exp(x)) ** (1.0 / rho.m)
    lo = math.log(rho.delta)
    incs = []
    for k in range(1, 9):
        hi, lo = lo, math.log(rho.delta) - 4.0 * k
        incs.append(integrate.quad(f, lo, hi, epsrel=1e-10)[0])
    a3i = bool(slope > 0 and incs[-1] < 0.9 * incs[-2])
    return {"A1": a1, "A2": a2, "A3_monotone": a3m, "A3_integral": a3i}


def prescribed_curvature_modulus(gamma_norm: float, p: float, s: float, n: int = 2, delta: float = 1.0) -> Modulus:
    """Power modulus ``|B_1|^(1-1/p) ||gamma||_p r^(s-n/p)`` induced by a bulk term in L^p."""
    alpha = s - n / p
    if alpha <= 0:
        raise ValueError("need p > n/s for a vanishing modulus")
    omega = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return Modulus.power(omega ** (1 - 1 / p) * gamma_norm, alpha, s, n, delta)


def rho_integral(rho: Modulus, r: float, n: int, s: float) -> float:
    """(n-s) * integral_0^r rho(t) t^(n-s-1) dt, the rho term of the monotonicity quantity."""
    if rho.is_zero:
        return 0.0
    if rho.form == "power":
        return (n - s) * rho.C * r ** (rho.alpha + n - s) / (rho.alpha + n - s)
    f = lambda x: rho._eval(np.exp(x)) * math.exp((n - s) * x)
    return (n - s) * integrate.quad(f, -np.inf, math.log(r), epsrel=1e-12, limit=200)[0]
