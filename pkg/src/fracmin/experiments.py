"""Named experiments: each one is deterministic given its parameters and seed.

Every runner takes a parameter dict and returns an ``ExperimentResult`` whose
tables become CSV files. Parameters not given fall back to ``DEFAULTS``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import special

from .energy import Window, localized_energy, single_cell_drive
from .extension import energy_relation_experiment, phi_profile, solve_extension
from .geometry import density_ratio, flat_order_sequence, flatness, harnack_inclusion_check, nonlocal_mean_curvature
from .grid import Ball, CellSet, Cone, Empty, Full, GridDomain, HalfSpace, rasterize
from .kernel import KernelTable
from .mincut import build_cut_problem, maximum_principle_check, minimize
from .modulus import Modulus, prescribed_curvature_modulus
from .perturbation import euler_lagrange_residual, build_perturbation
from .reporting import dumps, write_csv


@dataclass
class ExperimentResult:
    name: str
    params: dict
    summary: dict
    tables: dict = field(default_factory=dict)  # table name -> (header, rows)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, (tname, (header, rows)) in enumerate(self.tables.items()):
            fname = f"{self.name}.csv" if i == 0 else f"{self.name}-{tname}.csv"
            paths.append(write_csv(out / fname, header, rows))
        p = out / f"{self.name}.json"
        p.write_text(dumps({"name": self.name, "params": self.params, "summary": self.summary}, indent=2) + "\n")
        paths.append(p)
        return paths

    @property
    def main_table(self):
        return next(iter(self.tables.values()))


# ---------------------------------------------------------------------------
# shared fixtures


@lru_cache(maxsize=16)
def kernel(n: int, cells: tuple, half_width: float, s: float) -> KernelTable:
    return KernelTable(GridDomain.centered(n, cells, half_width), s)


def _lower_half() -> HalfSpace:
    return HalfSpace((0.0, 1.0), 0.0)


def step_data(d: GridDomain, amp: float = 0.25) -> CellSet:
    """{y < -amp sign(x)} inside the box, the lower half-plane outside it."""
    X = d.centers()
    return CellSet(d, X[..., 1] < -amp * np.sign(X[..., 0]), _lower_half())


@lru_cache(maxsize=8)
def step_minimizer(cells: int, s: float, radius: float, amp: float):
    K = kernel(2, (cells, cells), 1.0, s)
    om = Window.ball(K.domain, (0.0, 0.0), radius)
    return minimize(build_cut_problem(K, om, step_data(K.domain, amp)))


def interface_point(E: CellSet, near) -> np.ndarray:
    """Boundary face midpoint of E closest to ``near``."""
    mids, _ = E.boundary_faces()
    if len(mids) == 0:
        raise ValueError("set has no interface")
    return mids[int(np.argmin(np.linalg.norm(mids - np.asarray(near, float), axis=1)))]


def _staircase_perimeter(mask: np.ndarray, h: float) -> float:
    p = np.pad(mask, 1)
    return sum(np.count_nonzero(np.diff(p, axis=k)) for k in range(mask.ndim)) * h ** (mask.ndim - 1)


def _extrapolate_to_one(s_values, ratios) -> float:
    x = 1.0 - np.asarray(s_values, float)
    y = np.asarray(ratios, float)
    deg = min(2, len(x) - 1)
    return float(np.polyval(np.polyfit(x, y, deg), 0.0))


def _floats(v) -> tuple:
    if isinstance(v, str):
        return tuple(float(t) for t in v.split(","))
    if isinstance(v, (int, float)):
        return (float(v),)
    return tuple(float(t) for t in v)


# ---------------------------------------------------------------------------
# 1. oracle equivalence


def brute_force_minimum(K: KernelTable, omega: Window, boundary: CellSet, gamma=None, obstacle=None) -> float:
    """Minimum of J(.; omega) (+ bulk term) over all masks of the window cells, by enumeration."""
    d = K.domain
    W = K.dense()
    om = omega.mask.ravel()
    free = np.flatnonzero(om)
    k = len(free)
    if k > 20:
        raise ValueError("too many free cells for enumeration")
    codes = np.arange(2 ** k, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(k)) & 1).astype(bool)
    X = np.broadcast_to(boundary.mask.ravel(), (len(codes), d.size)).copy()
    X[:, free] = bits
    if obstacle is not None:
        X = X[np.all(X[:, obstacle.mask.ravel() & om], axis=1)]
    tE = K.tail(boundary.exterior).ravel()
    tEc = K.tail(boundary.exterior.complement()).ravel()
    Xf = X.astype(float)
    out = 1.0 - Xf
    a = Xf * om
    J = np.einsum("mi,mi->m", a @ W, out) + a @ tEc
    J += np.einsum("mi,mi->m", (Xf * ~om) @ W, out * om) + (out * om) @ tE
    if gamma is not None:
        J += a @ np.asarray(gamma, float).ravel() * d.cell_volume
    return float(J.min())


def _random_oracle_problem(rng, s_values, cells, max_free):
    s = float(s_values[rng.integers(len(s_values))])
    K = kernel(2, (cells, cells), 1.0, s)
    d = K.domain
    k = int(rng.integers(4, max_free + 1))
    om = np.zeros(d.size, bool)
    om[rng.choice(d.size, k, replace=False)] = True
    omega = Window.from_mask(d, om.reshape(d.dims))
    lines = [-1.0 + j * d.h for j in range(1, cells)]
    choice = int(rng.integers(4))
    if choice == 0:
        ext = Empty()
    elif choice == 1:
        ext = Full()
    else:
        e = [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)][int(rng.integers(4))]
        c = float(lines[int(rng.integers(len(lines)))])
        ext = HalfSpace(e, c * (e[0] + e[1]))
    boundary = CellSet(d, rng.random(d.dims) < 0.5, ext)
    gamma = rng.uniform(-2.0, 2.0, d.dims) if rng.random() < 0.5 else None
    obstacle = None
    if rng.random() < 0.35:
        obstacle = CellSet(d, (rng.random(d.dims) < 0.3) & omega.mask, Empty())
    return s, K, omega, boundary, gamma, obstacle


def oracle_equivalence(params: dict) -> ExperimentResult:
    rng = np.random.default_rng(params["seed"])
    rows = []
    worst = 0.0
    failures = 0
    for t in range(int(params["trials"])):
        s, K, omega, boundary, gamma, obstacle = _random_oracle_problem(
            rng, _floats(params["s"]), int(params["cells"]), int(params["max_free"]))
        res = minimize(build_cut_problem(K, omega, boundary, gamma, obstacle))
        brute = brute_force_minimum(K, omega, boundary, gamma, obstacle)
        gap = res.energy - brute
        ok = abs(gap) <= res.quantization_bound + 1e-12 * max(1.0, abs(brute))
        failures += not ok
        worst = max(worst, abs(gap))
        rows.append((t, s, omega.count, boundary.exterior.kind, gamma is not None, obstacle is not None,
                     res.energy, brute, gap, res.quantization_bound, ok))
    header = ("trial", "s", "free_cells", "exterior", "gamma", "obstacle", "mincut_energy", "brute_energy",
              "difference", "quantization_bound", "ok")
    return ExperimentResult("oracle-equivalence", params,
                            {"trials": len(rows), "failures": failures, "max_abs_difference": worst},
                            {"trials": (header, rows)})


# ---------------------------------------------------------------------------
# 2. curvature scaling


def ball_curvature(s: float, R: float, cells: int, half_width: float, cut_fraction: float = 0.25):
    """Curvature of B_R at its top point on a grid fixed across R.

    A center-rasterized circle is a staircase, flat below the scale sqrt(R h),
    so the principal-value cutoffs scale with R rather than with h.
    """
    K = kernel(2, (cells, cells), half_width, s)
    B = rasterize(Ball((0.0, 0.0), R), K.domain, exterior=Empty())
    return nonlocal_mean_curvature(B, interface_point(B, (0.0, R)), K, delta_cut=cut_fraction * R)


def exact_ball_curvature(s: float, R: float) -> float:
    """(1-s) (2/s) (2R)^(-s) int_0^pi sin^(-s): opposite rays through a boundary point of a disk."""
    return (1 - s) * 2 / s * (2 * R) ** (-s) * float(special.beta((1 - s) / 2, 0.5))


def halfplane_curvature(s: float, cells: int):
    K = kernel(2, (cells, cells), 1.0, s)
    E = rasterize(_lower_half(), K.domain)
    return nonlocal_mean_curvature(E, interface_point(E, (0.0, 0.0)), K)


def exponent_fit(radii, values) -> float:
    """p in H = c r^(-p) by least squares in log-log coordinates."""
    return float(-np.polyfit(np.log(radii), np.log(np.abs(values)), 1)[0])


def curvature_scaling(params: dict) -> ExperimentResult:
    cells = int(params["cells"])
    radii = _floats(params["radii"])
    rows, fits, planes = [], [], []
    for s in _floats(params["s"]):
        H = []
        for R in radii:
            rep = ball_curvature(s, R, cells, float(params["half_width"]))
            H.append(rep.extrapolated)
            rows.append((s, R, rep.extrapolated, rep.value, exact_ball_curvature(s, R)))
        p = exponent_fit(radii, H)
        fits.append((s, p, abs(p - s)))
        hp = halfplane_curvature(s, int(params["halfplane_cells"]))
        planes.append((s, hp.extrapolated, hp.value))
    summary = {"exponents": {str(s): p for s, p, _ in fits},
               "max_exponent_error": max(e for *_, e in fits),
               "max_halfplane_residual": max(abs(v) for _, v, _ in planes)}
    return ExperimentResult("curvature-scaling", params, summary, {
        "ball": (("s", "R", "H_extrapolated", "H_cutoff", "H_exact"), rows),
        "fit": (("s", "p", "abs_p_minus_s"), fits),
        "halfplane": (("s", "H_extrapolated", "H_cutoff"), planes)})


# ---------------------------------------------------------------------------
# 3. density profile


def density_profile(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    K = kernel(2, (cells, cells), 1.0, s)
    d = K.domain
    om = Window.ball(d, (0.0, 0.0), 0.6)
    corner = Cone((0.0, 0.0), (-math.sqrt(0.5), -math.sqrt(0.5)), 0.75 * math.pi)
    cases = {"half-plane": rasterize(_lower_half(), d), "corner": rasterize(corner, d)}
    radii = [k * d.h for k in (2, 3, 4, 5, 6)]
    rows, ratios = [], []
    for name, data in cases.items():
        E = minimize(build_cut_problem(K, om, data)).E
        mids, _ = E.boundary_faces()
        fits = np.all(np.abs(mids) + radii[-1] <= 1.0, axis=1) & (np.linalg.norm(mids, axis=1) < 0.6)
        pts = mids[fits]
        for x0 in pts[:: max(1, len(pts) // 10)]:
            for r in radii:
                v = density_ratio(E, x0, r)
                ratios.append(v)
                rows.append((name, float(x0[0]), float(x0[1]), r, v))
    return ExperimentResult("density-profile", params,
                            {"min_ratio": min(ratios), "max_ratio": max(ratios), "samples": len(rows)},
                            {"density": (("case", "x", "y", "r", "density"), rows)})


# ---------------------------------------------------------------------------
# 4. Harnack sweep


def harnack_sweep(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    E = step_minimizer(cells, s, 0.6, float(params["amp"])).E
    x0 = interface_point(E, (0.0, 0.0))
    r = float(params["r"])
    width = flatness(E, x0, r).width
    rows = []
    for a in _floats(params["a"]):
        rep = harnack_inclusion_check(E, x0, a, 0.5, r=r)
        rows.append((a, rep.largest_delta0, rep.upper_ok, rep.lower_ok))
    return ExperimentResult("harnack-sweep", params,
                            {"flatness_width": width, "x0": x0.tolist(),
                             "largest_delta0": {str(a): d0 for a, d0, *_ in rows}},
                            {"sweep": (("a", "largest_delta0", "upper_ok_at_half", "lower_ok_at_half"), rows)})


# ---------------------------------------------------------------------------
# 5. monotonicity


def cone_profile(s: float = 0.5, cells: int = 4096, M: int = 54, radii=None):
    """Phi for the half-plane {x < 0}, solved on a strip that is invariant along y."""
    d = GridDomain(2, (cells, 1), 2.0 / cells, (-1.0, -1.0 / cells))
    E = rasterize(HalfSpace((1.0, 0.0), 0.0), d)
    f = solve_extension(E, M=M, s=s)
    radii = np.linspace(0.2, 0.4, 9) if radii is None else radii
    return phi_profile(f, (0.0, 0.0), Modulus.zero(s), radii)


def minimizer_profile(E: CellSet, s: float, radii, M: int = 24):
    f = solve_extension(E, M=M, s=s)
    return phi_profile(f, interface_point(E, (0.0, 0.0)), Modulus.zero(s), radii)


def min_relative_increment(phi) -> float:
    phi = np.asarray(phi, float)
    return float(np.min(np.diff(phi) / phi[:-1]))


def monotonicity(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    rows = []
    cone = cone_profile(s, int(params["cone_cells"]))
    for r, p, e, q in zip(cone.radii, cone.phi, cone.energy_term, cone.rho_term):
        rows.append(("cone", r, p, e, q))
    phi = np.asarray(cone.phi)
    summary = {"cone_variation": float((phi.max() - phi.min()) / phi.mean())}
    radii = np.round(np.arange(0.2, 0.4001, 0.05), 10)
    K = kernel(2, (cells, cells), 1.0, s)
    om = Window.ball(K.domain, (0.0, 0.0), 0.6)
    mins = {"halfplane-minimizer": minimize(build_cut_problem(K, om, rasterize(_lower_half(), K.domain))).E,
            "step-minimizer": step_minimizer(cells, s, 0.6, 0.25).E}
    for name, E in mins.items():
        prof = minimizer_profile(E, s, radii)
        for r, p, e, q in zip(prof.radii, prof.phi, prof.energy_term, prof.rho_term):
            rows.append((name, r, p, e, q))
        summary[f"{name}_min_relative_increment"] = min_relative_increment(prof.phi)
    return ExperimentResult("monotonicity", params, summary,
                            {"profiles": (("case", "r", "phi", "energy_term", "rho_term"), rows)})


# ---------------------------------------------------------------------------
# 6. energy relation


def perturbation_pairs(E: CellSet, omega: Window, rng, count: int):
    """Blob perturbations of E inside omega: alternately flipped, added and removed."""
    X = E.domain.centers()
    out = []
    for k in range(count):
        R = rng.uniform(0.15, 0.3)
        c = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-R / 2, R / 2)])
        blob = (np.linalg.norm(X - c, axis=-1) < R) & omega.mask
        kind = ("xor", "union", "minus")[k % 3]
        mask = {"xor": E.mask ^ blob, "union": E.mask | blob, "minus": E.mask & ~blob}[kind]
        out.append((kind, E.with_mask(mask)))
    return out


def energy_relation(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    rng = np.random.default_rng(params["seed"])
    K = kernel(2, (cells, cells), 1.0, s)
    E = rasterize(_lower_half(), K.domain)
    om = Window.ball(K.domain, (0.0, 0.0), 0.6)
    rows = []
    for k, (kind, F) in enumerate(perturbation_pairs(E, om, rng, int(params["pairs"]))):
        rel = energy_relation_experiment(E, F, om, K, M=int(params["M"]), pad=int(params["pad"]),
                                         extrapolate=bool(params["extrapolate"]))
        rows.append((k, kind, rel.lhs, rel.rhs, rel.c))
    c = np.array([r[4] for r in rows])
    med = float(np.median(c))
    return ExperimentResult("energy-relation", params,
                            {"median_c": med, "max_relative_deviation": float(np.max(np.abs(c / med - 1.0))),
                             "sign_consistent": bool(all((r[2] > 0) == (r[3] > 0) for r in rows))},
                            {"pairs": (("pair", "kind", "lhs", "rhs", "c"), rows)})


# ---------------------------------------------------------------------------
# 7. Euler-Lagrange residuals


def _el_configs():
    """(label, kind, inward normal, R, x0 offset along the interface, curvature of the interface)."""
    out = []
    normals = [(0.0, -1.0), (0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)]
    k = 0
    for R in (1.0, 1.5):
        for shift in (0.0, 0.1):
            for nu in normals:
                if k < 10:
                    out.append((f"flat-{k}", "minimizer", nu, R, shift, 0.0))
                k += 1
    out.append(("bulge", "witness", (0.0, -1.0), 1.0, 0.0, 0.15))
    out.append(("dent", "witness", (0.0, -1.0), 1.0, 0.0, -0.15))
    return out


def _el_set(d: GridDomain, nu, shift, curv):
    """E lies on the side ``nu`` points into; its interface is bent by ``curv x'^2 / 2``."""
    nu = np.asarray(nu, float)
    X = d.centers()
    t = np.array([-nu[1], nu[0]])
    along = X @ t - shift
    depth = X @ nu  # positive inside E for a flat interface
    mask = depth > -0.5 * curv * along ** 2
    ext = HalfSpace(tuple(-nu), 0.0)
    return CellSet(d, mask, ext)


def el_residuals(params: dict) -> ExperimentResult:
    s = float(params["s"])
    half = float(params["half_width"])
    delta, eps_star = float(params["delta"]), float(params["eps_star"])
    rho = Modulus.zero(s)
    rows = []
    per_h = {}
    for cells in (int(c) for c in _floats(params["cells"])):
        K = kernel(2, (cells, cells), half, s)
        d = K.domain
        for label, kind, nu, R, shift, curv in _el_configs():
            E = _el_set(d, nu, shift, curv)
            t = np.array([-nu[1], nu[0]])
            x0 = interface_point(E, shift * t)
            best = None
            for e in eps_star * (1 + np.arange(1, int(params["eps_count"]) + 1) / (int(params["eps_count"]) + 1)):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    sets = build_perturbation(E, x0, nu, R, float(e), check=kind == "minimizer")
                if not sets.A.any():
                    continue
                res = euler_lagrange_residual(E, sets, delta, rho, K)
                if best is None or res.ratio < best.ratio:
                    best = res
            if best is None:
                continue
            rows.append((label, kind, d.h, best.eps, best.lhs, best.rhs_shape, best.ratio))
            if kind == "minimizer":
                per_h[d.h] = max(per_h.get(d.h, -math.inf), best.ratio)
    hs = sorted(per_h, reverse=True)
    summary = {"max_ratio_by_h": {format(h, ".17g"): per_h[h] for h in hs}}
    if len(hs) >= 2:
        summary["refinement_ratio"] = per_h[hs[-1]] / per_h[hs[0]] if per_h[hs[0]] != 0 else math.nan
    return ExperimentResult("el-residuals", params, summary,
                            {"residuals": (("config", "kind", "h", "eps", "lhs", "rhs_shape", "ratio"), rows)})


# ---------------------------------------------------------------------------
# 8. maximum principle


def tilted_minimizer(theta: float, s: float, cells: int, offset: float = 0.05):
    K = kernel(2, (cells, cells), 1.0, s)
    e = np.array([math.sin(theta), math.cos(theta)])
    H = HalfSpace.through((0.0, offset), e)
    om = Window.ball(K.domain, (0.0, 0.0), 0.6)
    return H, minimize(build_cut_problem(K, om, rasterize(H, K.domain)))


def single_cell_gaps(result) -> tuple[float, float]:
    """Largest supersolution and subsolution gap over single free cells (rho = 0)."""
    P = result.problem
    E = result.E
    D = single_cell_drive(E, P.K)
    om = P.omega.mask
    if P.gamma is not None:
        D = D - P.gamma * P.K.domain.cell_volume
    sup = float(D[om & ~E.mask].max(initial=-math.inf))
    sub = float((-D[om & E.mask]).max(initial=-math.inf))
    return sup, sub


def maximum_principle(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    rows = []
    for th in _floats(params["angles"]):
        H, res = tilted_minimizer(th, s, cells)
        sup, sub = single_cell_gaps(res)
        rows.append((th, maximum_principle_check(res, H), sup, sub, res.quantization_bound))
    return ExperimentResult("maximum-principle", params,
                            {"all_hold": all(r[1] for r in rows),
                             "max_gap": max(max(r[2], r[3]) for r in rows)},
                            {"tilts": (("theta", "maximum_principle", "super_gap", "sub_gap", "quantization_bound"), rows)})


# ---------------------------------------------------------------------------
# 9. s -> 1 limit


def shape_mask(d: GridDomain, shape: str) -> np.ndarray:
    X = d.centers()
    if shape == "square":
        return np.all(np.abs(X) < 0.5, axis=-1)
    if shape == "rectangle":
        return (np.abs(X[..., 0]) < 0.5) & (np.abs(X[..., 1]) < 0.25)
    raise ValueError(f"unknown shape {shape!r}")


def equal_perimeter_disk(d: GridDomain, perimeter: float) -> np.ndarray:
    """Center-rasterized disk whose staircase perimeter equals ``perimeter``.

    Returns the middle of the radius interval with exact equality.
    """
    X = np.linalg.norm(d.centers(), axis=-1)
    r0 = perimeter / (2 * math.pi) * math.pi / 4  # the staircase of a disk is 4/pi longer
    hits = [r for r in np.linspace(0.8 * r0, 1.2 * r0, 4001)
            if abs(_staircase_perimeter(X < r, d.h) - perimeter) < 1e-9]
    if not hits:
        raise ArithmeticError("no center-rasterized disk matches the perimeter")
    return X < 0.5 * (hits[0] + hits[-1])


def s_to_1_limit(params: dict) -> ExperimentResult:
    cells = int(params["cells"])
    d = GridDomain.centered(2, cells, 1.0)
    m = shape_mask(d, params["shape"])
    disk = equal_perimeter_disk(d, _staircase_perimeter(m, d.h))
    om = Window.everything(d)
    rows = []
    for s in _floats(params["s"]):
        K = kernel(2, (cells, cells), 1.0, s)
        Js = localized_energy(CellSet(d, m, Empty()), om, K).total
        Jd = localized_energy(CellSet(d, disk, Empty()), om, K).total
        rows.append((s, Js, Jd, Js / Jd))
    ext = _extrapolate_to_one([r[0] for r in rows], [r[3] for r in rows])
    return ExperimentResult("s-to-1-limit", params,
                            {"extrapolated_ratio": ext, "staircase_perimeter": _staircase_perimeter(m, d.h)},
                            {"ratios": (("s", "J_shape", "J_disk", "ratio"), rows)})


# ---------------------------------------------------------------------------
# 10. flatness decay


def flatness_decay(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    E = step_minimizer(cells, s, 0.6, float(params["amp"])).E
    x0 = interface_point(E, (0.0, 0.0))
    alpha = float(params["alpha"])
    r0 = 4 * E.domain.h
    room = float(min(np.min(x0 - E.domain.lower), np.min(E.domain.upper - x0)))
    k = int(math.floor(math.log2(room / r0)))
    seq = flat_order_sequence(E, x0, k, lambda t: t ** alpha, r0)
    scales = [r0 * 2 ** l for l in range(k + 1)]
    rows = list(zip(scales, seq.widths, seq.bounds))
    pos = [(sc, w) for sc, w, _ in rows if w > 0]
    slope = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0]) if len(pos) >= 2 else math.nan
    return ExperimentResult("flatness-decay", params,
                            {"x0": x0.tolist(), "k": k, "holds": seq.holds, "witness": seq.witness,
                             "width_scale_slope": slope},
                            {"widths": (("scale", "width", "bound"), rows)})


# ---------------------------------------------------------------------------
# 11. obstacle problem


def obstacle_problem(s: float, cells: int, obstacle_center=(0.0, 0.05), obstacle_radius=0.25):
    K = kernel(2, (cells, cells), 1.0, s)
    d = K.domain
    om = Window.ball(d, (0.0, 0.0), 0.6)
    data = rasterize(HalfSpace((0.0, 1.0), -0.25), d)
    L = rasterize(Ball(obstacle_center, obstacle_radius), d, exterior=Empty())
    res = minimize(build_cut_problem(K, om, data, obstacle=L))
    return K, om, L, res


def obstacle(params: dict) -> ExperimentResult:
    s, cells = float(params["s"]), int(params["cells"])
    rng = np.random.default_rng(params["seed"])
    K, om, L, res = obstacle_problem(s, cells)
    E = res.E
    J = lambda A: localized_energy(A, om, K).total
    X = K.domain.centers()
    JE, JL = J(E), J(L)
    rows = []
    for k in range(int(params["samples"])):
        c = rng.uniform(-0.3, 0.3, 2)
        blob = (np.linalg.norm(X - c, axis=-1) < rng.uniform(0.05, 0.25)) & om.mask
        F = E.with_mask(E.mask ^ blob)
        FuL, FnL = E.with_mask(F.mask | L.mask), L.with_mask(F.mask & L.mask)
        JF, Ju, Jn = J(F), J(FuL), J(FnL)
        rows.append((k, JE, JF, Ju, Jn, JL,
                     JE <= Ju + res.quantization_bound,
                     Ju + Jn <= JF + JL + 1e-12,
                     JE - JF <= JL - Jn + res.quantization_bound + 1e-12))
    contact = int(np.count_nonzero(E.boundary_cells() & L.mask))
    summary = {"contains_obstacle": bool(np.all(E.mask[L.mask & om.mask])), "contact_cells": contact,
               "violations": int(sum(not all(r[6:]) for r in rows))}
    return ExperimentResult("obstacle", params, summary, {"chain": (
        ("sample", "J_E", "J_F", "J_F_union_L", "J_F_cap_L", "J_L", "minimal", "submodular", "chain"), rows)})


# ---------------------------------------------------------------------------
# 12. prescribed non-local mean curvature


def prescribed_problem(s: float, cells: int, g0: float):
    K = kernel(2, (cells, cells), 1.0, s)
    d = K.domain
    om = Window.ball(d, (0.0, 0.0), 0.6)
    X = d.centers()
    gamma = np.where(np.linalg.norm(X, axis=-1) < 0.3, g0, 0.0)
    res = minimize(build_cut_problem(K, om, rasterize(_lower_half(), d), gamma=gamma))
    return K, om, gamma, res


def prescribed_curvature(params: dict) -> ExperimentResult:
    s, cells, p = float(params["s"]), int(params["cells"]), float(params["p"])
    rng = np.random.default_rng(params["seed"])
    K, om, gamma, res = prescribed_problem(s, cells, float(params["g0"]))
    d = K.domain
    norm_p = float((np.sum(np.abs(gamma) ** p) * d.cell_volume) ** (1 / p))
    rho = prescribed_curvature_modulus(norm_p, p, s, n=2)
    E = res.E
    X = d.centers()
    rows = []
    for k in range(int(params["samples"])):
        r = rng.uniform(0.1, 0.3)
        x0 = rng.uniform(-0.3, 0.3, 2) * (0.6 - r) / 0.3
        inner = np.linalg.norm(X - x0, axis=-1) < r - d.h * math.sqrt(2) / 2
        blob = inner & (rng.random(d.dims) < 0.5) & om.mask
        F = E.with_mask(E.mask ^ blob)
        dJ = localized_energy(E, om, K).total - localized_energy(F, om, K).total
        bound = float(rho(r)) * r ** (2 - s)
        rows.append((k, r, dJ, bound, dJ / bound, dJ <= bound + res.quantization_bound))
    return ExperimentResult("prescribed-curvature", params,
                            {"gamma_norm_p": norm_p, "alpha": rho.alpha,
                             "max_ratio": max(r[4] for r in rows), "violations": sum(not r[5] for r in rows)},
                            {"samples": (("sample", "r", "J_E_minus_J_F", "rho_r_r_n_minus_s", "ratio", "ok"), rows)})


# ---------------------------------------------------------------------------
# registry

DEFAULTS = {
    "oracle-equivalence": {"trials": 50, "s": (0.3, 0.5, 0.7), "cells": 6, "max_free": 16},
    "curvature-scaling": {"s": (0.3, 0.5, 0.7), "radii": (0.5, 1.0, 2.0), "cells": 256, "half_width": 4.0,
                          "halfplane_cells": 64},
    "density-profile": {"s": 0.5, "cells": 24},
    "harnack-sweep": {"s": 0.5, "cells": 64, "amp": 0.25, "r": 0.5, "a": (0.02, 0.05, 0.1, 0.2, 0.4)},
    "monotonicity": {"s": 0.5, "cells": 64, "cone_cells": 4096},
    "energy-relation": {"s": 0.5, "cells": 64, "pairs": 10, "M": 24, "pad": 16, "extrapolate": True},
    "el-residuals": {"s": 0.5, "cells": (256, 512), "half_width": 0.75, "delta": 0.6, "eps_star": 0.035,
                     "eps_count": 4},
    "maximum-principle": {"s": 0.5, "cells": 16, "angles": (0.15, 0.35, 0.6, 0.85, 1.2)},
    "s-to-1-limit": {"shape": "square", "s": (0.8, 0.9, 0.95), "cells": 128},
    "flatness-decay": {"s": 0.5, "cells": 64, "amp": 0.25, "alpha": 0.25},
    "obstacle": {"s": 0.5, "cells": 32, "samples": 40},
    "prescribed-curvature": {"s": 0.5, "cells": 32, "g0": 2.0, "p": 8.0, "samples": 40},
}

RUNNERS = {
    "oracle-equivalence": oracle_equivalence,
    "curvature-scaling": curvature_scaling,
    "density-profile": density_profile,
    "harnack-sweep": harnack_sweep,
    "monotonicity": monotonicity,
    "energy-relation": energy_relation,
    "el-residuals": el_residuals,
    "maximum-principle": maximum_principle,
    "s-to-1-limit": s_to_1_limit,
    "flatness-decay": flatness_decay,
    "obstacle": obstacle,
    "prescribed-curvature": prescribed_curvature,
}


def run_experiment(name: str, params: dict | None = None, seed: int = 0) -> ExperimentResult:
    if name not in RUNNERS:
        raise KeyError(name)
    merged = dict(DEFAULTS[name])
    merged.update(params or {})
    merged["seed"] = int(merged.get("seed", seed))
    return RUNNERS[name](merged)
