"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected and repeated in the terminal summary of the run.
"""
import math
import time
import warnings

import numpy as np
import pytest

from fracmin.energy import Window, energy_delta, localized_energy
from fracmin.experiments import run_experiment, single_cell_gaps, step_minimizer
from fracmin.extension import solve_extension
from fracmin.grid import CellSet, Full, GridDomain, HalfSpace, rasterize, rescale
from fracmin.kernel import DEFAULT_QUAD_TOL, KernelTable
from fracmin.modulus import Modulus, rho_hat
from fracmin.perturbation import DeformedBall, Frame, build_perturbation, check_inclusions


def test_criterion_01_oracle_equivalence(acceptance):
    t0 = time.perf_counter()
    res = run_experiment("oracle-equivalence")
    elapsed = time.perf_counter() - t0
    summ = res.summary
    ok = summ["failures"] == 0 and summ["trials"] == 50 and elapsed < 60
    assert acceptance(1, "oracle equivalence", ok,
                      f"{summ['trials']} problems, {summ['failures']} mismatches, "
                      f"max |diff| {summ['max_abs_difference']:.2e}, {elapsed:.1f} s (< 60 s)")


def test_criterion_02_energy_identities(acceptance):
    rng = np.random.default_rng(2)
    d = GridDomain.centered(2, 8, 1.0)
    K = KernelTable(d, 0.5)
    ext = HalfSpace((0.0, 1.0), 0.0)
    everything = Window.everything(d)
    big = Window.box(d, (-0.75, -0.75), (0.75, 0.75))
    small = Window.box(d, (-0.5, -0.5), (0.5, 0.5))
    dec, loc = 0.0, 0.0
    for _ in range(20):
        E = CellSet(d, rng.random(d.dims) < 0.5, ext)
        F = E.with_mask(rng.random(d.dims) < 0.5)
        r = energy_delta(E, F, everything, K)
        dec = max(dec, abs(r.delta - r.decomposition))
        G = E.with_mask(E.mask ^ (small.mask & (rng.random(d.dims) < 0.3)))
        J = lambda A, om: localized_energy(A, om, K).total
        loc = max(loc, abs((J(G, big) - J(E, big)) - (J(G, small) - J(E, small))))
    om = Window.box(d, (-0.5, -0.75), (0.75, 0.5))
    violations = 0
    for _ in range(1000):
        a, b = rng.random(d.dims) < 0.5, rng.random(d.dims) < 0.5
        J = lambda m: localized_energy(CellSet(d, m, ext), om, K).total
        lhs, rhs = J(a | b) + J(a & b), J(a) + J(b)
        violations += lhs > rhs + 1e-12 * abs(rhs)
    ok = dec <= 1e-12 and loc <= 1e-12 and violations == 0
    assert acceptance(2, "energy identities", ok,
                      f"decomposition {dec:.1e}, locality {loc:.1e} (<= 1e-12); "
                      f"submodularity violations {violations}/1000")


def test_criterion_03_scaling_law(acceptance):
    rng = np.random.default_rng(3)
    s = 0.5
    d = GridDomain.centered(2, 12, 1.0)
    E = CellSet(d, rng.random(d.dims) < 0.5, HalfSpace((0.0, 1.0), 0.0))
    om = Window.ball(d, (0.0, 0.0), 0.7)
    base = localized_energy(E, om, KernelTable(d, s)).total
    worst = 0.0
    for lam in (2.0, 4.0):
        El = rescale(E, lam)
        oml = Window.ball(El.domain, (0.0, 0.0), 0.7 * lam)
        got = localized_energy(El, oml, KernelTable(El.domain, s)).total
        worst = max(worst, abs(got / (lam ** (2 - s) * base) - 1.0))
    assert acceptance(3, "scaling law", worst <= 1e-6, f"max relative error {worst:.1e} over lambda in {{2, 4}} (<= 1e-6)")


def test_criterion_04_curvature(acceptance):
    t0 = time.perf_counter()
    res = run_experiment("curvature-scaling")
    elapsed = time.perf_counter() - t0
    summ = res.summary
    plane = summ["max_halfplane_residual"]
    fit = summ["max_exponent_error"]
    ok = plane <= 10 * DEFAULT_QUAD_TOL and fit <= 0.05 and elapsed < 120
    exps = ", ".join(f"s={k}: p={v:.3f}" for k, v in summ["exponents"].items())
    assert acceptance(4, "curvature", ok,
                      f"half-plane residual {plane:.1e} (<= {10 * DEFAULT_QUAD_TOL:.0e}); {exps} "
                      f"(|p-s| <= 0.05); {elapsed:.1f} s (< 120 s)")


def test_criterion_05_modulus_lemma(acceptance):
    rng = np.random.default_rng(5)
    forms = [Modulus.table([(0.1, 0.05), (0.5, 0.1), (1.0, 0.13)], 0.5),
             Modulus.table([(0.01, 1e-3), (0.2, 0.008), (0.9, 0.02)], 0.7, delta=1.5)]
    draws, violations = 0, 0
    for k in range(10_000):
        if k % 5 < 3:
            s = rng.uniform(0.1, 0.9)
            rho = Modulus.power(rng.uniform(0.1, 3.0), rng.uniform(0.02, s), s,
                                delta=rng.uniform(1.0, 2.0), m=rng.uniform(2 + s + 1e-3, 6.0))
        else:
            rho = forms[k % 2]
        t = rng.uniform(0, rho.delta)
        eps = rng.uniform(1e-12, 1.0)
        if not 0 < t < rho.delta:
            continue
        draws += 1
        lhs = float(rho(t * eps)) ** (1.0 / rho.m)
        violations += lhs > float(rho_hat(rho, t)) * (1 + 1e-12)
    assert acceptance(5, "modulus lemma", violations == 0, f"{violations} violations over {draws} draws")


def test_criterion_06_s_to_1_limit(acceptance):
    res = run_experiment("s-to-1-limit")
    ratio = res.summary["extrapolated_ratio"]
    rows = res.main_table[1]
    per_s = ", ".join(f"s={r[0]}: {r[3]:.4f}" for r in rows)
    assert acceptance(6, "s -> 1 perimeter limit", abs(ratio - 1) <= 0.05,
                      f"J(square)/J(disk) {per_s}; extrapolated {ratio:.4f} (within 5% of 1)")


def test_criterion_07_monotonicity(acceptance):
    res = run_experiment("monotonicity")
    summ = res.summary
    cone = summ["cone_variation"]
    incs = {k: v for k, v in summ.items() if k.endswith("min_relative_increment")}
    ok = cone <= 0.02 and all(v >= -1e-3 for v in incs.values())
    detail = ", ".join(f"{k.split('_')[0]} min increment {v:+.2e}" for k, v in incs.items())
    assert acceptance(7, "monotonicity", ok, f"cone variation {cone:.2%} (<= 2%); {detail} (>= -1e-3)")


def test_criterion_08_euler_lagrange_signs(acceptance):
    res = run_experiment("maximum-principle")
    rows = res.main_table[1]
    holds = all(r[1] for r in rows)
    worst = max(max(r[2], r[3]) / (2 * r[4]) for r in rows)
    # the two 64^2 minimizers of the monotonicity experiment as well
    for amp in (0.0, 0.25):
        m = step_minimizer(64, 0.5, 0.6, amp)
        sup, sub = single_cell_gaps(m)
        worst = max(worst, max(sup, sub) / (2 * m.quantization_bound))
    ok = holds and worst <= 1.0
    assert acceptance(8, "Euler-Lagrange sign structure", ok,
                      f"maximum principle on {sum(r[1] for r in rows)}/{len(rows)} tilted data sets; "
                      f"largest single-cell gap / (2 quantization) = {worst:.3f} (<= 1)")


def test_criterion_09_perturbation_geometry(acceptance):
    rng = np.random.default_rng(9)
    inv, fix, fd = 0.0, 0.0, 0.0
    for trial in range(10):
        R, eps = rng.uniform(1.0, 3.0), rng.uniform(0.05, 0.95) / 12
        ang = rng.uniform(0, 2 * math.pi)
        V = DeformedBall(R, eps, Frame.from_normal(rng.normal(size=2), (math.cos(ang), math.sin(ang))))
        th = rng.uniform(0, 2 * math.pi, 1000)
        v = np.stack([np.cos(th), np.sin(th)], axis=1)
        rm = V._rho_m(v)[0]
        y = V.center + (rng.uniform(0.02, 1.98, 1000) * rm)[:, None] * v
        x = V.frame.to_world(y)
        inv = max(inv, float(np.max(np.linalg.norm(V.T(V.T(x)) - x, axis=1))))
        on = V.frame.to_world(V.center + rm[:, None] * v)
        fix = max(fix, float(np.max(np.linalg.norm(V.T(on) - on, axis=1))))
        # finite differences away from the kink |y'| = eps and the ring edges
        rho = np.linalg.norm(y - V.center, axis=1)
        yp = np.abs(y[:, 0] * rm / rho)
        keep = (np.abs(yp - eps) > 1e-3) & (rho > 0.05 * rm) & (rho < 1.95 * rm)
        xs = x[keep][:100]
        J = V.DT(xs)
        step = 1e-6
        num = np.stack([(V.T(xs + step * e) - V.T(xs - step * e)) / (2 * step) for e in np.eye(2)], axis=-1)
        fd = max(fd, float(np.max(np.linalg.norm(J - num, axis=(1, 2)) / np.linalg.norm(J, axis=(1, 2)))))
    incl = 0
    for _ in range(20):
        R, eps = rng.uniform(1.0, 2.0), rng.uniform(0.05, 0.08)
        ang = rng.uniform(0, 2 * math.pi)
        nu = np.array([math.cos(ang), math.sin(ang)])
        x0 = rng.uniform(-0.5, 0.5, 2)
        half = 8.5 * eps
        cells = int(6 * half * R / eps ** 2) + 1
        d = GridDomain(2, (cells, cells), 2 * half / cells, tuple(x0 - half))
        E = CellSet(d, np.linalg.norm(d.centers() - (x0 + 2 * R * nu), axis=-1) <= 2 * R, Full())
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            sets = build_perturbation(E, x0, nu, R, eps)
        incl += all(check_inclusions(sets, E).values()) and bool(sets.A_minus.any())
    ok = inv <= 1e-12 and fix <= 1e-12 and fd <= 1e-6 and incl == 20
    assert acceptance(9, "perturbation geometry", ok,
                      f"T(T(x)) - x {inv:.1e}, fixed points {fix:.1e} (<= 1e-12); DT vs FD {fd:.1e} (<= 1e-6); "
                      f"inclusions {incl}/20")


def test_criterion_10_extension(acceptance):
    E = step_minimizer(64, 0.5, 0.6, 0.25).E
    f = solve_extension(E, M=24, s=0.5)
    excess = float(np.max(np.abs(f.values)) - 1.0)
    mp = excess <= 10 * max(f.residual, 1e-15)
    d = GridDomain(2, (512, 1), 2.0 / 512, (-1.0, -1.0 / 512))
    u = solve_extension(rasterize(HalfSpace((1.0, 0.0), 0.0), d), M=40, s=0.5).values
    odd = float(np.max(np.abs(u + u[::-1])))
    rel = run_experiment("energy-relation")
    dev = rel.summary["max_relative_deviation"]
    ok = mp and odd <= 1e-8 and dev <= 0.10 and rel.summary["sign_consistent"]
    assert acceptance(10, "extension solver", ok,
                      f"max |u| - 1 = {excess:.1e} (residual {f.residual:.1e}); odd symmetry {odd:.1e} (<= 1e-8); "
                      f"energy-relation ratios within {dev:.1%} of median c={rel.summary['median_c']:.4f} "
                      f"over {len(rel.main_table[1])} pairs (<= 10%)")
