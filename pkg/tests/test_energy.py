import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracmin.energy import (Window, almost_minimality_residual, energy_delta, localized_energy, single_cell_drive,
                            subsolution_gap, supersolution_gap)
from fracmin.grid import CellSet, Full, GridDomain, HalfSpace, full, rasterize, rescale
from fracmin.kernel import KernelTable, interaction
from fracmin.mincut import build_cut_problem, minimize
from fracmin.modulus import Modulus

S = 0.5
D6 = GridDomain.centered(2, 6, 0.75)
EXT = HalfSpace((0.0, 1.0), 0.0)


@pytest.fixture(scope="module")
def K6():
    return KernelTable(D6, S)


def brute_energy(E, omega, K):
    """J_s(E; Omega) straight from the definition with L_s from the kernel's interaction()."""
    m, om = E.mask, omega.mask
    ext, extc = E.exterior, E.exterior.complement()
    a = interaction(m & om, ~m, K, B_ext=extc)
    b = interaction(m & ~om, ~m & om, K) + float(K.tail(ext)[~m & om].sum())
    return a + b


bits = st.integers(0, 2**36 - 1).map(lambda b: np.array([(b >> k) & 1 for k in range(36)], bool).reshape(6, 6))


def test_energy_matches_definition(K6):
    rng = np.random.default_rng(0)
    om = Window.ball(D6, (0.0, 0.0), 0.6)
    for _ in range(10):
        E = CellSet(D6, rng.random(D6.dims) < 0.5, EXT)
        rep = localized_energy(E, om, K6)
        assert rep.total == rep.term_in_out + rep.term_out_in
        assert rep.total == pytest.approx(brute_energy(E, om, K6), rel=1e-13)


def test_full_set_has_zero_energy(K6):
    assert localized_energy(full(D6), Window.everything(D6), K6).total == 0.0


def test_halfplane_energy_positive():
    d = GridDomain.centered(2, 32, 1.0)
    K = KernelTable(d, S)
    H = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
    assert localized_energy(H, Window.ball(d, (0.0, 0.0), 1.0), K).total > 0


@given(bits)
def test_complement_symmetry(K6, m):
    om = Window.box(D6, (-0.5, -0.5), (0.5, 0.5))
    E = CellSet(D6, m, EXT)
    a = localized_energy(E, om, K6).total
    b = localized_energy(E.complement(), om, K6).total
    assert a == pytest.approx(b, rel=1e-14, abs=1e-15)


def test_decomposition_identity_random_pairs(K6):
    rng = np.random.default_rng(1)
    om = Window.everything(D6)
    for _ in range(20):
        E = CellSet(D6, rng.random(D6.dims) < 0.5, EXT)
        F = E.with_mask(rng.random(D6.dims) < 0.5)
        r = energy_delta(E, F, om, K6)
        assert abs(r.delta - r.decomposition) <= 1e-12


def test_energy_delta_trivial_and_errors(K6):
    E = CellSet(D6, np.eye(6, dtype=bool), EXT)
    r = energy_delta(E, E, Window.everything(D6), K6)
    assert r.delta == 0 and r.cross == 0 and r.super_part == 0 and r.sub_part == 0
    F = E.with_mask(~E.mask)
    with pytest.raises(ValueError):
        energy_delta(E, F, Window.box(D6, (-0.5, -0.5), (0.5, 0.5)), K6)
    with pytest.raises(ValueError):
        energy_delta(E, CellSet(D6, E.mask, Full()), Window.everything(D6), K6)


def test_locality(K6):
    rng = np.random.default_rng(2)
    big = Window.box(D6, (-0.75, -0.75), (0.75, 0.75))
    small = Window.box(D6, (-0.5, -0.5), (0.5, 0.5))
    for _ in range(20):
        E = CellSet(D6, rng.random(D6.dims) < 0.5, EXT)
        m = E.mask.copy()
        flip = small.mask & (rng.random(D6.dims) < 0.3)
        F = E.with_mask(m ^ flip)
        assert abs(energy_delta(E, F, big, K6).delta - energy_delta(E, F, small, K6).delta) <= 1e-12


def test_submodularity(K6):
    rng = np.random.default_rng(3)
    om = Window.box(D6, (-0.5, -0.75), (0.75, 0.5))
    worst = -np.inf
    for _ in range(1000):
        a, b = rng.random(D6.dims) < 0.5, rng.random(D6.dims) < 0.5
        J = lambda m: localized_energy(CellSet(D6, m, EXT), om, K6).total
        lhs, rhs = J(a | b) + J(a & b), J(a) + J(b)
        worst = max(worst, (lhs - rhs) / max(rhs, 1e-300))
    assert worst <= 1e-10


@pytest.mark.parametrize("lam", [2.0, 4.0])
def test_scaling_law(K6, lam):
    rng = np.random.default_rng(4)
    E = CellSet(D6, rng.random(D6.dims) < 0.5, EXT)
    om = Window.ball(D6, (0.0, 0.0), 0.5)
    El = rescale(E, lam)
    oml = Window.ball(El.domain, (0.0, 0.0), 0.5 * lam)
    assert np.array_equal(oml.mask, om.mask)
    Kl = KernelTable(El.domain, S)
    got = localized_energy(El, oml, Kl).total
    assert got == pytest.approx(lam ** (2 - S) * localized_energy(E, om, K6).total, rel=1e-12)


def test_window_validation():
    with pytest.raises(ValueError):
        Window.ball(D6, (0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        Window.box(D6, (-1.0, 0.0), (0.0, 0.5))
    other = GridDomain.centered(2, 4, 0.75)
    with pytest.raises(ValueError):
        localized_energy(full(other), Window.everything(D6), KernelTable(D6, S))


# gaps -----------------------------------------------------------------------------


def test_gaps_with_empty_A(K6):
    E = rasterize(EXT, D6)
    rho = Modulus.power(1.0, 0.25, S)
    A = np.zeros(D6.dims, bool)
    for gap in (supersolution_gap, subsolution_gap):
        assert gap(E, A, (0.0, 0.0), 0.5, rho, K6) == pytest.approx(-rho(0.5) * 0.5 ** 1.5, rel=1e-15)


def test_gap_domain_errors(K6):
    E = rasterize(EXT, D6)
    z = Modulus.zero(S)
    inside = E.mask.copy()
    with pytest.raises(ValueError):
        supersolution_gap(E, inside, (0.0, 0.0), 2.0, z, K6)
    with pytest.raises(ValueError):
        subsolution_gap(E, ~E.mask, (0.0, 0.0), 2.0, z, K6)


def test_halfplane_symmetric_cell_gap_vanishes_with_box_size():
    """A cell straddling nothing but mirrored about the plane sees zero net drive as the box grows."""
    gaps = []
    for cells in (8, 16, 32):
        d = GridDomain.centered(2, cells, 1.0)
        K = KernelTable(d, S)
        E = rasterize(HalfSpace((0.0, 1.0), 0.0), d)
        D = single_cell_drive(E, K)
        i = cells // 2
        # cells at y = +h/2 (outside) and y = -h/2 (inside) are mirror images; their drives cancel
        gaps.append(abs(D[i, i] + D[i, i - 1]) / abs(D[i, i]))
    assert gaps[-1] < 1e-10


def test_island_has_large_subsolution_gap():
    d = GridDomain.centered(2, 16, 1.0)
    K = KernelTable(d, S)
    m = rasterize(HalfSpace((0.0, 1.0), -0.5), d).mask.copy()
    m[8, 12] = True
    E = CellSet(d, m, HalfSpace((0.0, 1.0), -0.5))
    A = np.zeros(d.dims, bool)
    A[8, 12] = True
    gap = subsolution_gap(E, A, (0.06, 0.56), 0.3, Modulus.zero(S), K)
    assert gap > 0.5 * K.p_cell * K.scale
    res = almost_minimality_residual(E, (0.06, 0.56), 0.3, Modulus.zero(S), K)
    assert res.worst_gap >= gap - 1e-12 and res.kind == "sub"


def test_minimizer_has_nonpositive_gaps():
    d = GridDomain.centered(2, 16, 1.0)
    K = KernelTable(d, S)
    data = CellSet(d, rasterize(HalfSpace((0.0, 1.0), 0.0), d).mask, HalfSpace((0.0, 1.0), 0.0))
    data = data.with_mask(data.mask ^ (np.indices(d.dims).sum(0) % 3 == 0))
    om = Window.ball(d, (0.0, 0.0), 0.6)
    res = minimize(build_cut_problem(K, om, data))
    tol = res.quantization_bound
    r = almost_minimality_residual(res.E, (0.0, 0.0), 0.6, Modulus.zero(S), K, budget=4000, omega=om)
    assert r.worst_gap <= tol
    assert r.samples >= om.count


def test_equivalence_of_delta_and_gaps(K6):
    """energy_delta <= 0 for F = E + A+ iff the supersolution gap of A+ is <= 0 (and mirror)."""
    rng = np.random.default_rng(5)
    om = Window.everything(D6)
    z = Modulus.zero(S)
    for _ in range(50):
        E = CellSet(D6, rng.random(D6.dims) < 0.5, EXT)
        A = (rng.random(D6.dims) < 0.2) & ~E.mask
        if A.any():
            dlt = energy_delta(E, E.with_mask(E.mask | A), om, K6).delta
            assert dlt == pytest.approx(-supersolution_gap(E, A, (0.0, 0.0), 2.0, z, K6), abs=1e-12)
        B = (rng.random(D6.dims) < 0.2) & E.mask
        if B.any():
            dlt = energy_delta(E, E.with_mask(E.mask & ~B), om, K6).delta
            assert dlt == pytest.approx(-subsolution_gap(E, B, (0.0, 0.0), 2.0, z, K6), abs=1e-12)


def test_report_json(K6):
    import json
    rep = localized_energy(rasterize(EXT, D6), Window.everything(D6), K6)
    assert set(json.loads(rep.to_json())) == {"total", "term_in_out", "term_out_in", "tail_share"}
