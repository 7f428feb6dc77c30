"""Exact minimization of the discrete J_s energy by max-flow / min-cut.

Free cells are the cells of the window. With x_i = 1 meaning "cell i in E",

    J(E) = sum_{i<j free} w_ij [x_i != x_j] + sum_i x_i c1_i + (1 - x_i) c0_i

where c1_i collects the interaction with fixed complement material (cells
outside the window and the exterior complement) plus the bulk term, and c0_i
the interaction with fixed material of E. All w_ij > 0, so the energy is
submodular and the cut is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .energy import Window, localized_energy
from .grid import CellSet, Exterior, HalfSpace
from .kernel import KernelTable
from .maxflow import build_graph, max_flow

DEFAULT_SCALE = 2 ** 32
_CAP_LIMIT = 2 ** 62


@dataclass(eq=False)
class CutProblem:
    K: KernelTable
    omega: Window
    boundary: CellSet
    gamma: np.ndarray | None = None
    obstacle: CellSet | None = None
    capacity_scale: int = DEFAULT_SCALE
    # assembled integer data
    free: np.ndarray = field(init=False, repr=False)
    Q1: np.ndarray = field(init=False, repr=False)
    Q0: np.ndarray = field(init=False, repr=False)
    forced: np.ndarray = field(init=False, repr=False)
    pair_i: np.ndarray = field(init=False, repr=False)
    pair_j: np.ndarray = field(init=False, repr=False)
    pair_q: np.ndarray = field(init=False, repr=False)

    @property
    def quantization_bound(self) -> float:
        """Bound on |real optimum - real energy of the returned set|."""
        return (len(self.pair_q) + 2 * len(self.free)) * 0.5 / self.capacity_scale

    def quantized_energy(self, x) -> int:
        """Integer energy of the free assignment ``x`` (bool per free cell)."""
        x = np.asarray(x, bool)
        cut = x[self.pair_i] != x[self.pair_j]
        return int(self.pair_q[cut].sum() + self.Q1[x].sum() + self.Q0[~x].sum())

    def to_dict(self) -> dict:
        return {"window": self.omega.shape, "free_cells": int(len(self.free)),
                "boundary": self.boundary.to_dict(), "capacity_scale": int(self.capacity_scale),
                "s": self.K.s, "has_gamma": self.gamma is not None, "has_obstacle": self.obstacle is not None}


@dataclass(eq=False)
class MinimizerResult:
    E: CellSet
    energy: float
    flow_value: int
    quantization_bound: float
    problem: CutProblem = field(repr=False)

    def to_dict(self) -> dict:
        return {"energy": self.energy, "flow_value": int(self.flow_value),
                "quantization_bound": self.quantization_bound, "cells_in_E": int(self.E.count)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _gamma_cells(gamma, domain):
    if gamma is None:
        return None
    if callable(gamma):
        return np.asarray(gamma(domain.centers()), float).reshape(domain.dims)
    return np.asarray(gamma, float).reshape(domain.dims)


def build_cut_problem(K: KernelTable, omega: Window, boundary: CellSet, gamma=None,
                      obstacle: CellSet | None = None, capacity_scale: int = DEFAULT_SCALE) -> CutProblem:
    d = K.domain
    if boundary.domain != d or omega.domain != d:
        raise ValueError("kernel, window and boundary data must share a domain")
    gamma = _gamma_cells(gamma, d)
    om = omega.mask
    fixed_in = boundary.mask & ~om
    fixed_out = ~boundary.mask & ~om
    if obstacle is not None:
        if obstacle.domain != d:
            raise ValueError("obstacle domain mismatch")
        if np.any(obstacle.mask & fixed_out):
            raise ValueError("obstacle not admissible: it meets fixed complement cells")
    free = np.argwhere(om)
    tE = K.tail(boundary.exterior)
    tEc = K.tail(boundary.exterior.complement())
    c1 = K.apply(fixed_out) + tEc
    c0 = K.apply(fixed_in) + tE
    if gamma is not None:
        c1 = c1 + gamma * d.cell_volume
    sel = tuple(free.T)
    scale = int(capacity_scale)
    n = len(free)
    iu, ju = np.triu_indices(n, 1)
    off = tuple(free[iu, k] - free[ju, k] + d.dims[k] - 1 for k in range(d.n))
    w = K.offsets[off] * K.scale
    if np.any(w <= 0):
        raise RuntimeError("internal error: non-positive pair weight")
    # bound the integer total in floating point before any int64 conversion can wrap
    total_f = (np.abs(c1[sel]).sum() + np.abs(c0[sel]).sum() + 2 * w.sum() + 3 * n) * scale
    if total_f >= _CAP_LIMIT // 4:
        suggest = max(1, int(scale * (_CAP_LIMIT // 8) / total_f))
        raise OverflowError(f"capacity overflow at scale {scale}; try --capacity-scale {suggest}")
    P = CutProblem(K, omega, boundary, gamma, obstacle, scale)
    P.free = free
    P.Q1 = np.rint(c1[sel] * scale).astype(np.int64)
    P.Q0 = np.rint(c0[sel] * scale).astype(np.int64)
    P.forced = np.zeros(len(free), bool) if obstacle is None else obstacle.mask[sel]
    q = np.rint(w * scale).astype(np.int64)
    keep = q > 0
    P.pair_i, P.pair_j, P.pair_q = iu[keep], ju[keep], q[keep]
    total = int(np.abs(P.Q1).sum() + np.abs(P.Q0).sum() + 2 * P.pair_q.sum())
    if total >= _CAP_LIMIT // 4:
        suggest = max(1, int(scale * (_CAP_LIMIT // 8) / max(total, 1)))
        raise OverflowError(f"capacity overflow at scale {scale}; try --capacity-scale {suggest}")
    return P


def minimize(problem: CutProblem) -> MinimizerResult:
    P = problem
    d = P.K.domain
    n = len(P.free)
    E_mask = P.boundary.mask.copy()
    if n == 0:
        E = CellSet(d, E_mask, P.boundary.exterior)
        return MinimizerResult(E, _real_energy(P, E), 0, 0.0, P)
    src, snk = n, n + 1
    D = P.Q1 - P.Q0
    inf = int(np.abs(D).sum() + 2 * P.pair_q.sum() + 1)
    tails, heads, cf, cb = [P.pair_i], [P.pair_j], [P.pair_q], [P.pair_q]
    nodes = np.arange(n)
    pos = D > 0
    tails.append(nodes[pos]); heads.append(np.full(pos.sum(), snk)); cf.append(D[pos]); cb.append(np.zeros(pos.sum(), np.int64))
    neg = (D < 0) & ~P.forced
    tails.append(np.full(neg.sum(), src)); heads.append(nodes[neg]); cf.append(-D[neg]); cb.append(np.zeros(neg.sum(), np.int64))
    fo = P.forced
    tails.append(np.full(fo.sum(), src)); heads.append(nodes[fo]); cf.append(np.full(fo.sum(), inf, np.int64)); cb.append(np.zeros(fo.sum(), np.int64))
    g = build_graph(n + 2, np.concatenate(tails), np.concatenate(heads), np.concatenate(cf), np.concatenate(cb))
    flow, side = max_flow(g, src, snk)
    x = side[:n]
    # quantized energy = sum Q0 + sum_i x_i D_i + cut pairs; the s->i arcs shift it by sum_{D<0} D,
    # and forced cells with D < 0 (no arc) contribute D with x_i = 1
    value = int(P.Q0.sum() + D[D < 0].sum()) + flow
    E_mask[tuple(P.free[x].T)] = True
    E_mask[tuple(P.free[~x].T)] = False
    E = CellSet(d, E_mask, P.boundary.exterior)
    return MinimizerResult(E, _real_energy(P, E), value, P.quantization_bound, P)


def _real_energy(P: CutProblem, E: CellSet) -> float:
    J = localized_energy(E, P.omega, P.K).total
    if P.gamma is not None:
        J += float(P.gamma[E.mask & P.omega.mask].sum()) * P.K.domain.cell_volume
    return J


def maximum_principle_check(result: MinimizerResult, plane: HalfSpace) -> bool:
    """True iff every free cell whose center lies in the half-space belongs to E*."""
    P = result.problem
    centers = P.K.domain.centers()
    inside = plane.contains(centers) & P.omega.mask
    return bool(np.all(result.E.mask[inside]))
