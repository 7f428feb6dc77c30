"""Exact integer max-flow (Dinic) on a CSR residual graph.

Capacities are int64. Each undirected pair or directed arc is stored as two
arcs that are each other's reverse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass
class FlowGraph:
    n_nodes: int
    start: np.ndarray  # CSR offsets, length n_nodes + 1
    head: np.ndarray  # arc target
    cap: np.ndarray  # residual capacity (int64)
    rev: np.ndarray  # index of the reverse arc


def build_graph(n_nodes: int, tail, head, cap_fwd, cap_bwd) -> FlowGraph:
    """Graph from arc pairs ``tail -> head`` (capacity cap_fwd) and back (cap_bwd)."""
    tail = np.asarray(tail, np.int64)
    head = np.asarray(head, np.int64)
    m = len(tail)
    t2 = np.empty(2 * m, np.int64)
    h2 = np.empty(2 * m, np.int64)
    c2 = np.empty(2 * m, np.int64)
    t2[0::2], t2[1::2] = tail, head
    h2[0::2], h2[1::2] = head, tail
    c2[0::2] = np.asarray(cap_fwd, np.int64)
    c2[1::2] = np.asarray(cap_bwd, np.int64)
    if np.any(c2 < 0):
        raise ValueError("negative capacity")
    rev_orig = np.arange(2 * m) ^ 1
    order = np.argsort(t2, kind="stable")
    pos = np.empty(2 * m, np.int64)
    pos[order] = np.arange(2 * m)
    start = np.zeros(n_nodes + 1, np.int64)
    np.add.at(start, t2 + 1, 1)
    start = np.cumsum(start)
    return FlowGraph(n_nodes, start, h2[order], c2[order], pos[rev_orig[order]])


@njit(cache=True)
def _bfs(start, head, cap, s, t, level, queue):
    level[:] = -1
    level[s] = 0
    qh, qt = 0, 0
    queue[qt] = s
    qt += 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        for a in range(start[u], start[u + 1]):
            v = head[a]
            if cap[a] > 0 and level[v] < 0:
                level[v] = level[u] + 1
                queue[qt] = v
                qt += 1
    return level[t] >= 0


@njit(cache=True)
def _dinic(start, head, cap, rev, s, t):
    n = start.shape[0] - 1
    level = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    it = np.empty(n, np.int64)
    path = np.empty(n, np.int64)
    total = 0
    while _bfs(start, head, cap, s, t, level, queue):
        for u in range(n):
            it[u] = start[u]
        depth = 0
        u = s
        while True:
            if u == t:
                f = cap[path[0]]
                for k in range(1, depth):
                    if cap[path[k]] < f:
                        f = cap[path[k]]
                cut = -1
                for k in range(depth):
                    a = path[k]
                    cap[a] -= f
                    cap[rev[a]] += f
                    if cut < 0 and cap[a] == 0:
                        cut = k
                total += f
                depth = cut
                u = s if cut == 0 else head[path[cut - 1]]
                continue
            advanced = False
            while it[u] < start[u + 1]:
                a = it[u]
                v = head[a]
                if cap[a] > 0 and level[v] == level[u] + 1:
                    path[depth] = a
                    depth += 1
                    u = v
                    advanced = True
                    break
                it[u] += 1
            if not advanced:
                if u == s:
                    break
                level[u] = -1
                depth -= 1
                a = path[depth]
                u = s if depth == 0 else head[path[depth - 1]]
                it[u] += 1
    return total


@njit(cache=True)
def _reachable(start, head, cap, s):
    n = start.shape[0] - 1
    seen = np.zeros(n, np.bool_)
    stack = np.empty(n, np.int64)
    top = 0
    stack[top] = s
    top += 1
    seen[s] = True
    while top > 0:
        top -= 1
        u = stack[top]
        for a in range(start[u], start[u + 1]):
            v = head[a]
            if cap[a] > 0 and not seen[v]:
                seen[v] = True
                stack[top] = v
                top += 1
    return seen


def max_flow(g: FlowGraph, s: int, t: int) -> tuple[int, np.ndarray]:
    """Maximum flow value and the source side of the minimal (smallest) min cut.

    The graph's residual capacities are consumed.
    """
    value = int(_dinic(g.start, g.head, g.cap, g.rev, s, t))
    return value, _reachable(g.start, g.head, g.cap, s)
