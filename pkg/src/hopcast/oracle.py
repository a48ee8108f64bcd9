"""Exact reference rates: LP broadcast rate, max-flow, full-mesh and baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import networkx as nx
from networkx.algorithms.flow import build_residual_network, edmonds_karp
import numpy as np

from .overlay import Configuration, OverlayGraph, is_connected_from_source, neighbors_in_use
from .simplex import LPResult, solve_lp


@dataclass(frozen=True)
class LPInstance:
    """``max z`` over variables ``[z, f^d_l for d, l, g_l]``.

    Row blocks: conservation (per destination ``d`` and node ``v != d``),
    piggybacking ``f^d_l <= g_l``, and node upload capacity.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    links: tuple[tuple[int, int], ...]
    receivers: tuple[int, ...]
    row_labels: tuple[str, ...]

    def f_index(self, di: int, li: int) -> int:
        return 1 + di * len(self.links) + li

    def g_index(self, li: int) -> int:
        return 1 + len(self.receivers) * len(self.links) + li

    def listing(self) -> str:
        """Human-readable constraint dump for debugging."""
        names = ["z"]
        names += [f"f{d}[{v}>{u}]" for d in self.receivers for v, u in self.links]
        names += [f"g[{v}>{u}]" for v, u in self.links]
        out = ["max z"]
        for label, row, rhs in zip(self.row_labels, self.A, self.b):
            terms = " ".join(f"{'+' if a > 0 else '-'}{'' if abs(a) == 1 else abs(a)}{names[k]}"
                             for k, a in enumerate(row) if a != 0)
            out.append(f"{label}: {terms} <= {rhs:g}")
        return "\n".join(out) + "\n"


def build_lp(g: OverlayGraph, f: Configuration) -> LPInstance:
    links = tuple(f.directed_links(g.source))
    recv = tuple(g.receivers)
    L, D = len(links), len(recv)
    nvar = 1 + D * L + L
    rows, rhs, labels = [], [], []

    for di, d in enumerate(recv):
        for v in g.nodes:
            if v == d:
                continue
            row = np.zeros(nvar)
            if v == g.source:
                row[0] = 1.0
            for li, (a, b) in enumerate(links):
                if b == v:
                    row[1 + di * L + li] += 1.0
                if a == v:
                    row[1 + di * L + li] -= 1.0
            rows.append(row)
            rhs.append(0.0)
            labels.append(f"cons[v={v},d={d}]")
    for di, d in enumerate(recv):
        for li, (a, b) in enumerate(links):
            row = np.zeros(nvar)
            row[1 + di * L + li] = 1.0
            row[1 + D * L + li] = -1.0
            rows.append(row)
            rhs.append(0.0)
            labels.append(f"piggy[d={d},{a}>{b}]")
    for v in g.nodes:
        row = np.zeros(nvar)
        for li, (a, _) in enumerate(links):
            if a == v:
                row[1 + D * L + li] = 1.0
        rows.append(row)
        rhs.append(g.capacity[v])
        labels.append(f"cap[{v}]")

    c = np.zeros(nvar)
    c[0] = 1.0
    return LPInstance(c, np.array(rows), np.array(rhs), links, recv, tuple(labels))


def solve_mp_lp(g: OverlayGraph, f: Configuration) -> tuple[LPInstance, LPResult]:
    inst = build_lp(g, f)
    return inst, solve_lp(inst.c, inst.A, inst.b)


def solve_mp(g: OverlayGraph, f: Configuration) -> float:
    """Maximum broadcast rate of configuration ``f``; 0 when a receiver is cut off."""
    if not g.receivers:
        return g.capacity[g.source]
    if not is_connected_from_source(g, f):
        return 0.0
    _, res = solve_mp_lp(g, f)
    return res.value


def _digraph(link_caps: Mapping[tuple[int, int], float], nodes) -> nx.DiGraph:
    G = nx.DiGraph()
    G.add_nodes_from(nodes)
    for (u, v), cap in link_caps.items():
        if cap < 0:
            raise ValueError(f"negative capacity on {(u, v)}")
        if G.has_edge(u, v):
            G[u][v]["capacity"] += cap
        else:
            G.add_edge(u, v, capacity=float(cap))
    return G


def max_flow(link_caps: Mapping[tuple[int, int], float], s: int, d: int) -> float:
    """Max ``s -> d`` flow over a directed graph given as ``{(u, v): capacity}``."""
    return min_max_flow(link_caps, s, [d])


def min_max_flow(link_caps: Mapping[tuple[int, int], float], s: int, sinks) -> float:
    """``min_d maxflow(s, d)`` over ``sinks``, sharing one residual network."""
    sinks = list(sinks)
    if s in sinks:
        raise ValueError("source and sink coincide")
    if not sinks:
        raise ValueError("no sinks")
    G = _digraph(link_caps, [s, *sinks])
    R = build_residual_network(G, "capacity")
    best = np.inf
    for d in sinks:
        best = min(best, edmonds_karp(G, s, d, residual=R, value_only=True).graph["flow_value"])
    return float(best)


def fullmesh_rate(g: OverlayGraph) -> float:
    recv = g.receivers
    if not recv:
        raise ValueError("no receivers")
    cs = g.capacity[g.source]
    return min(cs, (cs + sum(g.capacity[v] for v in recv)) / len(recv))


def baseline_allocation(g: OverlayGraph, f: Configuration) -> dict[tuple[int, int], float]:
    """Even split of each node's capacity over all of its in-use neighbors.

    The share assigned toward the source is wasted, since nothing flows into it.
    """
    caps = {}
    for v in g.nodes:
        nb = neighbors_in_use(g, f, v)
        for u in nb:
            if u != g.source:
                caps[(v, u)] = g.capacity[v] / len(nb)
    return caps


def baseline_rate(g: OverlayGraph, f: Configuration) -> float:
    if not g.receivers:
        return 0.0
    return min_max_flow(baseline_allocation(g, f), g.source, g.receivers)
