"""Back-pressure primal-dual broadcast solver over a fixed configuration.

Every node keeps one multiplier (queue) per receiver.  Each slot a node
picks the out-neighbor with the largest aggregate positive queue gap,
pushes its full upload capacity to it, and carries every receiver flow
whose gap is positive.  The source nudges its rate ``z`` toward
``U'(z) = sum_d lambda[s, d]``.

:func:`primal_dual_step` is the readable per-slot reference; :func:`solve_rate`
runs the same recursion in a compiled loop.  ``solve_rate`` works in units
where the configuration's cut upper bound is 1, so step sizes are
scale-free.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .oracle import fullmesh_rate, min_max_flow
from .overlay import Configuration, OverlayGraph

UTILITY_SHIFT = 1e-6
UTILITIES = {"log": 0, "power": 1}


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.1
    k: float | np.ndarray = 5e-4
    utility: str = "log"
    power: float = 2.0  # exponent for utility="power": U'(z) = (z + shift)^-power
    window: int = 2000
    blocks: int = 20  # the window is cut into this many blocks for the span test
    grow_every: int = 5  # double the window after this many unsettled windows
    max_window: int = 32000
    eps: float = 1e-3
    residual_tol: float = 2.5e-4
    max_iters: int = 2_000_000
    trace_every: int = 1

    def __post_init__(self):
        if self.alpha <= 0 or self.eps <= 0 or self.residual_tol <= 0:
            raise ValueError("alpha, eps and residual_tol must be positive")
        if np.any(np.asarray(self.k) <= 0):
            raise ValueError("step sizes k must be positive")
        if self.utility not in UTILITIES:
            raise ValueError(f"unknown utility {self.utility!r}")
        if self.window % self.blocks or self.window // self.blocks < 2:
            raise ValueError("window must split into blocks of at least 2 iterations")

    def uprime(self, z: float) -> float:
        if self.utility == "log":
            return 1.0 / (z + UTILITY_SHIFT)
        return (z + UTILITY_SHIFT) ** -self.power


# step sizes used in the original simulations; much slower to settle
SMALL_STEPS = SolverConfig(alpha=0.1, k=5e-5)


@dataclass(frozen=True)
class Problem:
    """Index arrays for one (graph, configuration) pair."""

    n: int
    source: int
    capacity: np.ndarray
    links: tuple[tuple[int, int], ...]
    src: np.ndarray
    dst: np.ndarray

    @classmethod
    def build(cls, g: OverlayGraph, f: Configuration, scale: float = 1.0) -> "Problem":
        links = tuple(f.directed_links(g.source))
        return cls(
            n=g.n,
            source=g.source,
            capacity=np.asarray(g.capacity, dtype=float) / scale,
            links=links,
            src=np.array([a for a, _ in links], dtype=np.int64),
            dst=np.array([b for _, b in links], dtype=np.int64),
        )

    def link_index(self, v: int, u: int) -> int:
        try:
            return self.links.index((v, u))
        except ValueError:
            raise KeyError(f"{u} is not an out-neighbor of {v}") from None

    def out(self, v: int) -> list[int]:
        return [b for a, b in self.links if a == v]


@dataclass(frozen=True)
class SolverState:
    z: float
    lam: np.ndarray  # (n, n): lam[v, d]; column of the source and diagonal stay 0
    flows: np.ndarray  # (L, n): flows[l, d] = f^d on link l
    phys: np.ndarray  # (L,): physical link rate g

    @classmethod
    def initial(cls, p: Problem, z0: float = 1.0) -> "SolverState":
        L = len(p.links)
        return cls(z0, np.zeros((p.n, p.n)), np.zeros((L, p.n)), np.zeros(L))


def back_pressure(p: Problem, state: SolverState, v: int, u: int) -> float:
    """Aggregate positive queue gap ``sum_d [lam[v,d] - lam[u,d]]^+``."""
    p.link_index(v, u)
    gap = state.lam[v] - state.lam[u]
    return float(np.maximum(gap, 0.0).sum())


def select_neighbor(p: Problem, state: SolverState, v: int) -> int | None:
    """Out-neighbor with the largest back-pressure; ties go to the lowest id."""
    best, best_w = None, -np.inf
    for u in p.out(v):  # links are sorted, so out(v) is ascending
        w = back_pressure(p, state, v, u)
        if w > best_w:
            best, best_w = u, w
    return best


def assign_flows(p: Problem, state: SolverState) -> SolverState:
    flows = np.zeros_like(state.flows)
    phys = np.zeros_like(state.phys)
    for v in range(p.n):
        u = select_neighbor(p, state, v)
        if u is None or back_pressure(p, state, v, u) <= 0:
            continue
        li = p.link_index(v, u)
        phys[li] = p.capacity[v]
        flows[li] = np.where(state.lam[v] - state.lam[u] > 0, p.capacity[v], 0.0)
    return replace(state, flows=flows, phys=phys)


def net_inflow(p: Problem, flows: np.ndarray, z: float) -> np.ndarray:
    """``sum_in f - sum_out f`` per (v, d), plus ``z`` at the source."""
    drift = np.zeros((p.n, p.n))
    np.add.at(drift, p.dst, flows)
    np.subtract.at(drift, p.src, flows)
    drift[p.source] += z
    return drift


def primal_dual_step(p: Problem, state: SolverState, sc: SolverConfig) -> SolverState:
    """One Euler slot: rate update, flow assignment, then queue update."""
    s = p.source
    z = max(0.0, state.z + sc.alpha * (sc.uprime(state.z) - state.lam[s].sum()))
    state = assign_flows(p, state)
    lam = np.maximum(0.0, state.lam + np.broadcast_to(sc.k, state.lam.shape) * net_inflow(p, state.flows, z))
    lam[:, s] = 0.0
    np.fill_diagonal(lam, 0.0)
    return SolverState(z, lam, state.flows, state.phys)


@numba.njit(cache=True)
def _run(z, lam, src, dst, cap, s, alpha, kmat, ucode, upow, iters,
         ztrace, ltrace, block, lam_head, lam_tail, recv):
    n = lam.shape[0]
    L = src.shape[0]
    best = np.empty(n, np.int64)
    bw = np.empty(n)
    drift = np.zeros((n, n))
    lam_head[:, :] = 0.0
    lam_tail[:, :] = 0.0
    recv[:] = 0.0
    for it in range(iters):
        lsum = 0.0
        for d in range(n):
            lsum += lam[s, d]
        if ucode == 0:
            up = 1.0 / (z + 1e-6)
        else:
            up = (z + 1e-6) ** -upow
        z = z + alpha * (up - lsum)
        if z < 0.0:
            z = 0.0
        for v in range(n):
            best[v] = -1
            bw[v] = 0.0
        for li in range(L):
            v = src[li]
            u = dst[li]
            w = 0.0
            for d in range(n):
                gp = lam[v, d] - lam[u, d]
                if gp > 0.0:
                    w += gp
            if w > bw[v]:
                bw[v] = w
                best[v] = li
        drift[:, :] = 0.0
        for d in range(n):
            drift[s, d] = z
        for v in range(n):
            li = best[v]
            if li >= 0:
                u = dst[li]
                c = cap[v]
                for d in range(n):
                    if lam[v, d] - lam[u, d] > 0.0:
                        drift[u, d] += c
                        drift[v, d] -= c
        for d in range(n):
            if d != s:
                recv[d] += drift[d, d]
        for v in range(n):
            for d in range(n):
                if d == v or d == s:
                    continue
                x = lam[v, d] + kmat[v, d] * drift[v, d]
                lam[v, d] = x if x > 0.0 else 0.0
        if it < block:
            lam_head += lam
        if it >= iters - block:
            lam_tail += lam
        ztrace[it] = z
        lsum = 0.0
        for d in range(n):
            lsum += lam[s, d]
        ltrace[it] = lsum
    lam_head /= block
    lam_tail /= block
    recv /= iters
    return z


def run_steps(p: Problem, state: SolverState, sc: SolverConfig, iters: int) -> tuple[SolverState, np.ndarray]:
    """Advance ``iters`` slots with the compiled loop; returns state and z-trace."""
    lam = state.lam.copy()
    kmat = np.broadcast_to(np.asarray(sc.k, dtype=float), lam.shape).copy()
    zt, lt = np.empty(iters), np.empty(iters)
    block = max(1, min(sc.window // sc.blocks, iters))
    head, tail, recv = np.zeros_like(lam), np.zeros_like(lam), np.zeros(p.n)
    z = _run(state.z, lam, p.src, p.dst, p.capacity, p.source, sc.alpha, kmat,
             UTILITIES[sc.utility], sc.power, iters, zt, lt, block, head, tail, recv)
    return SolverState(z, lam, state.flows, state.phys), zt


def rate_upper_bound(g: OverlayGraph, f: Configuration) -> float:
    """A cheap cut bound on the broadcast rate of ``f``.

    Smallest of: the per-receiver max-flow when every link may carry its
    sender's full capacity, and total upload shared over all receivers.
    """
    caps = {(a, b): g.capacity[a] for a, b in f.directed_links(g.source)}
    cut = min_max_flow(caps, g.source, g.receivers)
    if cut <= 0:
        return 0.0
    return min(cut, fullmesh_rate(g))


@dataclass
class RateResult:
    rate: float
    converged: bool
    iterations: int
    receiving: np.ndarray  # window-averaged per-node receiving rate (source entry = rate)
    z_trace: np.ndarray = field(repr=False)
    lambda_trace: np.ndarray = field(repr=False)
    trace_every: int = 1
    scale: float = 1.0

    def trace_csv(self, every: int | None = None) -> str:
        """``iter,z,sum_lambda_source`` rows; lambda sums are in solver units."""
        step = max(1, (every or self.trace_every) // self.trace_every)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "z", "sum_lambda_source"])
        for i in range(0, len(self.z_trace), step):
            w.writerow([(i + 1) * self.trace_every, repr(float(self.z_trace[i])),
                        repr(float(self.lambda_trace[i]))])
        return buf.getvalue()


def solve_rate(g: OverlayGraph, f: Configuration, sc: SolverConfig = SolverConfig()) -> RateResult:
    """Iterate until the z-window settles and queues stop drifting, or ``max_iters``."""
    if not g.receivers:
        c = g.capacity[g.source]
        return RateResult(c, True, 0, np.array([c]), np.array([]), np.array([]), sc.trace_every)
    scale = rate_upper_bound(g, f)
    if scale <= 0:
        empty = np.array([])
        return RateResult(0.0, True, 0, np.zeros(g.n), empty, empty, sc.trace_every, 0.0)

    p = Problem.build(g, f, scale)
    lam = np.zeros((g.n, g.n))
    kmat = np.broadcast_to(np.asarray(sc.k, dtype=float), lam.shape).copy()
    head, tail, recv = np.zeros_like(lam), np.zeros_like(lam), np.zeros(g.n)
    zs, ls = [], []
    z, it, windows, converged = 1.0, 0, 0, False
    W = sc.window
    while it < sc.max_iters:
        # bang-bang flows make z chatter; longer windows average it out on big overlays
        W = min(sc.window << (windows // sc.grow_every), max(sc.max_window, sc.window))
        W = min(W, max(sc.max_iters - it, sc.blocks * 2)) // sc.blocks * sc.blocks
        B = W // sc.blocks
        zt, lt = np.empty(W), np.empty(W)
        z = _run(z, lam, p.src, p.dst, p.capacity, p.source, sc.alpha, kmat,
                 UTILITIES[sc.utility], sc.power, W, zt, lt, B, head, tail, recv)
        it += W
        windows += 1
        zs.append(zt[sc.trace_every - 1::sc.trace_every].copy())
        ls.append(lt[sc.trace_every - 1::sc.trace_every].copy())
        zbar = zt.mean()
        if zbar <= 0:
            continue
        span = np.ptp(zt.reshape(sc.blocks, B).mean(axis=1)) / zbar
        # average queue growth per (v, d) over the window, in rate units
        residual = np.max(np.abs(tail - head) / (kmat * (W - B)))
        if span < sc.eps and residual < sc.residual_tol * zbar:
            converged = True
            break
    receiving = recv * scale
    receiving[g.source] = zbar * scale
    return RateResult(
        rate=float(zbar * scale),
        converged=converged,
        iterations=it,
        receiving=receiving,
        z_trace=np.concatenate(zs) * scale,
        lambda_trace=np.concatenate(ls),
        trace_every=sc.trace_every,
        scale=scale,
    )
