"""Overlay graph, peering configurations and peer capacity profiles.

Nodes are dense 0-based integers; the source is node 0 unless stated
otherwise.  A potential pair ``{v, u}`` is stored as a sorted tuple and
enables both directed links ``(v, u)`` and ``(u, v)`` when in use.

Besides the mutable potential pairs a graph may carry *fixed* pairs: links
that are always in use and that the topology hopper never touches.  They
count toward degree bounds but not toward ``N_v``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Pair = tuple[int, int]

MAX_ENUM_PAIRS = 24


class OverlayError(ValueError):
    """Malformed graph, configuration or profile."""


class UnknownNodeError(OverlayError, KeyError):
    pass


class InstanceTooLargeError(OverlayError):
    pass


def pair(u: int, v: int) -> Pair:
    if u == v:
        raise OverlayError(f"self-loop on node {u}")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class OverlayGraph:
    """Potential-neighbor graph with per-node capacity and degree bound."""

    capacity: tuple[float, ...]
    bound: tuple[int, ...]
    pairs: frozenset[Pair]
    source: int = 0
    fixed: frozenset[Pair] = frozenset()
    _nbrs: tuple[frozenset[int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.capacity)
        object.__setattr__(self, "capacity", tuple(float(c) for c in self.capacity))
        object.__setattr__(self, "bound", tuple(int(b) for b in self.bound))
        object.__setattr__(self, "pairs", frozenset(pair(*p) for p in self.pairs))
        object.__setattr__(self, "fixed", frozenset(pair(*p) for p in self.fixed))
        if len(self.bound) != n:
            raise OverlayError("capacity and bound lengths differ")
        if not 0 <= self.source < n:
            raise OverlayError(f"source {self.source} out of range")
        if any(c < 0 for c in self.capacity):
            raise OverlayError("negative upload capacity")
        if any(b < 1 for b in self.bound):
            raise OverlayError("degree bounds must be >= 1")
        if self.pairs & self.fixed:
            raise OverlayError("a pair cannot be both fixed and potential")
        for u, v in self.pairs | self.fixed:
            if not (0 <= u < n and 0 <= v < n):
                raise OverlayError(f"pair {(u, v)} references unknown node")
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in self.pairs:
            nbrs[u].add(v)
            nbrs[v].add(u)
        object.__setattr__(self, "_nbrs", tuple(frozenset(s) for s in nbrs))
        fixed_deg = [0] * n
        for u, v in self.fixed:
            fixed_deg[u] += 1
            fixed_deg[v] += 1
        for v in range(n):
            if fixed_deg[v] > self.bound[v]:
                raise OverlayError(f"fixed pairs exceed the degree bound of node {v}")

    @property
    def n(self) -> int:
        return len(self.capacity)

    @property
    def nodes(self) -> range:
        return range(self.n)

    @property
    def receivers(self) -> list[int]:
        return [v for v in self.nodes if v != self.source]

    def potential_neighbors(self, v: int) -> frozenset[int]:
        """``N_v``: the neighbors node ``v`` may add or drop."""
        self._check(v)
        return self._nbrs[v]

    def _check(self, v: int) -> None:
        if not 0 <= v < self.n:
            raise UnknownNodeError(v)

    def with_capacity(self, capacity: Sequence[float]) -> "OverlayGraph":
        return OverlayGraph(tuple(capacity), self.bound, self.pairs, self.source, self.fixed)

    def with_bound(self, bound: Sequence[int]) -> "OverlayGraph":
        return OverlayGraph(self.capacity, tuple(bound), self.pairs, self.source, self.fixed)


@dataclass(frozen=True)
class Configuration:
    """An in-use peering subgraph, given by its set of unordered pairs."""

    pairs: frozenset[Pair]

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset(pair(*p) for p in self.pairs))

    @classmethod
    def of(cls, pairs: Iterable[Sequence[int]]) -> "Configuration":
        return cls(frozenset(pair(u, v) for u, v in pairs))

    def key(self) -> tuple[Pair, ...]:
        return tuple(sorted(self.pairs))

    def degree(self, v: int) -> int:
        return sum(1 for p in self.pairs if v in p)

    def degrees(self, n: int) -> list[int]:
        deg = [0] * n
        for u, v in self.pairs:
            deg[u] += 1
            deg[v] += 1
        return deg

    def add(self, p: Pair) -> "Configuration":
        return Configuration(self.pairs | {pair(*p)})

    def remove(self, p: Pair) -> "Configuration":
        return Configuration(self.pairs - {pair(*p)})

    def directed_links(self, source: int) -> list[Pair]:
        """Directed links ``(v, u)`` usable for streaming; nothing flows into the source."""
        links = []
        for u, v in sorted(self.pairs):
            if v != source:
                links.append((u, v))
            if u != source:
                links.append((v, u))
        return sorted(links)

    def __len__(self) -> int:
        return len(self.pairs)


def validate_configuration(g: OverlayGraph, f: Configuration) -> None:
    allowed = g.pairs | g.fixed
    extra = f.pairs - allowed
    if extra:
        raise OverlayError(f"pairs {sorted(extra)} are not potential pairs")
    if not g.fixed <= f.pairs:
        raise OverlayError("configuration drops a fixed pair")
    for v, d in enumerate(f.degrees(g.n)):
        if d > g.bound[v]:
            raise OverlayError(f"node {v} has degree {d} > bound {g.bound[v]}")


def is_feasible(g: OverlayGraph, f: Configuration) -> bool:
    try:
        validate_configuration(g, f)
    except OverlayError:
        return False
    return True


def neighbors_in_use(g: OverlayGraph, f: Configuration, v: int) -> set[int]:
    """``N_{v,f}`` including fixed neighbors."""
    g._check(v)
    return {u if w == v else w for u, w in f.pairs if v in (u, w)}


def mobile_neighbors_in_use(g: OverlayGraph, f: Configuration, v: int) -> set[int]:
    """In-use neighbors of ``v`` that the hopper may drop."""
    return {u for u in neighbors_in_use(g, f, v) if pair(u, v) in g.pairs}


def enumerate_configurations(g: OverlayGraph) -> list[Configuration]:
    """All degree-feasible subsets of the potential pairs (fixed pairs always in).

    Connectivity is deliberately not required.  Order is lexicographic by the
    sorted pair list of each configuration.
    """
    pairs = sorted(g.pairs)
    if len(pairs) > MAX_ENUM_PAIRS:
        raise InstanceTooLargeError(
            f"{len(pairs)} potential pairs; enumeration is limited to {MAX_ENUM_PAIRS}")
    deg = [0] * g.n
    for u, v in g.fixed:
        deg[u] += 1
        deg[v] += 1
    out: list[Configuration] = []
    chosen: list[Pair] = []

    # depth-first over pairs with degree pruning; far cheaper than 2^|E| filtering
    def rec(i: int) -> None:
        if i == len(pairs):
            out.append(Configuration(g.fixed | frozenset(chosen)))
            return
        rec(i + 1)
        u, v = pairs[i]
        if deg[u] < g.bound[u] and deg[v] < g.bound[v]:
            deg[u] += 1
            deg[v] += 1
            chosen.append(pairs[i])
            rec(i + 1)
            chosen.pop()
            deg[u] -= 1
            deg[v] -= 1

    rec(0)
    out.sort(key=Configuration.key)
    return out


def is_connected_from_source(g: OverlayGraph, f: Configuration) -> bool:
    adj: list[list[int]] = [[] for _ in range(g.n)]
    for u, v in f.pairs:
        adj[u].append(v)
        adj[v].append(u)
    seen = {g.source}
    stack = [g.source]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == g.n


def adjacent(f: Configuration, h: Configuration) -> bool:
    """True when the two configurations differ by exactly one pair."""
    return len(f.pairs ^ h.pairs) == 1


def configuration_adjacency(configs: Sequence[Configuration]) -> list[tuple[int, int]]:
    """Index pairs ``(i, j)``, ``i < j``, of configurations one add/remove apart."""
    index = {c.pairs: i for i, c in enumerate(configs)}
    edges = set()
    for i, c in enumerate(configs):
        for p in c.pairs:
            j = index.get(c.pairs - {p})
            if j is not None:
                edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def random_configuration(g: OverlayGraph, rng: np.random.Generator,
                         base: Configuration | None = None) -> Configuration:
    """Greedily add potential pairs in random order while both ends are under their bound.

    Starting from ``base`` (default: the pinned pairs) gives nested
    configurations when bounds are raised step by step.
    """
    chosen = set(g.fixed if base is None else base.pairs)
    deg = Configuration(frozenset(chosen)).degrees(g.n)
    pairs = sorted(g.pairs)
    for k in rng.permutation(len(pairs)):
        u, v = pairs[k]
        if (u, v) not in chosen and deg[u] < g.bound[u] and deg[v] < g.bound[v]:
            chosen.add((u, v))
            deg[u] += 1
            deg[v] += 1
    return Configuration(frozenset(chosen))


# -- capacity profiles ------------------------------------------------------

@dataclass(frozen=True)
class CapacityProfile:
    buckets: tuple[tuple[float, float], ...]

    def __post_init__(self):
        caps = [c for c, _ in self.buckets]
        fracs = [p for _, p in self.buckets]
        if not self.buckets:
            raise OverlayError("empty capacity profile")
        if abs(sum(fracs) - 100.0) > 0.1:
            raise OverlayError(f"fractions sum to {sum(fracs)}, expected 100")
        if any(p < 0 for p in fracs):
            raise OverlayError("negative fraction")
        if any(c <= 0 for c in caps) or any(b <= a for a, b in zip(caps, caps[1:])):
            raise OverlayError("capacities must be positive and strictly increasing")

    @property
    def capacities(self) -> np.ndarray:
        return np.array([c for c, _ in self.buckets])

    @property
    def probabilities(self) -> np.ndarray:
        p = np.array([f for _, f in self.buckets])
        return p / p.sum()


# uplink bandwidth of Internet hosts, kbps -> percent
PEER_CAPACITIES = CapacityProfile(((64, 2.8), (128, 14.3), (256, 4.3), (384, 23.3), (768, 55.3)))

SOURCE_CAPACITY_KBPS = 768.0


def sample_capacities(profile: CapacityProfile, n: int, seed) -> list[float]:
    if n < 1:
        raise OverlayError("n must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(profile.buckets), size=n, p=profile.probabilities)
    return [float(c) for c in profile.capacities[idx]]


def proportional_bound(capacity: float, unit: float = 64.0) -> int:
    """Degree bound 2 per ``unit`` kbps of upload capacity (64 kbps -> 2)."""
    return max(1, int(round(2 * capacity / unit)))


# -- graph builders -----------------------------------------------------------

def complete_graph(capacity: Sequence[float], bound: Sequence[int] | int, source: int = 0) -> OverlayGraph:
    n = len(capacity)
    if isinstance(bound, int):
        bound = [bound] * n
    return OverlayGraph(tuple(capacity), tuple(bound),
                        frozenset(itertools.combinations(range(n), 2)), source)


def random_graph(n: int, p: float, rng: np.random.Generator, capacity: Sequence[float],
                 bound: Sequence[int] | int, source: int = 0) -> OverlayGraph:
    """G(n, p) potential graph, resampled until connected."""
    if isinstance(bound, int):
        bound = [bound] * n
    all_pairs = list(itertools.combinations(range(n), 2))
    for _ in range(1000):
        keep = rng.random(len(all_pairs)) < p
        pairs = frozenset(pr for pr, k in zip(all_pairs, keep) if k)
        g = OverlayGraph(tuple(capacity), tuple(bound), pairs, source)
        if is_connected_from_source(g, Configuration(pairs)):
            return g
    raise OverlayError(f"could not draw a connected G({n}, {p})")


def example_graph() -> OverlayGraph:
    """Five-node complete potential graph, unit capacities, degree bound 3."""
    return complete_graph([1.0] * 5, 3)


EXAMPLE_OVERLAY = Configuration.of([(0, 1), (0, 2), (0, 4), (1, 2), (1, 4), (2, 3), (3, 4)])


def toggle_graph() -> OverlayGraph:
    """Four-configuration instance: node 1 toggles its links to nodes 2 and 4.

    Everything else is the fixed remainder of ``EXAMPLE_OVERLAY``.  Unit capacities,
    degree bound 3.
    """
    fixed = frozenset({(0, 1), (0, 2), (0, 4), (2, 3), (3, 4)})
    return OverlayGraph((1.0,) * 5, (3,) * 5, frozenset({(1, 2), (1, 4)}), 0, fixed)


def toggle_configurations() -> dict[str, Configuration]:
    g = toggle_graph()
    base = g.fixed
    return {
        "f1": Configuration(base | {(1, 2), (1, 4)}),
        "f2": Configuration(base | {(1, 2)}),
        "f3": Configuration(base | {(1, 4)}),
        "f4": Configuration(base),
    }


# -- text format ------------------------------------------------------------

def format_graph(g: OverlayGraph) -> str:
    lines = [f"nodes {g.n} source {g.source}"]
    for v in g.nodes:
        lines.append(f"node {v} cap {g.capacity[v]!r} bound {g.bound[v]}")
    for u, v in sorted(g.pairs):
        lines.append(f"edge {u} {v}")
    for u, v in sorted(g.fixed):
        lines.append(f"fixed {u} {v}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> OverlayGraph:
    """Parse the line-oriented graph format (see README)."""
    n = source = None
    caps: dict[int, float] = {}
    bounds: dict[int, int] = {}
    pairs: set[Pair] = set()
    fixed: set[Pair] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "nodes" and len(tok) == 4 and tok[2] == "source":
                n, source = int(tok[1]), int(tok[3])
            elif tok[0] == "node" and len(tok) == 6 and tok[2] == "cap" and tok[4] == "bound":
                v = int(tok[1])
                if v in caps:
                    raise OverlayError(f"duplicate node {v}")
                caps[v] = float(tok[3])
                bounds[v] = int(tok[5])
            elif tok[0] in ("edge", "fixed") and len(tok) == 3:
                p = pair(int(tok[1]), int(tok[2]))
                if p in pairs or p in fixed:
                    raise OverlayError(f"duplicate edge {p}")
                (pairs if tok[0] == "edge" else fixed).add(p)
            else:
                raise OverlayError(f"unrecognised line {raw!r}")
        except (OverlayError, ValueError) as exc:
            raise OverlayError(f"line {lineno}: {exc}") from None
    if n is None:
        raise OverlayError("missing 'nodes <N> source <id>' header")
    if sorted(caps) != list(range(n)):
        raise OverlayError("node lines must cover ids 0..N-1 exactly once")
    return OverlayGraph(tuple(caps[v] for v in range(n)), tuple(bounds[v] for v in range(n)),
                        frozenset(pairs), source, frozenset(fixed))


def load_graph(path: str | Path) -> OverlayGraph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))
