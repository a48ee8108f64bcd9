"""Distributed topology hopping as a continuous-time event loop.

Each node with at least one mobile potential neighbor runs an exponential
countdown.  On expiry it proposes dropping a random in-use neighbor or
adding a random unused one, measures the rate of the proposed
configuration, and keeps it with probability
``e^{b x'} / (e^{b x} + e^{b x'})``.  Pinned pairs never move.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .analysis import NoiseModel, accept_prob
from .oracle import baseline_rate, solve_mp
from .overlay import Configuration, OverlayGraph, mobile_neighbors_in_use, pair, validate_configuration
from .ratecast import SolverConfig, solve_rate

Measure = Callable[[Configuration], float]


class IsolatedNodeError(ValueError):
    pass


@dataclass(frozen=True)
class HopperConfig:
    beta: float
    tau: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class Proposal:
    action: str  # "add", "remove" or "noop"
    pair: tuple[int, int] | None = None


@dataclass(frozen=True)
class TransitionRecord:
    t: float
    actor: int
    action: str
    pair: tuple[int, int] | None
    x_old: float
    x_new: float | None
    accepted: bool
    before: tuple = field(repr=False, compare=False, default=())
    after: tuple = field(repr=False, compare=False, default=())

    def to_json(self) -> str:
        return json.dumps({
            "t": self.t, "actor": self.actor, "action": self.action,
            "pair": None if self.pair is None else list(self.pair),
            "x_old": self.x_old, "x_new": self.x_new, "accepted": self.accepted,
        }, sort_keys=True)


@dataclass
class HopperState:
    current: Configuration
    clock: float
    timers: dict[int, float]
    last_rate: float
    rng: np.random.Generator


# -- measurement callbacks ---------------------------------------------------

class OracleMeasure:
    """Exact LP rate, memoized per configuration."""

    def __init__(self, g: OverlayGraph):
        self.g = g
        self.cache: dict[tuple, float] = {}

    def __call__(self, f: Configuration) -> float:
        k = f.key()
        if k not in self.cache:
            self.cache[k] = solve_mp(self.g, f)
        return self.cache[k]


class SolverMeasure:
    """Rate from running the back-pressure solver to convergence."""

    def __init__(self, g: OverlayGraph, sc: SolverConfig = SolverConfig()):
        self.g, self.sc = g, sc
        self.cache: dict[tuple, float] = {}
        self.unconverged: set[tuple] = set()

    def __call__(self, f: Configuration) -> float:
        k = f.key()
        if k not in self.cache:
            res = solve_rate(self.g, f, self.sc)
            self.cache[k] = res.rate
            if not res.converged:
                self.unconverged.add(k)
        return self.cache[k]


class BaselineMeasure(OracleMeasure):
    def __call__(self, f: Configuration) -> float:
        k = f.key()
        if k not in self.cache:
            self.cache[k] = baseline_rate(self.g, f)
        return self.cache[k]


class NoisyMeasure:
    """Exact rate plus a fresh draw of ``(j / n_f) delta_f`` on every probe."""

    def __init__(self, base: Measure, noise: NoiseModel, index: Callable[[Configuration], int], seed=None):
        self.base, self.noise, self.index = base, noise, index
        self.rng = np.random.default_rng(seed)

    def __call__(self, f: Configuration) -> float:
        return self.base(f) + self.noise.sample(self.index(f), self.rng)


# -- protocol pieces ---------------------------------------------------------

def accept(x_old: float, x_new: float, beta: float) -> float:
    """Probability of staying in the proposed configuration."""
    return accept_prob(x_old, x_new, beta)


def sample_timer(v: int, cfg: HopperConfig, g: OverlayGraph, rng: np.random.Generator) -> float:
    m = len(g.potential_neighbors(v))
    if m == 0:
        raise IsolatedNodeError(f"node {v} has no mobile potential neighbors")
    return float(rng.exponential(2.0 * math.exp(cfg.tau) / m))


def propose(state: HopperState, g: OverlayGraph, v: int, rng: np.random.Generator) -> Proposal:
    pot = sorted(g.potential_neighbors(v))
    used = sorted(mobile_neighbors_in_use(g, state.current, v))
    if rng.random() < len(used) / len(pot):
        u = used[rng.integers(len(used))]
        return Proposal("remove", pair(v, u))
    free = [u for u in pot if u not in used]
    u = free[rng.integers(len(free))]
    f = state.current
    if f.degree(v) >= g.bound[v] or f.degree(u) >= g.bound[u]:
        return Proposal("noop")
    return Proposal("add", pair(v, u))


def init_state(g: OverlayGraph, cfg: HopperConfig, f0: Configuration, measure: Measure, seed=None) -> HopperState:
    validate_configuration(g, f0)
    rng = np.random.default_rng(seed)
    timers = {v: sample_timer(v, cfg, g, rng) for v in g.nodes if g.potential_neighbors(v)}
    return HopperState(f0, 0.0, timers, measure(f0), rng)


def _next_actor(state: HopperState) -> int:
    return min(state.timers, key=lambda v: (state.timers[v], v))


def hop_step(state: HopperState, cfg: HopperConfig, g: OverlayGraph, measure: Measure) -> TransitionRecord:
    """Fire the earliest timer and run one proposal; mutates ``state``."""
    v = _next_actor(state)
    state.clock = state.timers[v]
    before = state.current
    prop = propose(state, g, v, state.rng)
    x_old, x_new, kept = state.last_rate, None, False
    if prop.action != "noop":
        nxt = before.remove(prop.pair) if prop.action == "remove" else before.add(prop.pair)
        x_new = measure(nxt)
        kept = bool(state.rng.random() < accept(x_old, x_new, cfg.beta))
        if kept:
            state.current, state.last_rate = nxt, x_new
    state.timers[v] = state.clock + sample_timer(v, cfg, g, state.rng)
    return TransitionRecord(state.clock, v, prop.action, prop.pair, x_old, x_new, kept,
                            before.key(), state.current.key())


def baseline_step(state: HopperState, cfg: HopperConfig, g: OverlayGraph, measure: Measure) -> TransitionRecord:
    """Heuristic swap: drop a random active neighbor, add a random unused one, no bounds check."""
    v = _next_actor(state)
    state.clock = state.timers[v]
    before = f = state.current
    used = sorted(mobile_neighbors_in_use(g, f, v))
    if used:
        f = f.remove(pair(v, used[state.rng.integers(len(used))]))
    free = sorted(u for u in g.potential_neighbors(v) if u not in used)
    if free:
        f = f.add(pair(v, free[state.rng.integers(len(free))]))
    x_old = state.last_rate
    state.current, state.last_rate = f, measure(f)
    state.timers[v] = state.clock + sample_timer(v, cfg, g, state.rng)
    return TransitionRecord(state.clock, v, "swap", None, x_old, state.last_rate, True,
                            before.key(), f.key())


@dataclass
class HopRun:
    occupancy: dict[tuple, float]  # time spent per configuration after burn-in
    transitions: Counter  # (from_key, to_key) -> count after burn-in
    rate_time: float  # integral of the measured rate after burn-in
    elapsed: float
    events: int
    final: Configuration
    records: list[TransitionRecord]

    @property
    def time_average_rate(self) -> float:
        return self.rate_time / self.elapsed if self.elapsed > 0 else 0.0

    def occupancy_fraction(self) -> dict[tuple, float]:
        return {k: t / self.elapsed for k, t in self.occupancy.items()}

    def transition_rate(self, a: tuple, b: tuple) -> float:
        t = self.occupancy.get(a, 0.0)
        return self.transitions[(a, b)] / t if t > 0 else float("nan")

    def log_lines(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)


def run_hopper(g: OverlayGraph, cfg: HopperConfig, measure: Measure, f0: Configuration,
               events: int, seed=None, burn_in: int = 0, keep_records: bool = False,
               step=hop_step) -> HopRun:
    """Run ``burn_in + events`` timer expiries; statistics cover the last ``events``."""
    state = init_state(g, cfg, f0, measure, seed)
    occ: dict[tuple, float] = defaultdict(float)
    trans: Counter = Counter()
    records = []
    rate_time, t0 = 0.0, None
    for i in range(burn_in + events):
        if not state.timers:
            break
        prev_clock, prev_key, prev_rate = state.clock, state.current.key(), state.last_rate
        rec = step(state, cfg, g, measure)
        if i < burn_in:
            continue
        if t0 is None:
            t0 = prev_clock
        occ[prev_key] += state.clock - prev_clock
        rate_time += prev_rate * (state.clock - prev_clock)
        if rec.before != rec.after:
            trans[(rec.before, rec.after)] += 1
        if keep_records:
            records.append(rec)
    elapsed = state.clock - (t0 if t0 is not None else state.clock)
    return HopRun(dict(occ), trans, rate_time, elapsed, events, state.current, records)
