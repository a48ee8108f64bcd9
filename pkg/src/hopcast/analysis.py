"""Closed forms for the hopping chain: log-sum-exp rate, Gibbs distribution,
the noise-extended chain and its stationary law, and the noise bounds."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, logsumexp, softmax


@dataclass(frozen=True)
class DistributionVector:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "support", tuple(self.support))
        object.__setattr__(self, "probs", p)
        if p.shape != (len(self.support),):
            raise ValueError("support and probs differ in length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to 1")

    def __getitem__(self, key):
        return float(self.probs[self.support.index(key)])

    def mean(self, x) -> float:
        return float(np.dot(self.probs, x))


def _ids(n, support):
    return tuple(range(n)) if support is None else tuple(support)


def log_sum_exp_gap(x, beta: float) -> float:
    """``lse_beta(x) - max(x)`` computed without forming the large terms.

    The max contributes exactly 1 to the sum, so the result lies in
    ``[0, log|x| / beta]`` even in floating point.
    """
    x = np.asarray(x, dtype=float)
    if beta <= 0 or x.size == 0:
        raise ValueError("need beta > 0 and at least one rate")
    return float(np.log(np.exp(beta * (x - x.max())).sum()) / beta)


def log_sum_exp_rate(x, beta: float) -> float:
    return float(np.max(x)) + log_sum_exp_gap(x, beta)


def optimal_distribution(x, beta: float, support=None) -> DistributionVector:
    x = np.asarray(x, dtype=float)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return DistributionVector(_ids(len(x), support), softmax(beta * x))


def gibbs_objective(p, x, beta: float) -> float:
    """``sum p x - (1/beta) sum p log p``, the entropy-regularized rate."""
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return float(p @ np.asarray(x) - (p[nz] * np.log(p[nz])).sum() / beta)


def tv_distance(p: DistributionVector, q: DistributionVector) -> float:
    if p.support != q.support:
        raise ValueError("distributions have different supports")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


@dataclass(frozen=True)
class NoiseModel:
    """Per-configuration observation error ``x_f + (j/n_f) delta_f``, ``j = -n_f..n_f``.

    ``eta[f]`` has length ``2 n_f + 1`` and is indexed from ``j = -n_f``.
    """

    delta: tuple[float, ...]
    n: tuple[int, ...]
    eta: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        eta = tuple(np.asarray(e, dtype=float) for e in self.eta)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        if not len(self.delta) == len(self.n) == len(eta):
            raise ValueError("delta, n and eta must cover the same configurations")
        for d, k, e in zip(self.delta, self.n, eta):
            if d < 0 or k < 1:
                raise ValueError("need delta >= 0 and n >= 1")
            if e.shape != (2 * k + 1,) or np.any(e < 0) or abs(e.sum() - 1) > 1e-9:
                raise ValueError("eta must be a distribution over -n..n")

    @classmethod
    def exact(cls, m: int) -> "NoiseModel":
        return cls((0.0,) * m, (1,) * m, tuple(np.array([0.0, 1.0, 0.0]) for _ in range(m)))

    @classmethod
    def uniform(cls, delta: Sequence[float], n: int = 1) -> "NoiseModel":
        e = np.full(2 * n + 1, 1.0 / (2 * n + 1))
        return cls(tuple(delta), (n,) * len(delta), tuple(e for _ in delta))

    def __len__(self):
        return len(self.delta)

    @property
    def delta_max(self) -> float:
        return max(self.delta, default=0.0)

    def offsets(self, f: int) -> np.ndarray:
        k = self.n[f]
        return np.arange(-k, k + 1) / k * self.delta[f]

    def sample(self, f: int, rng: np.random.Generator) -> float:
        return float(rng.choice(self.offsets(f), p=self.eta[f]))


@dataclass(frozen=True)
class ExtendedChain:
    states: tuple[tuple[int, int], ...]  # (configuration index, j)
    observed: np.ndarray  # observed rate per state
    Q: np.ndarray  # generator, rows sum to 0


def accept_prob(x_old: float, x_new: float, beta: float) -> float:
    """``e^{b x_new} / (e^{b x_old} + e^{b x_new})`` without overflow."""
    return float(expit(beta * (x_new - x_old)))


def extended_chain(x, noise: NoiseModel, beta: float, tau: float,
                   adjacency: Sequence[tuple[int, int]]) -> ExtendedChain:
    """Generator over states ``(f, j)``; adjacent configurations are linked in both directions."""
    x = np.asarray(x, dtype=float)
    if len(noise) != len(x):
        raise ValueError("noise model does not match rates")
    states, obs, idx = [], [], {}
    for f in range(len(x)):
        for j, off in zip(range(-noise.n[f], noise.n[f] + 1), noise.offsets(f)):
            idx[(f, j)] = len(states)
            states.append((f, j))
            obs.append(x[f] + off)
    obs = np.array(obs)
    Q = np.zeros((len(states), len(states)))
    nbrs = {f: set() for f in range(len(x))}
    for a, b in adjacency:
        nbrs[a].add(b)
        nbrs[b].add(a)
    rate0 = np.exp(-tau)
    for (f, j), i in idx.items():
        for g in sorted(nbrs[f]):
            for jj in range(-noise.n[g], noise.n[g] + 1):
                w = noise.eta[g][jj + noise.n[g]]
                if w == 0:
                    continue
                k = idx[(g, jj)]
                Q[i, k] = w * rate0 * accept_prob(obs[i], obs[k], beta)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return ExtendedChain(tuple(states), obs, Q)


def stationary_extended(x, noise: NoiseModel, beta: float, support=None):
    """Returns ``(p_tilde over states, p_bar over configurations, p_bar via alpha_f)``."""
    x = np.asarray(x, dtype=float)
    logw, owner = [], []
    for f in range(len(x)):
        off = noise.offsets(f)
        with np.errstate(divide="ignore"):
            logw.append(np.log(noise.eta[f]) + beta * (x[f] + off))
        owner += [f] * len(off)
    logw = np.concatenate(logw)
    owner = np.array(owner)
    p_tilde = softmax(logw)
    p_bar = np.bincount(owner, weights=p_tilde, minlength=len(x))

    # alpha_f form: p_bar ~ alpha_f e^{b x_f}, alpha_f = sum_j eta_j e^{b j delta / n}
    with np.errstate(divide="ignore"):
        log_alpha = np.array([logsumexp(np.log(noise.eta[f]) + beta * noise.offsets(f))
                              for f in range(len(x))])
    p_alpha = softmax(log_alpha + beta * x)
    ids = _ids(len(x), support)
    return p_tilde, DistributionVector(ids, p_bar / p_bar.sum()), DistributionVector(ids, p_alpha)


def stationary_solve(Q: np.ndarray) -> np.ndarray:
    """Stationary law of an irreducible generator by GTH elimination.

    Grassmann-Taksar-Heyman works only with the off-diagonal rates and never
    subtracts, so it stays accurate when rates span many orders of magnitude.
    """
    A = np.array(Q, dtype=float)
    np.fill_diagonal(A, 0.0)
    m = A.shape[0]
    for k in range(m - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise ValueError("generator is reducible")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    pi = np.zeros(m)
    pi[0] = 1.0
    for k in range(1, m):
        pi[k] = pi[:k] @ A[:k, k]
    return pi / pi.sum()


@dataclass(frozen=True)
class NoiseBounds:
    tv_bound: float
    rate_gap_bound: float
    tv_actual: float
    rate_gap_actual: float

    @property
    def holds(self) -> bool:
        return self.tv_actual <= self.tv_bound + 1e-12 and self.rate_gap_actual <= self.rate_gap_bound + 1e-12


def noise_bounds(x, noise: NoiseModel, beta: float) -> NoiseBounds:
    x = np.asarray(x, dtype=float)
    shrink = -np.expm1(-2 * beta * noise.delta_max)
    pstar = optimal_distribution(x, beta)
    _, pbar, _ = stationary_extended(x, noise, beta)
    return NoiseBounds(
        tv_bound=float(shrink),
        rate_gap_bound=float(2 * np.abs(x).max() * shrink),
        tv_actual=tv_distance(pstar, pbar),
        rate_gap_actual=abs(pstar.mean(x) - pbar.mean(x)),
    )


def empirical_distribution(occupancy: dict, support: Sequence) -> DistributionVector:
    """Normalize time-in-state totals over ``support`` (missing entries count as 0)."""
    t = np.array([occupancy.get(k, 0.0) for k in support], dtype=float)
    if t.sum() <= 0:
        raise ValueError("no occupancy recorded")
    return DistributionVector(tuple(support), t / t.sum())


def distribution_csv(ids: Sequence[str], p_star, p_bar=None, empirical=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_id", "p_star", "p_bar", "empirical"])
    cols = [p_star, p_bar, empirical]
    cols = [None if c is None else np.asarray(getattr(c, "probs", c)) for c in cols]
    for i, cid in enumerate(ids):
        w.writerow([cid] + ["" if c is None else f"{c[i]:.10f}" for c in cols])
    return buf.getvalue()
