"""Dense tableau simplex for ``max c.x  s.t.  A x <= b, x >= 0`` with ``b >= 0``.

Because ``b >= 0`` the all-slack basis is feasible and no phase one is
needed.  The entering column is the most negative reduced cost; after a run
of degenerate pivots the loop switches to Bland's rule until the objective
moves again, so it cannot cycle.  Ties always go to the lowest index, which
keeps runs bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


class LPError(RuntimeError):
    pass


class LPUnbounded(LPError):
    pass


class LPNumericalError(LPError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    y: np.ndarray  # constraint duals, >= 0
    value: float
    dual_value: float
    pivots: int

    @property
    def gap(self) -> float:
        return abs(self.dual_value - self.value) / max(1.0, abs(self.value))


DEGENERATE_STREAK = 50


@numba.njit(cache=True)
def _pivot_loop(T, basis, tol, max_pivots):
    """Returns (pivots, status); status 0 optimal, 1 unbounded, 2 pivot limit, 3 non-finite."""
    m = T.shape[0] - 1
    ncol = T.shape[1] - 1
    pivots = 0
    streak = 0
    while True:
        j = -1
        if streak < DEGENERATE_STREAK:
            best = -tol
            for c in range(ncol):
                if T[m, c] < best:
                    best = T[m, c]
                    j = c
        else:
            for c in range(ncol):
                if T[m, c] < -tol:
                    j = c
                    break
        if j < 0:
            return pivots, 0
        i = -1
        best_ratio = np.inf
        for r in range(m):
            a = T[r, j]
            if a > tol:
                ratio = T[r, ncol] / a
                if i < 0:
                    best_ratio = ratio
                    i = r
                    continue
                slack = tol * max(1.0, abs(best_ratio))
                if ratio < best_ratio - slack:
                    best_ratio = ratio
                    i = r
                elif ratio <= best_ratio + slack and basis[r] < basis[i]:
                    i = r
        if i < 0:
            return pivots, 1
        streak = streak + 1 if best_ratio <= tol else 0
        piv = T[i, j]
        for c in range(ncol + 1):
            T[i, c] /= piv
        for r in range(m + 1):
            if r == i:
                continue
            fct = T[r, j]
            if fct != 0.0:
                for c in range(ncol + 1):
                    T[r, c] -= fct * T[i, c]
        basis[i] = j
        pivots += 1
        if pivots > max_pivots:
            return pivots, 2
        if not np.isfinite(T[i, ncol]):
            return pivots, 3


def solve_lp(c, A, b, tol: float = 1e-9, max_pivots: int = 200_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < 0):
        raise ValueError("right-hand side must be nonnegative")

    # rows 0..m-1 constraints, row m objective (reduced costs, negated)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = np.arange(n, n + m)

    pivots, status = _pivot_loop(T, basis, tol, max_pivots)
    if status == 1:
        raise LPUnbounded("objective unbounded")
    if status == 2:
        raise LPNumericalError("pivot limit exceeded")
    if status == 3:
        raise LPNumericalError("non-finite tableau")

    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    if np.any(x < -1e-7):
        raise LPNumericalError("primal infeasibility after pivoting")
    x = np.maximum(x[:n], 0.0)
    y = T[m, n:n + m].copy()
    y[np.abs(y) < tol] = 0.0
    if np.any(y < -1e-7):
        raise LPNumericalError("dual infeasibility after pivoting")
    value = float(c @ x)
    dual_value = float(b @ np.maximum(y, 0.0))
    return LPResult(x=x, y=np.maximum(y, 0.0), value=value, dual_value=dual_value, pivots=pivots)
