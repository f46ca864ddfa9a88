"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Solves ``min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9


class SimplexError(RuntimeError):
    """Numerical breakdown; ``pivot_log`` holds (phase, entering, leaving row, pivot value)."""

    def __init__(self, message: str, pivot_log: list):
        super().__init__(message)
        self.pivot_log = pivot_log


@dataclass
class SimplexResult:
    status: str                 # "optimal" | "infeasible"
    x: np.ndarray
    value: float
    iterations: int
    pivot_log: list = field(default_factory=list, repr=False)


def _pivot(T: np.ndarray, r: int, c: int) -> None:
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    T[:, c] = 0.0
    T[r, c] = 1.0


def _bland_loop(T, basis, n_cols, phase, log, max_iter, pivot_tol):
    """Pivot until no reduced cost in the last row is negative."""
    m = T.shape[0] - 1
    it = 0
    while True:
        red = T[m, :n_cols]
        cand = np.flatnonzero(red < -pivot_tol)
        if cand.size == 0:
            return it
        e = int(cand[0])
        col = T[:m, e]
        rows = np.flatnonzero(col > pivot_tol)
        if rows.size == 0:
            log.append((phase, e, -1, 0.0))
            raise SimplexError(f"phase {phase}: unbounded direction at column {e}", log)
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        leave = int(ties[np.argmin(basis[ties])])
        log.append((phase, e, leave, float(T[leave, e])))
        _pivot(T, leave, e)
        basis[leave] = e
        it += 1
        if it > max_iter:
            raise SimplexError(f"phase {phase}: iteration limit {max_iter} exceeded", log)


def simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, *, pivot_tol: float = PIVOT_TOL,
            feas_tol: float = FEAS_TOL, max_iter: int | None = None) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    # standard form: [A_eq 0; A_ub I] [x; s] = b
    A = np.zeros((m, n + m_ub))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    N = n + m_ub
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000

    # artificials only where no slack can start the basis
    basis = np.empty(m, dtype=int)
    art_rows = []
    for i in range(m):
        if i >= m_eq and not neg[i]:
            basis[i] = n + (i - m_eq)
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    T = np.zeros((m + 1, N + n_art + 1))
    T[:m, :N] = A
    T[:m, -1] = b
    for k, i in enumerate(art_rows):
        T[i, N + k] = 1.0
        basis[i] = N + k
    log: list = []
    iters = 0

    if n_art:
        # phase 1: minimise the sum of artificials
        T[m, N:N + n_art] = 1.0
        for i in art_rows:
            T[m] -= T[i]
        iters += _bland_loop(T, basis, N + n_art, 1, log, max_iter, pivot_tol)
        if -T[m, -1] > feas_tol:
            return SimplexResult("infeasible", np.full(n, np.nan), np.nan, iters, log)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= N:
                nz = np.flatnonzero(np.abs(T[i, :N]) > pivot_tol)
                if nz.size:
                    log.append((1, int(nz[0]), i, float(T[i, nz[0]])))
                    _pivot(T, i, int(nz[0]))
                    basis[i] = int(nz[0])
                    iters += 1
                else:
                    keep[i] = False
        T = np.vstack([T[:m][keep], T[m:]])
        basis = basis[keep]
        m = int(keep.sum())
        T = np.hstack([T[:, :N], T[:, -1:]])

    # phase 2
    cost = np.concatenate([c, np.zeros(m_ub)])
    T[m, :] = 0.0
    T[m, :N] = cost
    for i in range(m):
        if cost[basis[i]] != 0:
            T[m] -= cost[basis[i]] * T[i]
    iters += _bland_loop(T, basis, N, 2, log, max_iter, pivot_tol)

    x = np.zeros(N)
    x[basis] = T[:m, -1]
    x[np.abs(x) < 1e-13] = 0.0
    if np.any(x < -feas_tol):
        raise SimplexError("negative basic variable after phase 2", log)
    x = np.maximum(x, 0.0)[:n]
    return SimplexResult("optimal", x, float(c @ x), iters, log)
