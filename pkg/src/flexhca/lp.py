"""Small dense two-phase simplex.

Solves ``max c @ x  s.t.  A @ x <= b, x >= 0`` with Bland's rule. Meant for
the few-hundred-variable programs used to cross-check the delay solver, not
for production-size LPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LpNumericalFailure


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int


class LpInfeasible(LpNumericalFailure):
    pass


class LpUnbounded(LpNumericalFailure):
    pass


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    piv = tab[row]
    others = np.flatnonzero(np.abs(tab[:, col]) > 0)
    for r in others:
        if r != row:
            tab[r] -= tab[r, col] * piv


def _run(tab: np.ndarray, basis: list, n_cols: int, tol: float, max_iter: int) -> int:
    """Iterate on a tableau whose last row holds reduced costs ``z_j - c_j``.

    Entering column: smallest index with a negative reduced cost (Bland).
    """
    m = tab.shape[0] - 1
    for it in range(max_iter):
        obj = tab[-1, :n_cols]
        entering = np.flatnonzero(obj < -tol)
        if entering.size == 0:
            return it
        col = int(entering[0])
        colv = tab[:m, col]
        pos = np.flatnonzero(colv > tol)
        if pos.size == 0:
            raise LpUnbounded("objective is unbounded")
        ratios = tab[pos, -1] / colv[pos]
        best = ratios.min()
        ties = pos[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, row, col)
        basis[row] = col
    raise LpNumericalFailure(f"simplex did not converge in {max_iter} iterations")


def simplex_max(c, A_ub, b_ub, tol: float = 1e-10, max_iter: int = 50_000) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float)
    m, n = A.shape
    neg = b < 0
    n_art = int(neg.sum())
    # columns: x (n) | slack (m) | artificial (n_art) | rhs
    width = n + m + n_art + 1
    tab = np.zeros((m + 1, width))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    rneg = np.flatnonzero(neg)
    tab[rneg, :n + m] *= -1.0
    tab[rneg, -1] *= -1.0
    basis = list(range(n, n + m))
    for j, r in enumerate(np.flatnonzero(neg)):
        tab[r, n + m + j] = 1.0
        basis[r] = n + m + j

    iters = 0
    if n_art:
        # phase 1: minimise the sum of artificials == maximise its negative
        tab[-1, :] = 0.0
        tab[-1, n + m:n + m + n_art] = 1.0
        for r in np.flatnonzero(neg):
            tab[-1] -= tab[r]
        iters += _run(tab, basis, n + m + n_art, tol, max_iter)
        if -tab[-1, -1] > 1e-7 * max(1.0, np.abs(b).max()):
            raise LpInfeasible("linear program is infeasible")
        # drive remaining artificials out of the basis
        for r in range(m):
            if basis[r] >= n + m:
                cand = np.flatnonzero(np.abs(tab[r, :n + m]) > tol)
                if cand.size:
                    _pivot(tab, r, int(cand[0]))
                    basis[r] = int(cand[0])
        tab = np.delete(tab, np.s_[n + m:n + m + n_art], axis=1)

    tab[-1, :] = 0.0
    tab[-1, :n] = -c
    for r in range(m):
        j = basis[r]
        if j < n and c[j] != 0:
            tab[-1] += c[j] * tab[r]
    iters += _run(tab, basis, n + m, tol, max_iter)
    x = np.zeros(n + m)
    for r in range(m):
        if basis[r] < n + m:
            x[basis[r]] = tab[r, -1]
    xs = x[:n]
    return LpResult(x=xs, objective=float(c @ xs), iterations=iters)
