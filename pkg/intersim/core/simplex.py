"""Bounded-variable primal simplex on a dense tableau.

Solves   min c.x   s.t.   A x (<=, >=, =) b,   lower <= x <= upper

Every row gets a slack s with  A x + s = b  whose bounds encode the relation.
Rows whose starting slack value is out of bounds get an artificial variable,
removed by a phase-one pass.
"""
import numpy as np

from intersim import settings
from intersim.loggers import solver_log
from intersim.utils import dataclass

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'
ITERATION_LIMIT = 'iteration-limit'

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
BLAND_AFTER = 50  # consecutive degenerate pivots

LE, GE, EQ = '<=', '>=', '='

_BASIC, _LOWER, _UPPER, _FREE = 0, 1, 2, 3


@dataclass
class LpResult:
    status: str
    x: object = None  # np.ndarray of structural values
    objective: float = None  # c.x, minimization form
    duals: object = None  # one multiplier per row (minimization form)
    iterations: int = 0


class _Tableau:
    def __init__(self, c, A, senses, b, lower, upper, feas_tol):
        m, n = A.shape
        self.m, self.n = m, n
        self.feas_tol = feas_tol

        s_lo = np.where(senses == GE, -np.inf, 0.0)
        s_hi = np.where(senses == LE, np.inf, 0.0)

        x = np.zeros(n)
        x_state = np.full(n, _FREE)
        has_lo = np.isfinite(lower)
        has_hi = np.isfinite(upper)
        x[has_lo] = lower[has_lo]
        x_state[has_lo] = _LOWER
        only_hi = ~has_lo & has_hi
        x[only_hi] = upper[only_hi]
        x_state[only_hi] = _UPPER

        resid = b - A @ x
        clipped = np.clip(resid, s_lo, s_hi)
        gap = resid - clipped
        needs_art = np.abs(gap) > feas_tol
        art_rows = np.flatnonzero(needs_art)
        k = len(art_rows)
        self.n_art = k

        total = n + m + k
        self.A_full = np.zeros((m, total))
        self.A_full[:, :n] = A
        self.A_full[:, n : n + m] = np.eye(m)
        signs = np.ones(m)
        for col, row in enumerate(art_rows):
            sign = 1.0 if gap[row] > 0 else -1.0
            self.A_full[row, n + m + col] = sign
            signs[row] = sign

        self.lo = np.concatenate([lower, s_lo, np.zeros(k)])
        self.hi = np.concatenate([upper, s_hi, np.full(k, np.inf)])
        self.b = b

        self.x = np.concatenate([x, np.zeros(m), np.zeros(k)])
        self.state = np.concatenate([x_state, np.zeros(m, dtype=int), np.full(k, _LOWER)])
        self.basis = np.arange(n, n + m)

        for col, row in enumerate(art_rows):
            j = n + m + col
            self.basis[row] = j
            self.state[j] = _BASIC
            self.x[j] = abs(gap[row])
            s = n + row
            self.x[s] = clipped[row]
            self.state[s] = _LOWER if clipped[row] == s_lo[row] else _UPPER
        for row in np.flatnonzero(~needs_art):
            s = n + row
            self.x[s] = resid[row]
            self.state[s] = _BASIC

        # B is diagonal with entries +-1, so B^-1 A = diag(signs) A
        rows_with_art = np.zeros(m, dtype=bool)
        rows_with_art[art_rows] = True
        self.T = self.A_full.copy()
        self.T[rows_with_art] *= signs[rows_with_art, None]
        self.iterations = 0
        self.excluded = np.zeros(total, dtype=bool)

    # -- core loop --

    def reduced_costs(self, cost):
        return cost - cost[self.basis] @ self.T

    def _entering(self, d, bland):
        state = self.state
        eligible_up = ((state == _LOWER) & (d < -COST_TOL)) | ((state == _FREE) & (d < -COST_TOL))
        eligible_down = ((state == _UPPER) & (d > COST_TOL)) | ((state == _FREE) & (d > COST_TOL))
        fixed = self.lo == self.hi
        eligible = (eligible_up | eligible_down) & ~fixed & ~self.excluded
        candidates = np.flatnonzero(eligible)
        if not len(candidates):
            return None, 0
        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(np.abs(d[candidates]))])
        return j, (1.0 if eligible_up[j] else -1.0)

    def _ratio_test(self, j, direction, bland):
        alpha = direction * self.T[:, j]
        xb = self.x[self.basis]
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]

        ratios = np.full(self.m, np.inf)
        dec = alpha > PIVOT_TOL
        inc = alpha < -PIVOT_TOL
        with np.errstate(invalid='ignore', divide='ignore'):
            r_dec = (xb - lo_b) / alpha
            r_inc = (hi_b - xb) / -alpha
        take_dec = dec & np.isfinite(lo_b)
        take_inc = inc & np.isfinite(hi_b)
        ratios[take_dec] = r_dec[take_dec]
        ratios[take_inc] = r_inc[take_inc]
        ratios = np.maximum(ratios, 0.0)

        flip = self.hi[j] - self.lo[j]
        best = np.min(ratios) if self.m else np.inf
        if flip <= best:
            return flip, None, alpha
        ties = np.flatnonzero(ratios <= best + 1e-12)
        if bland:
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(alpha[ties]))])
        return best, r, alpha

    def _pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0

    def run(self, cost, max_iter):
        d = self.reduced_costs(cost)
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            j, direction = self._entering(d, bland)
            if j is None:
                return OPTIMAL
            theta, r, alpha = self._ratio_test(j, direction, bland)
            if not np.isfinite(theta):
                return UNBOUNDED
            self.iterations += 1

            self.x[j] += direction * theta
            self.x[self.basis] -= theta * alpha
            if r is None:
                # bound flip, basis unchanged
                self.state[j] = _UPPER if direction > 0 else _LOWER
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
            else:
                leaving = self.basis[r]
                if alpha[r] > 0:
                    self.x[leaving] = self.lo[leaving]
                    self.state[leaving] = _LOWER
                else:
                    self.x[leaving] = self.hi[leaving]
                    self.state[leaving] = _UPPER
                self._pivot(r, j)
                self.basis[r] = j
                self.state[j] = _BASIC
                d = d - d[j] * self.T[r]
                d[j] = 0.0

            if theta <= self.feas_tol * 1e-3:
                degenerate += 1
                if degenerate > BLAND_AFTER and not bland:
                    solver_log.debug("switching to Bland's rule after %d degenerate pivots", degenerate)
                    bland = True
            else:
                degenerate = 0

    def refresh_basic_values(self):
        nonbasic = self.state != _BASIC
        rhs = self.b - self.A_full[:, nonbasic] @ self.x[nonbasic]
        binv = self.T[:, self.n : self.n + self.m]
        self.x[self.basis] = binv @ rhs

    def drive_out_artificials(self):
        first_art = self.n + self.m
        for r in range(self.m):
            if self.basis[r] < first_art:
                continue
            row = self.T[r, :first_art]
            candidates = np.flatnonzero((np.abs(row) > 1e-7) & (self.state[:first_art] != _BASIC))
            if len(candidates):
                j = int(candidates[np.argmax(np.abs(row[candidates]))])
                art = self.basis[r]
                self._pivot(r, j)
                self.basis[r] = j
                self.state[j] = _BASIC
                self.state[art] = _LOWER
                self.x[art] = 0.0
        # artificials are fixed at zero from here on (redundant rows keep theirs basic)
        self.lo[first_art:] = 0.0
        self.hi[first_art:] = 0.0
        self.excluded[first_art:] = True
        self.refresh_basic_values()


def solve_lp(c, A, senses, b, lower, upper, feas_tol=None, max_iter=None) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    senses = np.asarray(senses, dtype=object)
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    feas_tol = settings.feasibility_tol if feas_tol is None else feas_tol

    if np.any(lower > upper + feas_tol):
        return LpResult(INFEASIBLE)

    m, n = A.shape
    if max_iter is None:
        max_iter = max(1000, 50 * (m + n))

    tab = _Tableau(c, A, senses, b, lower, upper, feas_tol)
    total = tab.A_full.shape[1]

    if tab.n_art:
        phase1 = np.zeros(total)
        phase1[n + m :] = 1.0
        status = tab.run(phase1, max_iter)
        if status == ITERATION_LIMIT:
            return LpResult(ITERATION_LIMIT, iterations=tab.iterations)
        tab.refresh_basic_values()
        infeasibility = float(np.sum(tab.x[n + m :]))
        if infeasibility > feas_tol:
            return LpResult(INFEASIBLE, iterations=tab.iterations)
        tab.drive_out_artificials()

    cost = np.zeros(total)
    cost[:n] = c
    status = tab.run(cost, max_iter)
    if status != OPTIMAL:
        return LpResult(status, iterations=tab.iterations)
    tab.refresh_basic_values()

    x = tab.x[:n].copy()
    duals = cost[tab.basis] @ tab.T[:, n : n + m]
    return LpResult(OPTIMAL, x, float(c @ x), duals, tab.iterations)


def lagrangian_bound(c, A, senses, b, lower, upper, duals) -> float:
    """Weak-duality lower bound for  min c.x  given row multipliers.

    Returns -inf when the multipliers leave some bounded direction unpriced.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, len(c))
    senses = np.asarray(senses, dtype=object)
    y = np.asarray(duals, dtype=float)

    s_lo = np.where(senses == GE, -np.inf, 0.0)
    s_hi = np.where(senses == LE, np.inf, 0.0)
    reduced = np.concatenate([c - y @ A, -y])
    lo = np.concatenate([np.asarray(lower, dtype=float), s_lo])
    hi = np.concatenate([np.asarray(upper, dtype=float), s_hi])

    total = float(y @ np.asarray(b, dtype=float))
    for r, l, u in zip(reduced, lo, hi):
        if abs(r) <= COST_TOL:
            bound = l if np.isfinite(l) else (u if np.isfinite(u) else 0.0)
            total += r * bound
        elif r > 0:
            if not np.isfinite(l):
                return -np.inf
            total += r * l
        else:
            if not np.isfinite(u):
                return -np.inf
            total += r * u
    return total
