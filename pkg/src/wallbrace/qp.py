"""Dense convex QP solver for the condensed MPC problem.

Solves
    min  1/2 U' H U + m' U
    s.t. c_min <= C U <= c_max

with H symmetric positive definite (the MPC cost always is, thanks to the
input regularization). The algorithm is operator splitting (ADMM) with
over-relaxation and Ruiz equilibration, plus an active-set "polish" solve
that recovers machine-precision KKT residuals once the active set has been
identified. A solver instance keeps primal/dual iterates between calls, so
re-solving the slowly varying per-tick problems of a 250 Hz control loop
takes only a handful of iterations.

Equality constraints are rows with c_min == c_max. A presolve pass
eliminates single-variable equality rows (the "pinned to zero" entries of
inactive contacts), which shrinks the walking-MPC problems by a factor of
about three before any iteration happens.

Infinite bounds are encoded as magnitudes >= INF_BOUND and skipped in all
residual bookkeeping.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

INF_BOUND = 1e18


class QpStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    """Dense QP data: H (n,n) PSD, m (n,), C (k,n), bounds (k,).

    ``validate=False`` skips the shape/symmetry checks for trusted callers
    on the control hot path.
    """

    H: np.ndarray
    m: np.ndarray
    C: np.ndarray
    c_min: np.ndarray
    c_max: np.ndarray
    validate: bool = True

    def __post_init__(self):
        if not self.validate:
            return
        self.H = np.asarray(self.H, dtype=float)
        self.m = np.asarray(self.m, dtype=float).ravel()
        n = self.m.shape[0]
        if self.C is None or np.size(self.C) == 0:
            self.C = np.zeros((0, n))
            self.c_min = np.zeros(0)
            self.c_max = np.zeros(0)
        else:
            self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
            self.c_min = np.asarray(self.c_min, dtype=float).ravel()
            self.c_max = np.asarray(self.c_max, dtype=float).ravel()
        if self.H.shape != (n, n):
            raise ValueError(f"H shape {self.H.shape} does not match m ({n})")
        if self.C.shape[1] != n or self.C.shape[0] != self.c_min.shape[0] \
                or self.c_min.shape != self.c_max.shape:
            raise ValueError("constraint dimensions are inconsistent")
        scale = max(1.0, float(np.max(np.abs(self.H), initial=0.0)))
        if float(np.max(np.abs(self.H - self.H.T), initial=0.0)) > 1e-10 * scale:
            raise ValueError("H must be symmetric")

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def k(self) -> int:
        return self.C.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.m @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    lam_lower: np.ndarray
    lam_upper: np.ndarray
    status: QpStatus
    iterations: int
    solve_time: float

    @property
    def y(self) -> np.ndarray:
        """Combined multiplier lam_upper - lam_lower, the sign convention of
        the stationarity residual H x + m + C' y = 0."""
        return self.lam_upper - self.lam_lower


def kkt_residual(problem: QpProblem, solution: QpSolution):
    """Max-norm (stationarity, primal feasibility, complementarity) of a
    candidate solution. Infinite bounds are skipped."""
    x = solution.x
    y = solution.y
    stat = float(np.max(np.abs(problem.H @ x + problem.m + problem.C.T @ y), initial=0.0))
    if problem.k == 0:
        return stat, 0.0, 0.0
    cx = problem.C @ x
    lo_fin = problem.c_min > -INF_BOUND
    up_fin = problem.c_max < INF_BOUND
    viol_lo = np.where(lo_fin, np.maximum(problem.c_min - cx, 0.0), 0.0)
    viol_up = np.where(up_fin, np.maximum(cx - problem.c_max, 0.0), 0.0)
    feas = float(max(viol_lo.max(initial=0.0), viol_up.max(initial=0.0)))
    comp_lo = np.where(lo_fin, solution.lam_lower * np.abs(cx - problem.c_min),
                       np.abs(solution.lam_lower))
    comp_up = np.where(up_fin, solution.lam_upper * np.abs(cx - problem.c_max),
                       np.abs(solution.lam_upper))
    comp = float(max(np.max(comp_lo, initial=0.0), np.max(comp_up, initial=0.0)))
    return stat, feas, comp


class _Reduced:
    """Presolve: fix variables pinned by single-entry equality rows, drop
    rows without free support (after checking their consistency)."""

    __slots__ = ("free", "fixed_mask", "fixed_vals", "rows_kept",
                 "pin_row_of_var", "H", "m", "C", "lo", "up", "infeasible",
                 "pattern")

    def __init__(self, p: QpProblem, cache: "_Pattern | None" = None,
                 eq_tol: float = 1e-12):
        n, k = p.n, p.k
        self.infeasible = False
        self.pattern = None
        if k and np.any(p.c_min - p.c_max > 1e-9):
            self.infeasible = True
            return
        eq_pat = (np.abs(p.c_max - p.c_min) <= eq_tol) if k else np.zeros(0, bool)
        unb_pat = ((p.c_min <= -INF_BOUND) & (p.c_max >= INF_BOUND)) if k else np.zeros(0, bool)
        if cache is not None and cache.matches(p, eq_pat, unb_pat):
            pat = cache
        else:
            pat = _Pattern(p, eq_pat, unb_pat)
        self.pattern = pat

        fixed_vals = np.zeros(n)
        if pat.single.size:
            vals = 0.5 * (p.c_min[pat.single] + p.c_max[pat.single]) / pat.coef
            # first pin of each variable wins; later ones must agree
            if np.any(np.abs(vals - vals[pat.first_of[pat.single_pos]]) > 1e-9):
                self.infeasible = True
                return
            fixed_vals[pat.fixed_cols] = vals[pat.first_idx]
        self.free = pat.free
        self.fixed_mask = pat.fixed_mask
        self.fixed_vals = fixed_vals
        self.pin_row_of_var = pat.pin_row_of_var
        self.rows_kept = pat.rows_kept
        if pat.dead.size:
            cx = pat.C_dead_fixed @ fixed_vals[pat.fixed_cols] if pat.fixed_cols.size \
                else np.zeros(pat.dead.size)
            if np.any(cx < p.c_min[pat.dead] - 1e-8) or np.any(cx > p.c_max[pat.dead] + 1e-8):
                self.infeasible = True
                return
        free = pat.free
        fixed_nonzero = pat.fixed_cols.size and np.any(fixed_vals[pat.fixed_cols])
        self.H = p.H[np.ix_(free, free)]
        self.m = p.m[free].copy()
        if fixed_nonzero:
            self.m += p.H[np.ix_(free, pat.fixed_cols)] @ fixed_vals[pat.fixed_cols]
        if pat.rows_kept.size:
            self.C = pat.C_red
            if fixed_nonzero:
                shift = pat.C_kept_fixed @ fixed_vals[pat.fixed_cols]
                self.lo = p.c_min[pat.rows_kept] - shift
                self.up = p.c_max[pat.rows_kept] - shift
            else:
                self.lo = p.c_min[pat.rows_kept]
                self.up = p.c_max[pat.rows_kept]
        else:
            self.C = np.zeros((0, free.size))
            self.lo = np.zeros(0)
            self.up = np.zeros(0)


class _Pattern:
    """Structural analysis of a (C, bound-pattern) pair, cacheable across
    the many per-tick solves that share the same constraint matrix."""

    __slots__ = ("C_ref", "eq_pat", "unb_pat", "single", "single_pos", "cols",
                 "coef", "first_idx", "first_of", "fixed_cols", "fixed_mask",
                 "pin_row_of_var", "free", "rows_kept", "dead", "C_red",
                 "C_kept_fixed", "C_dead_fixed")

    def __init__(self, p: QpProblem, eq_pat, unb_pat):
        n, k = p.n, p.k
        self.C_ref = p.C
        self.eq_pat = eq_pat
        self.unb_pat = unb_pat
        fixed_mask = np.zeros(n, dtype=bool)
        pin_row_of_var = np.full(n, -1, dtype=int)
        is_pin = np.zeros(k, dtype=bool)
        if k:
            nnz = np.count_nonzero(p.C, axis=1)
            single = np.flatnonzero((nnz == 1) & eq_pat)
        else:
            single = np.zeros(0, dtype=int)
        self.single = single
        if single.size:
            cols = np.abs(p.C[single]).argmax(axis=1)
            coef = p.C[single, cols]
            fcols, first_idx = np.unique(cols, return_index=True)
            first_of = np.zeros(k, dtype=int)
            first_of[single] = first_idx[np.searchsorted(fcols, cols)]
            fixed_mask[fcols] = True
            pin_row_of_var[fcols] = single[first_idx]
            is_pin[single] = True
            self.cols = cols
            self.coef = coef
            self.first_idx = first_idx
            self.first_of = first_of
            self.fixed_cols = fcols
            self.single_pos = single
        else:
            self.cols = self.coef = self.first_idx = np.zeros(0, dtype=int)
            self.first_of = np.zeros(k, dtype=int)
            self.fixed_cols = np.zeros(0, dtype=int)
            self.single_pos = single
        self.fixed_mask = fixed_mask
        self.pin_row_of_var = pin_row_of_var
        free = np.flatnonzero(~fixed_mask)
        self.free = free
        if k:
            if free.size:
                support_free = np.count_nonzero(p.C[:, free], axis=1) > 0
            else:
                support_free = np.zeros(k, dtype=bool)
            keep = support_free & ~is_pin & ~unb_pat
            self.rows_kept = np.flatnonzero(keep)
            self.dead = np.flatnonzero(~support_free & ~is_pin)
        else:
            self.rows_kept = np.zeros(0, dtype=int)
            self.dead = np.zeros(0, dtype=int)
        self.C_red = p.C[np.ix_(self.rows_kept, free)] if self.rows_kept.size \
            else np.zeros((0, free.size))
        self.C_kept_fixed = p.C[np.ix_(self.rows_kept, self.fixed_cols)] \
            if self.rows_kept.size and self.fixed_cols.size else None
        self.C_dead_fixed = p.C[np.ix_(self.dead, self.fixed_cols)] \
            if self.dead.size and self.fixed_cols.size else None

    def matches(self, p: QpProblem, eq_pat, unb_pat) -> bool:
        return (p.C is self.C_ref or
                (p.C.shape == self.C_ref.shape and np.array_equal(p.C, self.C_ref))) \
            and np.array_equal(eq_pat, self.eq_pat) \
            and np.array_equal(unb_pat, self.unb_pat)


def _ruiz_scale(H, m, C, lo, up, iters):
    """Ruiz equilibration of [H; C] columns and C rows plus scalar cost
    scaling. Returns scaled data and the diagonal scalings (d, e, c)."""
    n = H.shape[0]
    k = C.shape[0]
    d = np.ones(n)
    e = np.ones(k)
    Hs, ms, Cs = H.copy(), m.copy(), C.copy()
    los, ups = lo.copy(), up.copy()
    for _ in range(iters):
        col = np.max(np.abs(Hs), axis=0, initial=0.0)
        if k:
            col = np.maximum(col, np.max(np.abs(Cs), axis=0, initial=0.0))
        col[col < 1e-12] = 1.0
        dd = 1.0 / np.sqrt(col)
        Hs = (Hs * dd).T * dd
        Hs = 0.5 * (Hs + Hs.T)
        ms = ms * dd
        d = d * dd
        if k:
            Cs = Cs * dd
            row = np.max(np.abs(Cs), axis=1, initial=0.0)
            row[row < 1e-12] = 1.0
            ee = 1.0 / np.sqrt(row)
            Cs = Cs * ee[:, None]
            los = los * ee
            ups = ups * ee
            e = e * ee
    cost = max(float(np.max(np.abs(Hs), initial=0.0)), float(np.max(np.abs(ms), initial=0.0)))
    c = 1.0 / cost if cost > 1e-12 else 1.0
    return Hs * c, ms * c, Cs, los, ups, d, e, c


class DenseQpSolver:
    """Operator-splitting QP solver with warm-start state.

    Single-owner: one instance per control loop. Distinct instances share
    nothing and can run concurrently.
    """

    def __init__(self, rho: float = 0.1, sigma: float = 1e-6, alpha: float = 1.6,
                 scaling_iters: int = 3):
        self.rho = rho
        self.sigma = sigma
        self.alpha = alpha
        self.scaling_iters = scaling_iters
        self._warm_x = None
        self._warm_y = None
        self._rho_state = rho
        self._pattern = None
        self._scaling = None   # (nf, kr, d, e, c) reused across warm solves

    def reset(self):
        self._warm_x = None
        self._warm_y = None
        self._rho_state = self.rho
        self._pattern = None
        self._scaling = None

    def warm_start(self, x, y=None):
        self._warm_x = None if x is None else np.asarray(x, float).copy()
        self._warm_y = None if y is None else np.asarray(y, float).copy()

    def solve(self, problem: QpProblem, tolerance: float = 1e-8,
              max_iter: int = 200) -> QpSolution:
        t0 = time.perf_counter()
        n, k = problem.n, problem.k
        red = _Reduced(problem, cache=self._pattern)
        if red.pattern is not None:
            self._pattern = red.pattern
        if red.infeasible:
            return self._finish(problem, np.zeros(n), np.zeros(k),
                                QpStatus.INFEASIBLE, 0, t0)
        if red.free.size == 0:
            x = red.fixed_vals.copy()
            y = self._assemble_duals(problem, red, x, np.zeros(0))
            return self._finish(problem, x, y, QpStatus.OPTIMAL, 0, t0)
        if red.C.shape[0] == 0:
            xr = np.linalg.solve(red.H, -red.m)
            x = red.fixed_vals.copy()
            x[red.free] = xr
            y = self._assemble_duals(problem, red, x, np.zeros(0))
            return self._finish(problem, x, y, QpStatus.OPTIMAL, 0, t0)

        # hot start: the previous tick's active set is usually still optimal,
        # so one polished KKT solve settles the new problem without iterating
        hot = self._hot_start(red, tolerance)
        if hot is not None:
            xr, yr = hot
            x = red.fixed_vals.copy()
            x[red.free] = xr
            y = self._assemble_duals(problem, red, x, yr)
            return self._finish(problem, x, y, QpStatus.OPTIMAL, 0, t0)

        xr, yr, status, iters = self._admm(red, tolerance, max_iter)
        x = red.fixed_vals.copy()
        x[red.free] = xr
        y = self._assemble_duals(problem, red, x, yr)
        return self._finish(problem, x, y, status, iters, t0)

    # -- internals ---------------------------------------------------------

    def _hot_start(self, red: _Reduced, tol: float):
        """Seed the active-set refinement from the previous solve's duals.
        Returns (x, y) on success, None to fall back to the iteration."""
        if self._warm_y is None or not red.rows_kept.size:
            return None
        if self._warm_y.shape[0] <= red.rows_kept.max():
            return None
        yr = self._warm_y[red.rows_kept]
        eqm = (red.up - red.lo) < 1e-12
        act_lo = (~eqm) & (red.lo > -INF_BOUND) & (yr < 0.0)
        act_up = (~eqm) & (red.up < INF_BOUND) & (yr > 0.0)
        xp, yp = self._polish(red.H, red.m, red.C, red.lo, red.up,
                              eqm, act_lo, act_up, tol, max_refine=4)
        if xp is None:
            return None
        return xp, yp

    def _admm(self, red: _Reduced, tol: float, max_iter: int):
        H, m, C, lo, up = red.H, red.m, red.C, red.lo, red.up
        nf = H.shape[0]
        kr = C.shape[0]
        # reuse the previous equilibration when the reduced shape matches:
        # any fixed positive scaling is valid, and consecutive tick problems
        # are nearly identical
        if self._scaling is not None and self._scaling[0] == nf and self._scaling[1] == kr:
            d, e, c = self._scaling[2:]
            dH = d[:, None] * d
            Hs = H * dH * c
            ms = m * d * c
            Cs = C * (e[:, None] * d)
            los = lo * e
            ups = up * e
        else:
            Hs, ms, Cs, los, ups, d, e, c = _ruiz_scale(H, m, C, lo, up, self.scaling_iters)
            self._scaling = (nf, kr, d, e, c)

        eq = (ups - los) < 1e-12
        rho_vec = np.where(eq, self._rho_state * 1e3, self._rho_state)

        if self._warm_x is not None and self._warm_x.shape[0] == red.fixed_vals.shape[0]:
            x = self._warm_x[red.free] / d
        else:
            x = np.zeros(nf)
        if (self._warm_y is not None and red.rows_kept.size
                and self._warm_y.shape[0] > red.rows_kept.max()):
            y = self._warm_y[red.rows_kept] * (c / e)
        else:
            y = np.zeros(C.shape[0])
        z = np.clip(Cs @ x, los, ups)

        sig = self.sigma
        alpha = self.alpha
        rho = self._rho_state
        eye_nf = np.eye(nf)
        M = Hs + sig * eye_nf + (Cs.T * rho_vec) @ Cs
        L = np.linalg.cholesky(M)
        CsT = Cs.T
        loose = max(100.0 * tol, 1e-6)

        status = QpStatus.MAX_ITER
        it = 0
        last_sig = None
        last_attempt = -100
        while it < max_iter:
            it += 1
            rhs = sig * x - ms + CsT @ (rho_vec * z - y)
            w = solve_triangular(L, rhs, lower=True, check_finite=False)
            xt = solve_triangular(L.T, w, lower=False, check_finite=False)
            zt = Cs @ xt
            y_prev = y
            x = alpha * xt + (1.0 - alpha) * x
            zr = alpha * zt + (1.0 - alpha) * z + y / rho_vec
            z = np.clip(zr, los, ups)
            y = rho_vec * (zr - z)
            if it % 5 == 0 or it == max_iter:
                xu = d * x
                yu = (e * y) / c
                cxu = C @ xu
                Hxu = H @ xu
                rp = float(np.max(np.abs(cxu - np.clip(cxu, lo, up)), initial=0.0))
                rd_vec_u = Hxu + m + C.T @ yu
                rd = float(np.max(np.abs(rd_vec_u), initial=0.0))
                if rp <= tol and rd <= tol:
                    return xu, yu, QpStatus.OPTIMAL, it
                # polish once the iterate is loosely converged in relative
                # terms; skip only if the same active set already failed
                scale_p = max(float(np.max(np.abs(cxu), initial=0.0)), 1.0)
                scale_d = max(float(np.max(np.abs(Hxu), initial=0.0)),
                              float(np.max(np.abs(m), initial=0.0)), 1.0)
                if rp <= 1e-3 * scale_p and rd <= 1e-3 * scale_d:
                    eqm, act_lo, act_up = self._active_set(C, lo, up, xu, yu, rp)
                    act_sig = (act_lo | act_up).tobytes()
                    if act_sig != last_sig or it - last_attempt >= 20:
                        last_sig = act_sig
                        last_attempt = it
                        xp, yp = self._polish(H, m, C, lo, up, eqm, act_lo, act_up, tol)
                        if xp is not None:
                            return xp, yp, QpStatus.OPTIMAL, it
                if it % 25 == 0:
                    if self._primal_infeasible(Cs, los, ups, y - y_prev):
                        return d * x, (e * y) / c, QpStatus.INFEASIBLE, it
                    # adaptive rho: rebalance primal vs dual progress
                    csx = Cs @ x
                    rp_s = float(np.max(np.abs(csx - z), initial=0.0))
                    rp_s /= max(float(np.max(np.abs(csx), initial=0.0)),
                                float(np.max(np.abs(z), initial=0.0)), 1e-10)
                    rd_s_vec = Hs @ x + ms + CsT @ y
                    rd_s = float(np.max(np.abs(rd_s_vec), initial=0.0))
                    rd_s /= max(float(np.max(np.abs(Hs @ x), initial=0.0)),
                                float(np.max(np.abs(CsT @ y), initial=0.0)),
                                float(np.max(np.abs(ms), initial=0.0)), 1e-10)
                    ratio = np.sqrt(rp_s / max(rd_s, 1e-16))
                    if ratio > 5.0 or ratio < 0.2:
                        rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                        self._rho_state = rho
                        rho_vec = np.where(eq, rho * 1e3, rho)
                        M = Hs + sig * eye_nf + (CsT * rho_vec) @ Cs
                        L = np.linalg.cholesky(M)

        xu = d * x
        yu = (e * y) / c
        cxu = C @ xu
        rp = float(np.max(np.abs(cxu - np.clip(cxu, lo, up)), initial=0.0))
        eqm, act_lo, act_up = self._active_set(C, lo, up, xu, yu, rp)
        xp, yp = self._polish(H, m, C, lo, up, eqm, act_lo, act_up, tol)
        if xp is not None:
            return xp, yp, QpStatus.OPTIMAL, it
        cxu = C @ xu
        rp = float(np.max(np.abs(cxu - np.clip(cxu, lo, up)), initial=0.0))
        rd = float(np.max(np.abs(H @ xu + m + C.T @ yu), initial=0.0))
        if rp <= tol and rd <= tol:
            status = QpStatus.OPTIMAL
        return xu, yu, status, it

    @staticmethod
    def _primal_infeasible(Cs, los, ups, dy, ctol=1e-9):
        nrm = float(np.max(np.abs(dy), initial=0.0))
        if nrm < 1e-13:
            return False
        v = dy / nrm
        if float(np.max(np.abs(Cs.T @ v), initial=0.0)) > 1e-7:
            return False
        # certificate is invalid if it puts weight on an infinite bound
        if np.any((v > 1e-8) & (ups >= INF_BOUND)) or np.any((v < -1e-8) & (los <= -INF_BOUND)):
            return False
        up_c = np.where(ups >= INF_BOUND, 0.0, ups)
        lo_c = np.where(los <= -INF_BOUND, 0.0, los)
        gap = float(up_c @ np.maximum(v, 0.0) + lo_c @ np.minimum(v, 0.0))
        return gap < -ctol

    @staticmethod
    def _active_set(C, lo, up, x, y, rp):
        """Active set from dual signs (the projection leaves y exactly zero
        on inactive rows) plus rows sitting at a bound within the current
        primal accuracy (catches weakly active rows with y ~ 0)."""
        eq = (up - lo) < 1e-12
        cx = C @ x
        near = max(10.0 * rp, 1e-9)
        on_lo = (lo > -INF_BOUND) & (np.abs(cx - lo) <= near)
        on_up = (up < INF_BOUND) & (np.abs(cx - up) <= near)
        act_lo = (~eq) & (lo > -INF_BOUND) & ((y < 0.0) | (on_lo & (y <= 0.0)))
        act_up = (~eq) & (up < INF_BOUND) & ((y > 0.0) | (on_up & (y >= 0.0)))
        return eq, act_lo, act_up

    @staticmethod
    def _polish(H, m, C, lo, up, eq, act_lo, act_up, tol, max_refine=10):
        """Active-set refinement seeded by a tentative active set: equality
        KKT solve on the working set, drop wrong-signed rows, add violated
        rows, repeat. Returns (x, y) when the result passes the full KKT
        check at `tol`, else None-pair."""
        from scipy.linalg import lu_factor, lu_solve, qr as _qr
        k = C.shape[0]
        n = H.shape[0]
        if k == 0:
            return None, None
        # working set as side flags: -1 lower, +1 upper, equalities fixed
        side = np.zeros(k, dtype=np.int8)
        side[act_lo] = -1
        side[act_up] = 1
        side[eq] = 2
        reg = 1e-11
        lo_fin = lo > -INF_BOUND
        up_fin = up < INF_BOUND
        use_qr = False
        for _ in range(max_refine):
            idx = np.flatnonzero(side != 0)
            na = idx.size
            if na > 0:
                Ca = C[idx]
                # degenerate corners give dependent rows and non-unique
                # duals; prune to an independent subset when needed (the
                # regularized first pass flags it via wrong-signed duals)
                if use_qr and na > 1:
                    R_, piv = _qr(Ca.T, mode="r", pivoting=True)
                    diag = np.abs(np.diag(R_))
                    ref = diag[0] if diag.size else 1.0
                    rank = int(np.sum(diag > max(Ca.shape) * 1e-12 * ref))
                    if rank < na:
                        keep = np.sort(piv[:rank])
                        idx = idx[keep]
                        Ca = C[idx]
                        na = idx.size
                ba = np.where(side[idx] == 1, up[idx], lo[idx])
            else:
                Ca = np.zeros((0, n))
                ba = np.zeros(0)
            KKT = np.empty((n + na, n + na))
            KKT[:n, :n] = H
            KKT[np.arange(n), np.arange(n)] += reg
            KKT[:n, n:] = Ca.T
            KKT[n:, :n] = Ca
            KKT[n:, n:] = 0.0
            KKT[n + np.arange(na), n + np.arange(na)] = -reg
            rhs = np.concatenate([-m, ba])
            KKT0 = KKT.copy()
            KKT0[np.arange(n), np.arange(n)] -= reg
            KKT0[n + np.arange(na), n + np.arange(na)] += reg
            try:
                fac = lu_factor(KKT, check_finite=False)
                sol = lu_solve(fac, rhs, check_finite=False)
                sol = sol + lu_solve(fac, rhs - KKT0 @ sol, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                return None, None
            xp = sol[:n]
            dual = sol[n:]
            dscale = 1e-9 * max(1.0, float(np.max(np.abs(dual), initial=0.0)))
            wrong = ((side[idx] == -1) & (dual > dscale)) | ((side[idx] == 1) & (dual < -dscale))
            changed = False
            if np.any(wrong):
                side[idx[wrong]] = 0
                use_qr = True
                changed = True
            cxp = C @ xp
            vtol = max(tol, 1e-10)
            v_lo = lo_fin & (cxp < lo - vtol) & (side == 0)
            v_up = up_fin & (cxp > up + vtol) & (side == 0)
            if np.any(v_lo) or np.any(v_up):
                side[v_lo] = -1
                side[v_up] = 1
                changed = True
            if changed:
                continue
            dual = np.where(side[idx] == -1, np.minimum(dual, 0.0), dual)
            dual = np.where(side[idx] == 1, np.maximum(dual, 0.0), dual)
            yp = np.zeros(k)
            yp[idx] = dual
            rp = max(float(np.max(np.where(lo_fin, lo - cxp, 0.0), initial=0.0)),
                     float(np.max(np.where(up_fin, cxp - up, 0.0), initial=0.0)))
            rd = float(np.max(np.abs(H @ xp + m + C.T @ yp), initial=0.0))
            if rp <= tol and rd <= tol:
                return xp, yp
            return None, None
        return None, None

    def _assemble_duals(self, problem: QpProblem, red: _Reduced, x, yr):
        """Full-size duals: kept rows from the reduced solve, pinned rows
        recovered from the stationarity balance."""
        y = np.zeros(problem.k)
        if red.rows_kept.size:
            y[red.rows_kept] = yr
        pinned = np.flatnonzero(red.pin_row_of_var >= 0)
        if pinned.size:
            resid = problem.H @ x + problem.m + problem.C.T @ y
            rows = red.pin_row_of_var[pinned]
            y[rows] = -resid[pinned] / problem.C[rows, pinned]
        self._warm_x = x.copy()
        self._warm_y = y.copy()
        return y

    def _finish(self, problem, x, y, status, iters, t0):
        return QpSolution(
            x=x,
            objective=problem.objective(x),
            lam_lower=np.maximum(-y, 0.0),
            lam_upper=np.maximum(y, 0.0),
            status=status,
            iterations=iters,
            solve_time=time.perf_counter() - t0,
        )


def solve_qp(problem: QpProblem, tolerance: float = 1e-8, max_iter: int = 200,
             solver: DenseQpSolver | None = None) -> QpSolution:
    """One-shot solve. Pass a DenseQpSolver to reuse warm-start state."""
    if solver is None:
        solver = DenseQpSolver()
    return solver.solve(problem, tolerance=tolerance, max_iter=max_iter)


# -- binary debug dump -------------------------------------------------------

_MAGIC = b"WBQP"
_VERSION = 1


def dump_qp(problem: QpProblem, fp) -> None:
    """16-byte header (magic, version, n, k as little-endian uint32) followed
    by H, m, C, c_min, c_max as float64 LE, row-major."""
    fp.write(_MAGIC + struct.pack("<III", _VERSION, problem.n, problem.k))
    for arr in (problem.H, problem.m, problem.C, problem.c_min, problem.c_max):
        fp.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_qp(fp) -> QpProblem:
    header = fp.read(16)
    if len(header) != 16 or header[:4] != _MAGIC:
        raise ValueError("not a QP dump")
    version, n, k = struct.unpack("<III", header[4:])
    if version != _VERSION:
        raise ValueError(f"unsupported dump version {version}")

    def rd(count):
        return np.frombuffer(fp.read(8 * count), dtype="<f8").astype(float)

    H = rd(n * n).reshape(n, n)
    m = rd(n)
    C = rd(k * n).reshape(k, n)
    lo = rd(k)
    up = rd(k)
    return QpProblem(H, m, C, lo, up)
