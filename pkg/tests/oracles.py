"""Independent reference computations used by several test modules.

These deliberately avoid the library's own solution paths: brute-force
enumeration for the QP, explicit RK4 for flows, direct formulas elsewhere.
"""

import itertools

import numpy as np


def enumerate_qp(problem, feas_tol=1e-8):
    """Global optimum by enumerating candidate active sets.

    For every subset of constraint rows (up to n, batched per size) and
    every bound-side assignment, solve the equality-constrained problem and
    keep the best feasible candidate. Exact for problems with a
    nondegenerate optimum.
    """
    H, m, C = problem.H, problem.m, problem.C
    lo, up = problem.c_min, problem.c_max
    n, k = problem.n, problem.k
    best_f = np.inf
    best_x = None
    # unconstrained candidate
    x = np.linalg.solve(H, -m)
    if _feasible(C, lo, up, x, feas_tol):
        best_f, best_x = problem.objective(x), x
    for r in range(1, min(n, k) + 1):
        for S in itertools.combinations(range(k), r):
            Ca = C[list(S)]
            for sides in itertools.product((0, 1), repeat=r):
                ba = np.array([up[i] if s else lo[i] for i, s in zip(S, sides)])
                if np.any(np.abs(ba) >= 1e18):
                    continue
                KKT = np.block([[H, Ca.T], [Ca, np.zeros((r, r))]])
                try:
                    sol = np.linalg.solve(KKT, np.concatenate([-m, ba]))
                except np.linalg.LinAlgError:
                    continue
                x = sol[:n]
                if _feasible(C, lo, up, x, feas_tol):
                    f = problem.objective(x)
                    if f < best_f - 1e-12:
                        best_f, best_x = f, x
    return best_x, best_f


def _feasible(C, lo, up, x, tol):
    cx = C @ x
    return bool(np.all(cx >= lo - tol) and np.all(cx <= up + tol))


def random_feasible_qp(rng, n=None, k=None, p_inf=0.2):
    """A well-scaled strictly feasible PD instance."""
    from wallbrace.qp import QpProblem
    n = n or int(rng.integers(2, 9))
    k = k or int(rng.integers(1, 13))
    A = rng.normal(size=(n, n))
    H = A @ A.T + np.eye(n) * (0.5 + rng.random())
    m = rng.normal(size=n)
    C = rng.normal(size=(k, n))
    x_feas = rng.normal(size=n)
    lo = C @ x_feas - rng.uniform(0.1, 2.0, size=k)
    up = C @ x_feas + rng.uniform(0.1, 2.0, size=k)
    lo[rng.random(k) < p_inf] = -1e19
    up[rng.random(k) < p_inf] = 1e19
    return QpProblem(H, m, C, lo, up)


def rk4_flow(f, x0, t, dt=1e-5):
    """Generic fixed-step RK4 integration of xdot = f(x)."""
    x = np.asarray(x0, dtype=float).copy()
    steps = int(round(t / dt))
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def ackermann_origin(A, B):
    """Pole placement at the origin for the pair (A, -B): the gain of the
    additive step-update law. Direct Ackermann formula."""
    Bm = -np.asarray(B, float).reshape(-1)
    ctrb = np.column_stack([Bm, A @ Bm])
    return np.array([0.0, 1.0]) @ np.linalg.solve(ctrb, A @ A)
