"""Zero-order-hold discretization of the continuous-time linear model.

x[k+1] = A_d x[k] + B_d u[k] with A_d = exp(A dt) and
B_d = (integral_0^dt exp(A tau) dtau) B, both read off one augmented
matrix exponential

    exp([[A, I], [0, 0]] dt) = [[A_d, Psi], [0, I]],   B_d = Psi B.

Exact for any A including the rigid-body model (where A is nilpotent and
the series truncates) and the pendulum blocks (where it does not).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm


@dataclass
class DiscreteDynamics:
    A_d: np.ndarray
    B_d: np.ndarray
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (np.all(np.isfinite(self.A_d)) and np.all(np.isfinite(self.B_d))):
            raise ValueError("discrete dynamics must be finite")


def zoh_transition(A: np.ndarray, dt: float):
    """(A_d, Psi) with Psi = integral of the state transition over one
    sample; B_d for any B is then Psi @ B."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = A
    M[:n, n:] = np.eye(n)
    E = expm(M * dt)
    return E[:n, :n], E[:n, n:]


def zoh_discretize(A_ce: np.ndarray, B_ce: np.ndarray, dt: float) -> DiscreteDynamics:
    A_ce = np.asarray(A_ce, dtype=float)
    B_ce = np.asarray(B_ce, dtype=float)
    if A_ce.shape[0] != A_ce.shape[1] or B_ce.shape[0] != A_ce.shape[0]:
        raise ValueError("A must be square and conformable with B")
    A_d, Psi = zoh_transition(A_ce, dt)
    return DiscreteDynamics(A_d, Psi @ B_ce, dt)


def zoh_transition_nilpotent3(A: np.ndarray, dt: float):
    """Closed form of zoh_transition for A with A^3 = 0 (the rigid-body
    model at fixed yaw). Used on the control hot path; agrees with the
    generic routine to machine precision."""
    A2 = A @ A
    n = A.shape[0]
    eye = np.eye(n)
    A_d = eye + A * dt + A2 * (0.5 * dt * dt)
    Psi = eye * dt + A * (0.5 * dt * dt) + A2 * (dt ** 3 / 6.0)
    return A_d, Psi
