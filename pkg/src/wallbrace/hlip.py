"""Pendulum-based step planner.

Walking is reduced per plane (sagittal x, frontal y) to a point mass on a
massless leg at constant height z0: during single support the CoM state
relative to the stance foot flows as

    d/dt [p, pd] = [[0, 1], [lam^2, 0]] [p, pd],   lam = sqrt(g / z0).

Sampling that flow at the pre-impact instants of consecutive steps gives a
linear step-to-step map x_{k+1} = A x_k + B u_k in the step length u_k.
Step feedback with a deadbeat gain removes any step-to-step error in two
steps (the map is 2-dimensional). Periodic orbits supply the nominal step
lengths; swing-foot trajectories are smooth polynomial arcs between
liftoff and the commanded foothold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class HlipConfig:
    lam: float                      # sqrt(g / z0), 1/s
    t_ssp: float = 1.0 / 3.0        # single-support duration, s
    t_dsp: float = 0.0              # double-support duration, s
    z_swing_min: float = 0.0        # swing apex bounds, m
    z_swing_max: float = 0.06
    nominal_frequency: float = 3.0  # steps per second, normal walking
    recovery_frequency: float = 5.0

    def __post_init__(self):
        if self.lam <= 0 or self.t_ssp <= 0:
            raise ValueError("lam and t_ssp must be positive")
        if self.z_swing_max <= self.z_swing_min or self.z_swing_min < 0:
            raise ValueError("swing height bounds must satisfy 0 <= min < max")

    @classmethod
    def from_robot(cls, g_mag: float, z0: float, **kw) -> "HlipConfig":
        return cls(lam=float(np.sqrt(g_mag / z0)), **kw)

    @property
    def step_period(self) -> float:
        return self.t_ssp + self.t_dsp

    def with_frequency(self, freq: float) -> "HlipConfig":
        """Same planner at a different stepping frequency; double-support
        share of the period is preserved."""
        period = 1.0 / freq
        share = self.t_dsp / self.step_period
        return HlipConfig(self.lam, period * (1 - share), period * share,
                          self.z_swing_min, self.z_swing_max,
                          self.nominal_frequency, self.recovery_frequency)


@dataclass
class HlipState:
    """Per-plane pre-impact state: CoM position relative to the stance
    foot, and CoM velocity."""

    p: float
    v: float

    def as_vector(self) -> np.ndarray:
        return np.array([self.p, self.v])

    @classmethod
    def from_vector(cls, x) -> "HlipState":
        return cls(float(x[0]), float(x[1]))


@dataclass
class SwingTarget:
    """One planned step: lengths per plane, when it lands, where the swing
    foot started."""

    u_x: float
    u_y: float
    touchdown_time: float
    start_xy: np.ndarray

    def __post_init__(self):
        self.start_xy = np.asarray(self.start_xy, dtype=float)


def ssp_flow(x: HlipState, t: float, lam: float) -> HlipState:
    """Closed-form pendulum flow for time t >= 0."""
    if t < 0:
        raise ValueError("t must be non-negative")
    c = np.cosh(lam * t)
    s = np.sinh(lam * t)
    return HlipState(x.p * c + x.v * s / lam, x.p * lam * s + x.v * c)


def s2s_matrices(config: HlipConfig):
    """Step-to-step (A, B): A is the pendulum transition over one support
    phase, B = A (-1, 0)^T carries the foothold shift."""
    lam, T = config.lam, config.t_ssp
    c = np.cosh(lam * T)
    s = np.sinh(lam * T)
    A = np.array([[c, s / lam], [lam * s, c]])
    B = A @ np.array([-1.0, 0.0])
    return A, B


def nominal_p1_orbit(v_desired: float, config: HlipConfig):
    """Period-1 orbit for a steady velocity: fixed point of the S2S map.
    Returns (pre-impact state, nominal step length)."""
    A, B = s2s_matrices(config)
    u_star = v_desired * config.step_period
    x_star = np.linalg.solve(np.eye(2) - A, B * u_star)
    return HlipState.from_vector(x_star), u_star


def alternating_p2_orbit(u_mag: float, config: HlipConfig) -> HlipState:
    """Period-2 orbit of steps (+u, -u, +u, ...): the lateral sway. Returns
    the pre-impact state from which the NEXT step is +u; the opposite-leg
    state is its negation."""
    A, B = s2s_matrices(config)
    x1 = np.linalg.solve(np.eye(2) - A @ A, A @ (B * u_mag) + B * (-u_mag))
    return HlipState.from_vector(x1)


def deadbeat_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Gain for the additive step update u = u* + K (x - x*): places both
    eigenvalues of the closed-loop S2S map A + B K at the origin, so any
    pre-impact error dies in two steps. Ackermann pole placement at zero
    on the sign-adjusted pair; rejects uncontrollable (A, B)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(2)
    ctrb = np.column_stack([-B, -(A @ B)])
    if abs(np.linalg.det(ctrb)) < 1e-12:
        raise ValueError("(A, B) is not controllable")
    return np.array([0.0, 1.0]) @ np.linalg.solve(ctrb, A @ A)


def step_feedback(x_robot: HlipState, x_hlip: HlipState, u_nominal: float,
                  K: np.ndarray) -> float:
    """Closed-loop step length: extends the step in the direction of the
    pre-impact error."""
    err = x_robot.as_vector() - x_hlip.as_vector()
    return float(u_nominal + K @ err)


def _bezier(coeffs: np.ndarray, s: float) -> float:
    """De Casteljau evaluation, numerically stable for any degree."""
    pts = np.array(coeffs, dtype=float)
    for _ in range(len(pts) - 1):
        pts = pts[:-1] * (1.0 - s) + pts[1:] * s
    return float(pts[0])

# horizontal blend: quintic with zero velocity and acceleration at both
# ends, so footholds are hit without impact velocity
_BLEND = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
# vertical arc: degree-6, symmetric, zero endpoint velocity/acceleration;
# peak value of the raw arc is 20 * 0.5^6 = 0.3125 at midstep
_ARC = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
_ARC_PEAK = 0.3125


def swing_blend(t: float, t_ssp: float) -> float:
    """b(t): 0 at liftoff, 1 at touchdown."""
    return _bezier(_BLEND, np.clip(t / t_ssp, 0.0, 1.0))


def swing_trajectory(t: float, target: SwingTarget, config: HlipConfig,
                     stance_xy=None) -> np.ndarray:
    """Swing-foot position at phase t in [0, t_ssp].

    Horizontal: blend from the CURRENT swing-foot position (the caller
    passes it in target.start_xy each tick, replacing the liftoff point so
    replanned footholds join smoothly) to the commanded foothold. Vertical:
    polynomial arc from z_swing_min up to z_swing_max and back.
    """
    if t < 0 or t > config.t_ssp + 1e-12:
        raise ValueError("phase outside the single-support interval")
    s = np.clip(t / config.t_ssp, 0.0, 1.0)
    b = _bezier(_BLEND, s)
    origin = np.zeros(2) if stance_xy is None else np.asarray(stance_xy, float)
    foothold = origin + np.array([target.u_x, target.u_y])
    xy = (1.0 - b) * target.start_xy + b * foothold
    z = config.z_swing_min + (config.z_swing_max - config.z_swing_min) \
        * _bezier(_ARC, s) / _ARC_PEAK
    return np.array([xy[0], xy[1], z])
