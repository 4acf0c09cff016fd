"""Closed-loop walking controllers for the rigid-body plant.

Two variants share the same pendulum-based stepping layer:

* ``hlip``: the baseline. Stance wrench from the classic leg-aligned
  pendulum force (plus a height PD) and weak, saturated posture moments
  standing in for whole-body joint tracking; no push detection, no hands,
  fixed stepping frequency.

* ``mpc``: the full stack. Stance/hand wrenches from the receding-horizon
  optimizer, push detection from its predicted trajectory, recovery mode
  with wall bracing and faster stepping via the supervisor.

The controller consumes the plant state each tick and produces the wrench
to apply, kinematic limb targets, and foot placement events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import hlip
from .hlip import HlipConfig, HlipState, SwingTarget
from .mpc import ContactSchedule, MpcConfig, SrbMpc, StepContact
from .plant import SrbPlant, check_hand_contact
from .srb import NU, ContactSet, RobotParams
from .supervisor import (HandPhase, Supervisor, SupervisorConfig, WallSet,
                         hand_target, limit_step_location)

VARIANTS = ("hlip", "mpc")


@dataclass
class BaselineGains:
    """Stance wrench law of the pendulum-only baseline. Moment limits are
    deliberately modest: the stand-in robot has no ankle roll, some ankle
    pitch, and hip yaw."""

    kp_z: float = 8.0
    kd_z: float = 4.0
    kp_pitch: float = 60.0
    kd_pitch: float = 15.0
    kp_roll: float = 60.0
    kd_roll: float = 15.0
    kp_yaw: float = 20.0
    kd_yaw: float = 8.0
    m_roll_max: float = 8.0
    m_pitch_max: float = 30.0
    m_yaw_max: float = 20.0


@dataclass
class GaitConfig:
    foot_half_spacing: float = 0.07
    lateral_gain: float = 0.6        # outer loop recentering the gait, 1/s
    lateral_v_max: float = 0.12      # m/s cap on the recentering velocity
    y_desired: float = 0.0           # walkway centerline


class TelemetryLog:
    """JSON-lines telemetry: one record per control tick plus mode
    transition events."""

    def __init__(self, fp=None):
        self.fp = fp

    def record(self, payload: dict):
        if self.fp is not None:
            self.fp.write(json.dumps(payload) + "\n")


class WalkingController:
    """One robot's control stack; single-owner, stateful."""

    def __init__(self, variant: str, params: RobotParams, walls: WallSet,
                 mpc_config: MpcConfig | None = None,
                 hlip_config: HlipConfig | None = None,
                 supervisor_config: SupervisorConfig | None = None,
                 gait: GaitConfig | None = None,
                 gains: BaselineGains | None = None,
                 telemetry: TelemetryLog | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.params = params
        self.walls = walls
        self.mpc_config = mpc_config or MpcConfig()
        self.hlip_config = hlip_config or HlipConfig.from_robot(params.g_mag, params.z0)
        self.sup_config = supervisor_config or SupervisorConfig()
        self.gait = gait or GaitConfig()
        self.gains = gains or BaselineGains()
        self.telemetry = telemetry or TelemetryLog()

        self.supervisor = Supervisor(self.sup_config, walls)
        self.mpc = SrbMpc(self.mpc_config, params) if variant == "mpc" else None
        self._s2s_cache: dict = {}
        self._logged_transitions = 0

        # gait state
        self.stance = "right"
        self.phase = 0.0
        self.frequency = self.hlip_config.nominal_frequency
        self.swing_start = None       # filled on reset()
        self.prev_predicted = None
        self.prev_reference = None
        self.hand_contact_point = None
        self.hand_home_offset = np.array([0.0, 0.0, 0.15])
        self.last_u0 = np.zeros(NU)

    # -- helpers -------------------------------------------------------------

    def _plane_matrices(self, freq: float):
        key = round(freq, 9)
        if key not in self._s2s_cache:
            cfg = self.hlip_config.with_frequency(freq)
            A, B = hlip.s2s_matrices(cfg)
            K = hlip.deadbeat_gain(A, B)
            # orbit solves cached: x*_P1 = M_p1 u*, and the sway fixed point
            M_p1 = np.linalg.solve(np.eye(2) - A, B)
            u_sway = 2.0 * self.gait.foot_half_spacing
            x_sway = hlip.alternating_p2_orbit(u_sway, cfg).as_vector()
            self._s2s_cache[key] = (cfg, A, B, K, M_p1, x_sway)
        return self._s2s_cache[key]

    def _step_targets(self, plant: SrbPlant, command, t_rem: float, cfg: HlipConfig,
                      A, B, K, M_p1, x_sway):
        """Planned foothold (x, y) in the world, from per-plane pendulum
        feedback in the heading frame, clamped away from walls."""
        st = plant.state
        yaw = st.euler[2]
        c, s = np.cos(yaw), np.sin(yaw)
        stance_p = st.p_left if self.stance == "left" else st.p_right
        dx, dy = st.p_c[0] - stance_p[0], st.p_c[1] - stance_p[1]
        rel = (c * dx + s * dy, -s * dx + c * dy)
        vel = (c * st.v_c[0] + s * st.v_c[1], -s * st.v_c[0] + c * st.v_c[1])
        v_x, v_y, _ = command
        swing = "left" if self.stance == "right" else "right"
        ch = np.cosh(cfg.lam * t_rem)
        sh = np.sinh(cfg.lam * t_rem)

        # sagittal plane: steady-velocity orbit
        x_pre = (rel[0] * ch + vel[0] * sh / cfg.lam,
                 rel[0] * cfg.lam * sh + vel[0] * ch)
        u_star = v_x * cfg.step_period
        u_kx = u_star + K[0] * (x_pre[0] - M_p1[0] * u_star) \
            + K[1] * (x_pre[1] - M_p1[1] * u_star)

        # frontal plane: alternating sway about the walkway centerline, with
        # a small velocity command recentering the gait
        sgn = 1.0 if swing == "left" else -1.0
        y_pre = (rel[1] * ch + vel[1] * sh / cfg.lam,
                 rel[1] * cfg.lam * sh + vel[1] * ch)
        y_pre_world = stance_p[1] + s * x_pre[0] + c * y_pre[0]
        v_lat = float(np.clip(self.gait.lateral_gain * (self.gait.y_desired - y_pre_world),
                              -self.gait.lateral_v_max, self.gait.lateral_v_max)) + v_y
        u_y_p1 = v_lat * cfg.step_period
        y_star = sgn * x_sway + M_p1 * u_y_p1
        u_nom_y = sgn * 2.0 * self.gait.foot_half_spacing + u_y_p1
        u_ky = u_nom_y + K[0] * (y_pre[0] - y_star[0]) + K[1] * (y_pre[1] - y_star[1])

        target = np.array([stance_p[0] + c * u_kx - s * u_ky,
                           stance_p[1] + s * u_kx + c * u_ky])
        return limit_step_location(target, self.walls, self.sup_config.step_margin)

    def _baseline_wrench(self, plant: SrbPlant) -> np.ndarray:
        st = plant.state
        p = self.params
        g = self.gains
        stance_p = st.p_left if self.stance == "left" else st.p_right
        lam2 = p.g_mag / p.z0
        F = p.mass * lam2 * (st.p_c - stance_p)
        F[2] = p.mass * (p.g_mag + g.kp_z * (p.z0 - st.p_c[2]) - g.kd_z * st.v_c[2])
        F[2] = np.clip(F[2], 0.0, p.f_foot_max)
        F[0] = np.clip(F[0], -p.mu * F[2], p.mu * F[2])
        F[1] = np.clip(F[1], -p.mu * F[2], p.mu * F[2])
        rpy = st.euler
        M = np.array([
            np.clip(-g.kp_roll * rpy[0] - g.kd_roll * st.omega[0],
                    -g.m_roll_max, g.m_roll_max),
            np.clip(-g.kp_pitch * rpy[1] - g.kd_pitch * st.omega[1],
                    -g.m_pitch_max, g.m_pitch_max),
            np.clip(-g.kp_yaw * rpy[2] - g.kd_yaw * st.omega[2],
                    -g.m_yaw_max, g.m_yaw_max),
        ])
        u = np.zeros(NU)
        if self.stance == "left":
            u[3:6] = F
            u[12:15] = M
        else:
            u[6:9] = F
            u[15:18] = M
        return u

    def _hand_frame(self):
        wall = self.supervisor.active_wall
        n = wall.normal
        t1 = np.cross(n, np.array([0.0, 0.0, 1.0]))
        nrm = np.linalg.norm(t1)
        t1 = np.array([1.0, 0.0, 0.0]) if nrm < 1e-9 else t1 / nrm
        t2 = np.cross(n, t1)
        return np.column_stack([n, t1, t2])

    def _build_schedule(self, plant: SrbPlant, t_rem: float, next_target,
                        cfg: HlipConfig) -> ContactSchedule:
        st = plant.state
        mode = self.supervisor.mode
        hand_on = mode.recovery and mode.hand == HandPhase.IN_CONTACT \
            and self.hand_contact_point is not None
        _, fh_min, fh_max = self._contact_limits()
        swing = "left" if self.stance == "right" else "right"
        now_cs = ContactSet(
            hand_in_contact=hand_on,
            left_in_contact=self.stance == "left",
            right_in_contact=self.stance == "right",
            p_hand=self.hand_contact_point if hand_on else np.zeros(3),
            p_left=st.p_left.copy(),
            p_right=st.p_right.copy(),
        )
        after_cs = ContactSet(
            hand_in_contact=hand_on,
            left_in_contact=swing == "left",
            right_in_contact=swing == "right",
            p_hand=self.hand_contact_point if hand_on else np.zeros(3),
            p_left=st.p_left.copy(),
            p_right=st.p_right.copy(),
        )
        landing = np.array([next_target[0], next_target[1], 0.0])
        if swing == "left":
            after_cs.p_left = landing
        else:
            after_cs.p_right = landing

        N = self.mpc_config.horizon
        k_td = int(np.ceil(max(t_rem, 0.0) / self.mpc_config.dt))
        now_step = StepContact(now_cs, self.params.f_foot_max, fh_min, fh_max)
        after_step = StepContact(after_cs, self.params.f_foot_max, fh_min, fh_max)
        steps = [now_step if k < k_td else after_step for k in range(N)]
        kw = {}
        if hand_on:
            kw["hand_frame"] = self._hand_frame()
        return ContactSchedule(steps, **kw)

    def _contact_limits(self):
        from .supervisor import contact_limits
        return contact_limits(self.supervisor.mode, self.params)

    # -- main tick -----------------------------------------------------------

    def reset(self, plant: SrbPlant):
        self.stance = "right"
        self.phase = 0.0
        self.swing_start = plant.state.p_left[:2].copy()
        self.prev_predicted = None
        self.prev_reference = None
        self.hand_contact_point = None
        self.last_u0 = np.zeros(NU)

    def tick(self, plant: SrbPlant, command, t: float, dt: float):
        """One control step. Returns (wrench, contacts, info)."""
        st = plant.state
        x0 = st.srb_vector(self.params)
        was_recovery = self.supervisor.mode.recovery

        # supervisor runs off the previous tick's prediction (mpc variant)
        if self.variant == "mpc" and self.prev_predicted is not None:
            contact = check_hand_contact(st.p_hand, self.walls)
            in_contact = contact is not None
            self.supervisor.update(
                t, self.prev_predicted, self.prev_reference, st.p_c,
                st.euler[2], self.params.arm_reach, in_contact, dt)
            if self.supervisor.mode.recovery \
                    and self.supervisor.mode.hand == HandPhase.IN_CONTACT:
                if self.hand_contact_point is None and contact is not None:
                    self.hand_contact_point = contact[2].copy()
            else:
                self.hand_contact_point = None
            self.frequency = self.supervisor.stepping_frequency
        cfg, A, B, K, M_p1, x_sway = self._plane_matrices(self.frequency)

        # gait clock and touchdown
        touchdown = None
        if self.phase >= cfg.t_ssp - 1e-12:
            swing = "left" if self.stance == "right" else "right"
            target = self._step_targets(plant, command, 0.0, cfg, A, B, K, M_p1, x_sway)
            landing = np.array([target[0], target[1], 0.0])
            plant.place_foot(swing, landing)
            touchdown = (swing, landing)
            self.stance = swing
            new_swing = "left" if self.stance == "right" else "right"
            self.swing_start = (st.p_left if new_swing == "left"
                                else st.p_right)[:2].copy()
            self.phase = 0.0
        t_rem = cfg.t_ssp - self.phase

        # swing trajectory toward the continuously replanned target
        swing = "left" if self.stance == "right" else "right"
        target_xy = self._step_targets(plant, command, t_rem, cfg, A, B, K, M_p1, x_sway)
        swing_now = (st.p_left if swing == "left" else st.p_right)
        stance_p = st.p_left if self.stance == "left" else st.p_right
        sw_target = SwingTarget(
            u_x=target_xy[0] - stance_p[0],
            u_y=target_xy[1] - stance_p[1],
            touchdown_time=t + t_rem,
            start_xy=swing_now[:2],
        )
        swing_des = hlip.swing_trajectory(cfg.t_ssp - t_rem, sw_target, cfg,
                                          stance_xy=stance_p[:2])

        # wrench
        if self.variant == "mpc":
            schedule = self._build_schedule(plant, t_rem, target_xy, cfg)
            out = self.mpc.solve(x0, command, schedule)
            u = out.u0
            self.prev_predicted = out.predicted
            self.prev_reference = out.reference
            contacts = schedule.steps[0].contacts
            info = {"mode": self.supervisor.mode.label(), "ok": out.ok,
                    "iterations": out.iterations, "objective": out.objective}
        else:
            u = self._baseline_wrench(plant)
            contacts = ContactSet(
                hand_in_contact=False,
                left_in_contact=self.stance == "left",
                right_in_contact=self.stance == "right",
                p_left=st.p_left.copy(), p_right=st.p_right.copy(),
            )
            info = {"mode": "normal", "ok": True, "iterations": 0,
                    "objective": 0.0}
        self.last_u0 = u

        # limb targets
        mode = self.supervisor.mode
        if self.variant == "mpc" and mode.recovery:
            wall = self.supervisor.active_wall
            hand_des = hand_target(wall, st.p_c, st.euler[2], mode.side,
                                   self.params.arm_reach, self.sup_config)
        else:
            hand_des = st.p_c + self.hand_home_offset
        limb_targets = {swing: swing_des, "hand": hand_des}

        self.phase += dt
        if self.telemetry.fp:
            while self._logged_transitions < len(self.supervisor.transitions):
                tt, prev, new = self.supervisor.transitions[self._logged_transitions]
                self.telemetry.record({"t": round(tt, 9), "event": "mode",
                                       "from": prev, "to": new})
                self._logged_transitions += 1
            self.telemetry.record({
                "t": round(t, 9), "x": [round(v, 9) for v in x0],
                "u0": [round(v, 9) for v in u], "mode": info["mode"],
                "iterations": info["iterations"],
            })
        info.update({"touchdown": touchdown, "target_xy": target_xy,
                     "frequency": self.frequency,
                     "recovery_entered": self.supervisor.mode.recovery and not was_recovery})
        return u, contacts, limb_targets, info
