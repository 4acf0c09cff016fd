"""Mode supervisor: push detection, recovery activation, contact limits.

Watches the controller's predicted CoM trajectory against the reference;
when the prediction diverges beyond thresholds the robot is being pushed.
If a wall is within arm reach, recovery mode engages: the hand reaches for
a bracing point on the wall, contact force limits open up once contact is
confirmed, and stepping speeds up. Without a reachable wall only the
faster stepping engages. Exit is hysteretic to avoid mode chatter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class HandPhase(Enum):
    REACHING = "reaching"
    IN_CONTACT = "in_contact"


@dataclass(frozen=True)
class Mode:
    """Controller mode: normal walking, or recovery toward one wall."""

    recovery: bool = False
    side: str | None = None          # "left" / "right" wall being used
    hand: HandPhase | None = None

    @classmethod
    def normal(cls) -> "Mode":
        return cls(False, None, None)

    @classmethod
    def reaching(cls, side: str) -> "Mode":
        return cls(True, side, HandPhase.REACHING)

    @classmethod
    def in_contact(cls, side: str) -> "Mode":
        return cls(True, side, HandPhase.IN_CONTACT)

    def label(self) -> str:
        if not self.recovery:
            return "normal"
        return f"recovery_{self.side}_{self.hand.value}"


@dataclass
class Wall:
    """Plane through `point` with unit `normal` pointing toward the robot
    workspace. Tilted walls lean over the robot (normal acquires a
    downward component)."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)
        nrm = np.linalg.norm(self.normal)
        if abs(nrm - 1.0) > 1e-9:
            self.normal = self.normal / nrm

    def distance(self, point) -> float:
        """Signed distance, positive on the robot's side."""
        return float(self.normal @ (np.asarray(point, float) - self.point))


@dataclass
class WallSet:
    walls: list

    @classmethod
    def corridor(cls, offset: float = 0.8, tilt_deg: float = 0.0) -> "WallSet":
        """Two walls flanking the walkway at y = +-offset. A positive tilt
        slants them inward over the robot."""
        t = np.radians(tilt_deg)
        left = Wall(np.array([0.0, offset, 0.0]),
                    np.array([0.0, -np.cos(t), -np.sin(t)]))
        right = Wall(np.array([0.0, -offset, 0.0]),
                     np.array([0.0, np.cos(t), -np.sin(t)]))
        return cls([("left", left), ("right", right)])

    def items(self):
        return list(self.walls)


@dataclass
class SupervisorConfig:
    v_threshold: float = 0.4          # m/s, predicted CoM velocity divergence
    w_threshold: float = 0.2          # rad/s, predicted angular velocity divergence
    normal_frequency: float = 3.0     # Hz
    recovery_frequency: float = 5.0   # Hz
    exit_hysteresis: float = 0.75     # exit thresholds = hysteresis * entry
    exit_dwell: float = 0.5           # s below exit thresholds before leaving
    arm_time: float = 0.7             # s before detection arms (startup gait
                                      # transient would trip it)
    step_margin: float = 0.1          # m, foothold clearance from walls
    hand_height: float = 0.15         # m above CoM for the bracing point
    retract_duration: float = 0.3     # s, hand pull-back after recovery
    shoulder_offsets: np.ndarray = field(default_factory=lambda: np.array(
        [[0.0, 0.15, 0.25], [0.0, -0.15, 0.25]]))

    def __post_init__(self):
        self.shoulder_offsets = np.asarray(self.shoulder_offsets, dtype=float)
        if self.v_threshold <= 0 or self.w_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.recovery_frequency <= self.normal_frequency:
            raise ValueError("recovery stepping must be faster than normal")


def detect_push(predicted: np.ndarray, reference: np.ndarray,
                config: SupervisorConfig):
    """Compare predicted vs reference trajectories, rows of 13-dim states.
    Detected when the worst-case CoM velocity or angular velocity
    divergence anywhere on the horizon crosses its threshold."""
    predicted = np.atleast_2d(predicted)
    reference = np.atleast_2d(reference)
    if predicted.shape != reference.shape:
        raise ValueError("trajectories must have matching shapes")
    dv = np.linalg.norm(predicted[:, 9:12] - reference[:, 9:12], axis=1)
    dw = np.linalg.norm(predicted[:, 6:9] - reference[:, 6:9], axis=1)
    v_dev = float(dv.max(initial=0.0))
    w_dev = float(dw.max(initial=0.0))
    detected = v_dev > config.v_threshold or w_dev > config.w_threshold
    return detected, v_dev, w_dev


def shoulder_points(p_c, yaw: float, config: SupervisorConfig) -> np.ndarray:
    """World positions of the two shoulder points at the current yaw."""
    c, s = np.cos(yaw), np.sin(yaw)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return np.asarray(p_c, float) + config.shoulder_offsets @ Rz.T


def wall_reachable(p_c, yaw: float, walls: WallSet, arm_reach: float,
                   config: SupervisorConfig, push_dir=None):
    """A wall whose plane lies within arm reach of the shoulder on that
    side. A wall the robot is being pushed toward wins over a merely
    nearer one (it is the one worth bracing against). Returns (side, wall)
    or None."""
    shoulders = shoulder_points(p_c, yaw, config)
    best = None
    for side, wall in walls.items():
        sh = shoulders[0] if side == "left" else shoulders[1]
        dist = abs(wall.distance(sh))
        if dist > arm_reach:
            continue
        toward = 0.0
        if push_dir is not None:
            nrm = np.linalg.norm(push_dir)
            if nrm > 1e-9:
                # moving into the wall means the motion opposes its
                # robot-side normal
                toward = float(-wall.normal @ (np.asarray(push_dir, float) / nrm))
        score = (-1.0 if toward > 0.2 else 0.0, dist)
        if best is None or score < best[0]:
            best = (score, side, wall)
    if best is None:
        return None
    return best[1], best[2]


def hand_target(wall: Wall, p_c, yaw: float, side: str, arm_reach: float,
                config: SupervisorConfig) -> np.ndarray:
    """Bracing point: the shoulder projected along the wall's inward normal
    onto the plane, then pulled back to the reach sphere if needed."""
    shoulders = shoulder_points(p_c, yaw, config)
    sh = shoulders[0] if side == "left" else shoulders[1]
    sh = sh + np.array([0.0, 0.0, config.hand_height - config.shoulder_offsets[0, 2]])
    d = wall.distance(sh)
    target = sh - d * wall.normal
    offset = target - sh
    reach = np.linalg.norm(offset)
    if reach > arm_reach:
        target = sh + offset * (arm_reach / reach)
    return target


def contact_limits(mode: Mode, params) -> tuple:
    """(f_foot_max, f_hand_min, f_hand_max): hand bounds open only once
    contact is confirmed."""
    if mode.recovery and mode.hand == HandPhase.IN_CONTACT:
        return params.f_foot_max, params.f_hand_min, params.f_hand_max
    return params.f_foot_max, 0.0, 0.0


def limit_step_location(candidate_xy, walls: WallSet, margin: float) -> np.ndarray:
    """Project a planned foothold back so its clearance from every wall,
    measured along the wall normal at foot height, is at least `margin`."""
    p = np.array([candidate_xy[0], candidate_xy[1], 0.0])
    for _side, wall in walls.items():
        d = wall.distance(p)
        if d < margin:
            n_xy = wall.normal[:2]
            nrm = np.linalg.norm(n_xy)
            if nrm < 1e-9:
                continue
            p[:2] += (margin - d) / nrm * (n_xy / nrm)
    return p[:2]


def update_mode(mode: Mode, detected: bool, reachable, hand_in_contact: bool,
                below_exit_time: float, config: SupervisorConfig) -> Mode:
    """One transition of the mode machine. `reachable` is the result of
    wall_reachable; `below_exit_time` is how long the deviations have
    stayed under the hysteresis thresholds."""
    if not mode.recovery:
        if detected and reachable is not None:
            return Mode.reaching(reachable[0])
        return mode
    if below_exit_time >= config.exit_dwell:
        return Mode.normal()
    if mode.hand == HandPhase.REACHING and hand_in_contact:
        return Mode.in_contact(mode.side)
    return mode


class Supervisor:
    """Stateful wrapper: owns the hysteresis clock, fast-stepping latch and
    the active wall. One instance per robot."""

    def __init__(self, config: SupervisorConfig, walls: WallSet):
        self.config = config
        self.walls = walls
        self.mode = Mode.normal()
        self.active_wall: Wall | None = None
        self._below_exit = 0.0
        self._fast = False
        self.retract_timer = 0.0
        self.transitions: list = []

    @property
    def stepping_frequency(self) -> float:
        return self.config.recovery_frequency if (self.mode.recovery or self._fast) \
            else self.config.normal_frequency

    def update(self, t: float, predicted, reference, p_c, yaw: float,
               arm_reach: float, hand_in_contact: bool, dt: float,
               push_dir=None) -> Mode:
        cfg = self.config
        detected, v_dev, w_dev = detect_push(predicted, reference, cfg)
        if t < cfg.arm_time:
            detected = False
        calm = (v_dev < cfg.exit_hysteresis * cfg.v_threshold
                and w_dev < cfg.exit_hysteresis * cfg.w_threshold)
        self._below_exit = self._below_exit + dt if calm else 0.0

        if push_dir is None:
            # direction the robot is being shoved: worst predicted velocity
            # deviation along the horizon
            predicted = np.atleast_2d(predicted)
            reference = np.atleast_2d(reference)
            dv = predicted[:, 9:12] - reference[:, 9:12]
            push_dir = dv[int(np.argmax(np.linalg.norm(dv, axis=1)))]
        reachable = wall_reachable(p_c, yaw, self.walls, arm_reach, cfg, push_dir)
        prev = self.mode
        self.mode = update_mode(prev, detected, reachable, hand_in_contact,
                                self._below_exit, cfg)
        # faster stepping helps even when no wall is in reach
        if detected:
            self._fast = True
        elif self._below_exit >= cfg.exit_dwell:
            self._fast = False

        if self.mode.recovery and not prev.recovery:
            self.active_wall = dict(self.walls.items())[self.mode.side]
            self.retract_timer = 0.0
        if prev.recovery and not self.mode.recovery:
            self.retract_timer = cfg.retract_duration
            self.active_wall = None
        if self.retract_timer > 0.0:
            self.retract_timer = max(0.0, self.retract_timer - dt)

        if self.mode != prev:
            self.transitions.append((t, prev.label(), self.mode.label()))
        return self.mode
