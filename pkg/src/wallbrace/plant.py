"""Ground-truth rigid-body plant.

Unlike the control model this simulator keeps the full nonlinear rotation
dynamics: quaternion attitude kinematics and the gyroscopic torque
w x (I w). Contact wrenches commanded by the controller act at the stance
feet and at the hand bracing point; pushes are forces applied at a point
above the CoM for a finite duration. Limbs are kinematic: swing foot and
hand track their planner targets through a first-order lag and exert no
reaction on the torso except through the declared contact wrenches.

Integration is fixed-step RK4 (default 1 ms); the quaternion is
renormalized every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .srb import RobotParams, ContactSet, InputWrench
from .supervisor import Wall, WallSet


class FailureCode(Enum):
    NONE = "none"
    TORSO_GROUND_CONTACT = "torso_ground_contact"
    TORSO_WALL_CONTACT = "torso_wall_contact"
    ROLL_PITCH_EXCEEDED = "roll_pitch_exceeded"
    COM_HEIGHT_DROP = "com_height_drop"
    SHOULDER_WALL_CONTACT = "shoulder_wall_contact"


@dataclass
class PushEvent:
    """Horizontal shove: force applied at a point `height` above the CoM
    from `start` for `duration` seconds."""

    force: np.ndarray
    height: float
    start: float
    duration: float = 0.2

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        if self.duration <= 0:
            raise ValueError("push duration must be positive")

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration


@dataclass
class TorsoGeometry:
    """Collision geometry for the failure classifier: a box around the CoM
    and two shoulder points."""

    half_extents: np.ndarray = field(default_factory=lambda: np.array([0.15, 0.10, 0.20]))
    shoulder_offsets: np.ndarray = field(default_factory=lambda: np.array(
        [[0.0, 0.15, 0.25], [0.0, -0.15, 0.25]]))

    def __post_init__(self):
        self.half_extents = np.asarray(self.half_extents, dtype=float)
        self.shoulder_offsets = np.asarray(self.shoulder_offsets, dtype=float)

    def corners_body(self) -> np.ndarray:
        h = self.half_extents
        sx = np.array([-1.0, 1.0])
        return np.array([[x * h[0], y * h[1], z * h[2]]
                         for x in sx for y in sx for z in sx])


def _cross(a, b):
    """3-vector cross product without the generic-ufunc overhead."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


# -- quaternion helpers (w, x, y, z) -----------------------------------------

def quat_multiply(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_derivative(q, omega_world):
    """qdot = 1/2 [0, w] * q for a world-frame angular velocity."""
    ow = omega_world
    return 0.5 * quat_multiply(np.array([0.0, ow[0], ow[1], ow[2]]), q)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_euler(q) -> np.ndarray:
    """(roll, pitch, yaw) of R = Rz(yaw) Ry(pitch) Rx(roll)."""
    w, x, y, z = q
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def euler_to_quat(rpy) -> np.ndarray:
    r, p, y = np.asarray(rpy, float) * 0.5
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array([
        cy * cp * cr + sy * sp * sr,
        cy * cp * sr - sy * sp * cr,
        cy * sp * cr + sy * cp * sr,
        sy * cp * cr - cy * sp * sr,
    ])


@dataclass
class PlantState:
    """Torso rigid-body state plus kinematic limb positions."""

    p_c: np.ndarray
    v_c: np.ndarray
    quat: np.ndarray
    omega: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    p_hand: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("p_c", "v_c", "quat", "omega", "p_left", "p_right", "p_hand"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).copy())

    @classmethod
    def standing(cls, params: RobotParams, foot_half_spacing: float = 0.07) -> "PlantState":
        return cls(
            p_c=np.array([0.0, 0.0, params.z0]),
            v_c=np.zeros(3),
            quat=np.array([1.0, 0.0, 0.0, 0.0]),
            omega=np.zeros(3),
            p_left=np.array([0.0, foot_half_spacing, 0.0]),
            p_right=np.array([0.0, -foot_half_spacing, 0.0]),
            p_hand=np.array([0.0, 0.0, params.z0 + 0.15]),
        )

    @property
    def euler(self) -> np.ndarray:
        return quat_to_euler(self.quat)

    def srb_vector(self, params: RobotParams) -> np.ndarray:
        """13-dim state vector the controller consumes."""
        out = np.empty(13)
        out[0:3] = self.euler
        out[3:6] = self.p_c
        out[6:9] = self.omega
        out[9:12] = self.v_c
        out[12] = -params.g_mag
        return out


def wall_distance(point, wall: Wall) -> float:
    """Signed point-plane distance, positive on the robot's side."""
    return wall.distance(point)


def check_hand_contact(hand_position, walls: WallSet, tolerance: float = 0.005):
    """Contact event when the hand is within `tolerance` of a wall plane.
    Returns (side, wall, contact point) or None."""
    for side, wall in walls.items():
        d = wall.distance(hand_position)
        if abs(d) <= tolerance:
            point = np.asarray(hand_position, float) - d * wall.normal
            return side, wall, point
    return None


class SrbPlant:
    """Owns a PlantState and advances it. One instance per scenario."""

    def __init__(self, params: RobotParams, state: PlantState | None = None,
                 dt: float = 1e-3, limb_lag: float = 0.05):
        self.params = params
        self.state = state if state is not None else PlantState.standing(params)
        self.dt = dt
        self.limb_lag = limb_lag
        self._g_vec = params.gravity
        self._I = params.inertia
        self._Iinv = params.inertia_inv

    # -- rigid-body integration ---------------------------------------------

    def _net_wrench(self, p_c, u: np.ndarray, contacts: ContactSet,
                    push_force, push_height):
        """Net force and moment about the CoM at position p_c."""
        F_tot, M0 = self._wrench_terms(u, contacts, push_force, push_height)
        return F_tot, M0 - _cross(p_c, F_tot - (push_force if push_force is not None else 0.0))

    @staticmethod
    def _wrench_terms(u, contacts, push_force, push_height):
        """(total force, moment terms independent of the CoM position).
        Contact moments are affine in the CoM: M(p) = M0 - p x F_contact."""
        F = np.zeros(3)
        M0 = np.zeros(3)
        for name, f0, m0 in (("hand", 0, 9), ("left", 3, 12), ("right", 6, 15)):
            if not contacts.active(name):
                continue
            f = u[f0:f0 + 3]
            F += f
            M0 += _cross(contacts.position(name), f) + u[m0:m0 + 3]
        if push_force is not None:
            F = F + push_force
            # push acts at a fixed offset above the moving CoM
            M0 = M0 + _cross(np.array([0.0, 0.0, push_height]), push_force)
        return F, M0

    def step(self, wrench: InputWrench | np.ndarray, contacts: ContactSet,
             push: PushEvent | None = None, n_substeps: int = 1):
        """Advance n_substeps * dt under a held wrench (and active push)."""
        u = wrench.u if isinstance(wrench, InputWrench) else np.asarray(wrench, float)
        if not np.all(np.isfinite(u)):
            raise ValueError("wrench contains non-finite entries")
        st = self.state
        m = self.params.mass
        g = self._g_vec
        I = self._I
        Iinv = self._Iinv
        dt = self.dt
        for _ in range(n_substeps):
            push_f = None
            push_h = 0.0
            if push is not None and push.active(st.t):
                push_f = push.force
                push_h = push.height
            F_tot, M0 = self._wrench_terms(u, contacts, push_f, push_h)
            F_contact = F_tot - push_f if push_f is not None else F_tot
            acc0 = F_tot / m - g

            def deriv(p, v, q, w):
                M = M0 - _cross(p, F_contact)
                wdot = Iinv @ (M - _cross(w, I @ w))
                return v, acc0, quat_derivative(q, w), wdot

            p, v, q, w = st.p_c, st.v_c, st.quat, st.omega
            k1 = deriv(p, v, q, w)
            k2 = deriv(p + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1],
                       q + 0.5 * dt * k1[2], w + 0.5 * dt * k1[3])
            k3 = deriv(p + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1],
                       q + 0.5 * dt * k2[2], w + 0.5 * dt * k2[3])
            k4 = deriv(p + dt * k3[0], v + dt * k3[1],
                       q + dt * k3[2], w + dt * k3[3])
            st.p_c = p + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            st.v_c = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            st.quat = q + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            st.omega = w + dt / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            st.quat /= np.sqrt(st.quat @ st.quat)
            st.t += dt
        return st

    # -- kinematic limbs ------------------------------------------------------

    def move_limb(self, name: str, target, dt: float):
        """First-order lag toward the planner target."""
        cur = {"left": self.state.p_left, "right": self.state.p_right,
               "hand": self.state.p_hand}[name]
        alpha = min(1.0, dt / self.limb_lag)
        cur += (np.asarray(target, float) - cur) * alpha

    def place_foot(self, name: str, position):
        if name == "left":
            self.state.p_left = np.asarray(position, float).copy()
        else:
            self.state.p_right = np.asarray(position, float).copy()


def step_plant(state: PlantState, wrench, contacts: ContactSet,
               push: PushEvent | None, params: RobotParams,
               dt: float = 1e-3, n_substeps: int = 1) -> PlantState:
    """Functional wrapper around SrbPlant.step for one-off use."""
    plant = SrbPlant(params, state, dt=dt)
    return plant.step(wrench, contacts, push, n_substeps)


# -- failure classification ---------------------------------------------------

def classify_failure(times, p_cs, quats, walls: WallSet, params: RobotParams,
                     geometry: TorsoGeometry | None = None,
                     roll_pitch_limit: float = 0.3, height_drop: float = 0.1,
                     shoulder_dwell: float = 0.5, contact_tol: float = 0.0):
    """First failure triggered along a trajectory, or NONE.

    Checked per sample, in order: torso box touching ground, torso box
    touching a wall, |roll| or |pitch| beyond the limit, CoM dropping below
    z0 - height_drop, and shoulders staying on a wall longer than
    `shoulder_dwell` seconds.

    Returns (code, time of first trigger or None).
    """
    geometry = geometry or TorsoGeometry()
    times = np.asarray(times, float)
    p_cs = np.atleast_2d(np.asarray(p_cs, float))
    quats = np.atleast_2d(np.asarray(quats, float))
    if times.size == 0:
        raise ValueError("empty state history")
    corners_b = geometry.corners_body()
    shoulder_b = geometry.shoulder_offsets
    z_floor = params.z0 - height_drop
    shoulder_since = None
    for i, t in enumerate(times):
        R = quat_to_matrix(quats[i])
        corners = p_cs[i] + corners_b @ R.T
        if np.min(corners[:, 2]) <= 0.0:
            return FailureCode.TORSO_GROUND_CONTACT, float(t)
        hit_wall = False
        for _side, wall in walls.items():
            if np.min(wall.normal @ (corners - wall.point).T) <= contact_tol:
                hit_wall = True
                break
        if hit_wall:
            return FailureCode.TORSO_WALL_CONTACT, float(t)
        rpy = quat_to_euler(quats[i])
        if abs(rpy[0]) > roll_pitch_limit or abs(rpy[1]) > roll_pitch_limit:
            return FailureCode.ROLL_PITCH_EXCEEDED, float(t)
        if p_cs[i][2] < z_floor:
            return FailureCode.COM_HEIGHT_DROP, float(t)
        shoulders = p_cs[i] + shoulder_b @ R.T
        on_wall = any(
            min(wall.distance(sh) for sh in shoulders) <= 0.005
            for _side, wall in walls.items()
        )
        if on_wall:
            if shoulder_since is None:
                shoulder_since = t
            elif t - shoulder_since > shoulder_dwell:
                return FailureCode.SHOULDER_WALL_CONTACT, float(t)
        else:
            shoulder_since = None
    return FailureCode.NONE, None
