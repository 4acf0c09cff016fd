"""Single-rigid-body reduced-order model.

The robot is one rigid mass driven by contact wrenches at up to three
sites: one hand, left foot, right foot. The 13-dimensional state is

    x = [theta_x, theta_y, theta_z,   body orientation (rad)
         p_cx, p_cy, p_cz,            CoM position, world (m)
         w_x, w_y, w_z,               angular velocity, world (rad/s)
         v_x, v_y, v_z,               CoM velocity, world (m/s)
         -g]                          gravity slot (m/s^2, constant)

and the 18-dimensional input stacks the site wrenches

    u = [F_h, F_l, F_r, M_h, M_l, M_r]   (world frame, N / N m)

Continuous dynamics are linear in (x, u) at fixed yaw and fixed contact
lever arms:  xdot = A_ce(theta_z) x + B_ce(d_ch, d_cl, d_cr) u.

Sign conventions: gravity param g points "down" as a positive-z vector
(0, 0, 9.81), entering accelerations as -g. skew(d) @ F = d x F with
right-handed frames, used everywhere a moment of a force appears.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

NX = 13
NU = 18

# wrench vector layout
F_H = slice(0, 3)
F_L = slice(3, 6)
F_R = slice(6, 9)
M_H = slice(9, 12)
M_L = slice(12, 15)
M_R = slice(15, 18)

SITE_NAMES = ("hand", "left", "right")


def skew(v: np.ndarray) -> np.ndarray:
    """Matrix form of the cross product: skew(v) @ w = v x w."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_z(theta_z: float) -> np.ndarray:
    c, s = np.cos(theta_z), np.sin(theta_z)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_z_inverse(theta_z: float) -> np.ndarray:
    """Inverse yaw rotation mapping world angular velocity to Euler rates
    under the small roll/pitch assumption."""
    c, s = np.cos(theta_z), np.sin(theta_z)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class RobotParams:
    """Physical parameters of the reduced-order robot."""

    mass: float = 20.0
    inertia: np.ndarray = field(default_factory=lambda: np.diag([1.5, 1.6, 0.5]))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 9.81]))
    mu: float = 0.5
    z0: float = 0.7
    arm_reach: float = 0.6
    f_foot_max: float = 500.0
    f_hand_min: float = 0.0
    f_hand_max: float = 150.0

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.inertia.shape != (3, 3) or np.max(np.abs(self.inertia - self.inertia.T)) > 1e-12:
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError("inertia must be positive definite")
        if self.mu <= 0 or self.z0 <= 0:
            raise ValueError("mu and z0 must be positive")
        if self.f_hand_min > self.f_hand_max:
            raise ValueError("f_hand_min must not exceed f_hand_max")
        self.inertia_inv = np.linalg.inv(self.inertia)

    @property
    def g_mag(self) -> float:
        return float(np.linalg.norm(self.gravity))

    @classmethod
    def from_json(cls, path) -> "RobotParams":
        """Load from a JSON file; field names mirror the symbol names."""
        with open(path) as fp:
            raw = json.load(fp)
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RobotParams":
        kw = {}
        for key in ("mass", "mu", "z0", "arm_reach",
                    "f_foot_max", "f_hand_min", "f_hand_max"):
            if key in raw:
                kw[key] = float(raw[key])
        if "inertia" in raw:
            inertia = np.asarray(raw["inertia"], dtype=float)
            if inertia.ndim == 1:
                inertia = np.diag(inertia)
            kw["inertia"] = inertia
        if "gravity" in raw:
            kw["gravity"] = np.asarray(raw["gravity"], dtype=float)
        return cls(**kw)


@dataclass
class SrbState:
    """13-dim gravity-extended state. The gravity slot holds -|g| and the
    A-matrix routes it into the CoM acceleration along the gravity
    direction, so free fall is part of the linear dynamics."""

    theta: np.ndarray
    p_c: np.ndarray
    omega: np.ndarray
    v_c: np.ndarray
    g_slot: float

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "SrbState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:9].copy(), x[9:12].copy(), float(x[12]))

    @classmethod
    def nominal(cls, params: RobotParams) -> "SrbState":
        return cls(np.zeros(3), np.array([0.0, 0.0, params.z0]), np.zeros(3),
                   np.zeros(3), -params.g_mag)

    def as_vector(self) -> np.ndarray:
        out = np.empty(NX)
        out[0:3] = self.theta
        out[3:6] = self.p_c
        out[6:9] = self.omega
        out[9:12] = self.v_c
        out[12] = self.g_slot
        return out

    def validate(self, params: RobotParams, tol: float = 1e-9):
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("state contains non-finite entries")
        if abs(self.g_slot + params.g_mag) > tol:
            raise ValueError("gravity slot must equal -|g|")


@dataclass
class InputWrench:
    """Stacked contact wrench, world frame. Entries of inactive contacts
    are exactly zero."""

    u: np.ndarray = field(default_factory=lambda: np.zeros(NU))

    @classmethod
    def from_site_wrenches(cls, F_hand=None, F_left=None, F_right=None,
                           M_hand=None, M_left=None, M_right=None) -> "InputWrench":
        u = np.zeros(NU)
        for sl, val in ((F_H, F_hand), (F_L, F_left), (F_R, F_right),
                        (M_H, M_hand), (M_L, M_left), (M_R, M_right)):
            if val is not None:
                u[sl] = val
        return cls(u)

    def force(self, site: str) -> np.ndarray:
        return self.u[{"hand": F_H, "left": F_L, "right": F_R}[site]]

    def moment(self, site: str) -> np.ndarray:
        return self.u[{"hand": M_H, "left": M_L, "right": M_R}[site]]


@dataclass
class ContactSet:
    """Which sites carry force, and where they are in the world. Lever arms
    d_i = p_c - p_i are recomputed from the CoM passed to the matrix
    builders, never stored stale."""

    hand_in_contact: bool = False
    left_in_contact: bool = True
    right_in_contact: bool = True
    p_hand: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_left: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_right: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def active(self, site: str) -> bool:
        return {"hand": self.hand_in_contact, "left": self.left_in_contact,
                "right": self.right_in_contact}[site]

    def position(self, site: str) -> np.ndarray:
        return {"hand": self.p_hand, "left": self.p_left,
                "right": self.p_right}[site]

    @classmethod
    def double_support(cls, p_left, p_right) -> "ContactSet":
        return cls(False, True, True, np.zeros(3), np.asarray(p_left, float),
                   np.asarray(p_right, float))

    @classmethod
    def single_support(cls, stance: str, p_stance) -> "ContactSet":
        cs = cls(False, stance == "left", stance == "right")
        if stance == "left":
            cs.p_left = np.asarray(p_stance, float)
        else:
            cs.p_right = np.asarray(p_stance, float)
        return cs


def selection_matrices(contacts: ContactSet):
    """Input selection for (hand force, hand moment, foot force, foot
    moment). The hand transmits planar force and roll moment only when in
    contact; stance feet always transmit full force and pitch/yaw moment."""
    if contacts.hand_in_contact:
        T_h = np.diag([1.0, 1.0, 0.0])
        L_h = np.diag([1.0, 0.0, 0.0])
    else:
        T_h = np.zeros((3, 3))
        L_h = np.zeros((3, 3))
    T_f = np.eye(3)
    L_f = np.diag([0.0, 1.0, 1.0])
    return T_h, L_h, T_f, L_f


def build_continuous_dynamics(state: SrbState, contacts: ContactSet,
                              params: RobotParams):
    """Continuous-time (A_ce, B_ce) at the current yaw and lever arms.

    The gyroscopic term w x (I w) is deliberately absent from the model;
    the plant keeps it, and the controller treats the difference as an
    unmodeled disturbance.
    """
    A = np.zeros((NX, NX))
    A[0:3, 6:9] = rotation_z_inverse(state.theta[2])
    A[3:6, 9:12] = np.eye(3)
    g = params.gravity
    gmag = params.g_mag
    if gmag > 0:
        A[9:12, 12] = g / gmag
    B = np.zeros((NX, NU))
    T_h, L_h, T_f, L_f = selection_matrices(contacts)
    Iinv = params.inertia_inv
    minv = 1.0 / params.mass
    site_sel = (("hand", F_H, M_H, T_h, L_h),
                ("left", F_L, M_L, T_f, L_f),
                ("right", F_R, M_R, T_f, L_f))
    for name, fsl, msl, T, L in site_sel:
        if not contacts.active(name):
            continue
        # torque of a site force about the CoM: (p_i - p_c) x F, i.e. the
        # negated lever arm d_i = p_c - p_i
        r = contacts.position(name) - state.p_c
        B[6:9, fsl] = Iinv @ skew(r) @ T
        B[9:12, fsl] = minv * T
        B[6:9, msl] = Iinv @ L
    return A, B
