"""Receding-horizon wrench optimizer for the rigid-body model.

Every control tick the discrete dynamics are rebuilt at the current state,
the horizon is condensed to a dense QP over the stacked input wrenches,
contact constraints (friction cones, force limits, zero-force pins for
inactive contacts) are attached, and the QP is solved warm-started from
the previous tick. Only the first wrench of the optimal sequence is
applied.

Constraint layout per horizon step (row order fixed, so the constraint
matrix is constant within a contact/wall configuration and only the bounds
change tick to tick):

    rows  0-4   left foot cone  (Fx-muFz, Fx+muFz, Fy-muFz, Fy+muFz, Fz)
    rows  5-9   right foot cone (same)
    rows 10-14  hand cone in the wall frame (t1-mu n, t1+mu n, t2-mu n,
                t2+mu n, n)
    rows 15-23  force pins, one per force entry
    rows 24-32  moment pins, one per moment entry

Inactive sites have their cone rows disabled (infinite bounds) and their
pins closed to [0, 0]; active sites the reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discretize import DiscreteDynamics, zoh_transition_nilpotent3
from .hlip import HlipConfig
from .qp import INF_BOUND, DenseQpSolver, QpProblem, QpStatus
from .srb import (NU, NX, ContactSet, RobotParams, SrbState,
                  build_continuous_dynamics, rotation_z)

ROWS_PER_STEP = 33
_F_CONE = ((0, 2), (1, 2))          # (numerator axis, normal axis) pairs


@dataclass
class MpcConfig:
    horizon: int = 10
    dt: float = 0.025
    q_diag: np.ndarray = field(default_factory=lambda: np.concatenate([
        [800.0, 800.0, 100.0],      # orientation (roll/pitch weighted hardest)
        [0.0, 0.0, 800.0],          # position (height only; xy is stepping's job)
        [200.0, 200.0, 20.0],       # angular velocity
        [2.0, 2.0, 200.0],          # velocity: planar speed belongs to the
                                    # stepping layer; vertical is stiff so
                                    # the horizon tail keeps holding weight
        [0.0],                      # gravity slot
    ]))
    r_diag: np.ndarray = field(default_factory=lambda: np.concatenate([
        np.full(9, 1e-4),           # forces
        np.full(9, 1e-2),           # moments
    ]))
    control_rate: float = 250.0

    def __post_init__(self):
        self.q_diag = np.asarray(self.q_diag, dtype=float)
        self.r_diag = np.asarray(self.r_diag, dtype=float)
        if self.horizon < 1 or self.dt <= 0:
            raise ValueError("horizon must be >= 1 and dt positive")
        if self.q_diag.shape != (NX,) or np.any(self.q_diag < 0):
            raise ValueError("q_diag must be 13 non-negative weights")
        if self.r_diag.shape != (NU,) or np.any(self.r_diag <= 0):
            raise ValueError("r_diag must be 18 positive weights")
        if self.control_rate < 250.0:
            raise ValueError("control rate must be at least 250 Hz")


@dataclass
class StepContact:
    """One horizon step of the contact plan: which sites carry force, where
    they are, and the force bounds in effect."""

    contacts: ContactSet
    f_foot_max: float
    f_hand_min: float
    f_hand_max: float


@dataclass
class ContactSchedule:
    steps: list
    hand_frame: np.ndarray = field(default_factory=lambda: np.column_stack([
        np.array([0.0, 1.0, 0.0]),   # wall normal (toward robot)
        np.array([1.0, 0.0, 0.0]),   # tangent 1
        np.array([0.0, 0.0, 1.0]),   # tangent 2
    ]))

    def __post_init__(self):
        self.hand_frame = np.asarray(self.hand_frame, dtype=float)

    def __len__(self):
        return len(self.steps)

    @classmethod
    def constant(cls, contacts: ContactSet, params: RobotParams, horizon: int,
                 f_hand_min: float = 0.0, f_hand_max: float = 0.0,
                 hand_frame=None) -> "ContactSchedule":
        step = StepContact(contacts, params.f_foot_max, f_hand_min, f_hand_max)
        kw = {}
        if hand_frame is not None:
            kw["hand_frame"] = hand_frame
        return cls([step] * horizon, **kw)


@dataclass
class MpcOutput:
    u0: np.ndarray
    predicted: np.ndarray            # (N, 13) states along the horizon
    reference: np.ndarray            # (N, 13)
    ok: bool
    status: QpStatus
    iterations: int
    solve_time: float
    objective: float


def build_reference(x0: np.ndarray, command, config: MpcConfig,
                    params: RobotParams) -> np.ndarray:
    """Reference trajectory: hold height and level attitude, track the
    commanded planar velocity (rotated with the reference yaw) and yaw
    rate, restarted from the current state every tick."""
    v_x, v_y, yaw_rate = command
    if not np.all(np.isfinite([v_x, v_y, yaw_rate])):
        raise ValueError("command must be finite")
    N, dt = config.horizon, config.dt
    ref = np.zeros((N, NX))
    yaw = x0[2] + yaw_rate * dt * np.arange(1, N + 1)
    c, s = np.cos(yaw), np.sin(yaw)
    v_world = np.column_stack([c * v_x - s * v_y, s * v_x + c * v_y])
    ref[:, 2] = yaw
    ref[:, 3:5] = x0[3:5] + np.cumsum(v_world * dt, axis=0)
    ref[:, 5] = params.z0
    ref[:, 8] = yaw_rate
    ref[:, 9:11] = v_world
    ref[:, 12] = -params.g_mag
    return ref


class _CondenseWorkspace:
    """Preallocated buffers for the per-tick condensation."""

    def __init__(self, config: MpcConfig):
        N = config.horizon
        self.A_qp = np.empty((N * NX, NX))
        self.B_qp = np.zeros((N * NX, N * NU))
        self.q_bar = np.tile(config.q_diag, N)
        self.r_bar2 = 2.0 * np.tile(config.r_diag, N)
        self.diag_idx = np.arange(N * NU)


def condense(dyn: DiscreteDynamics | tuple, x0: np.ndarray, x_ref: np.ndarray,
             config: MpcConfig, workspace: _CondenseWorkspace | None = None):
    """Stacked prediction H, m plus (A_qp, B_qp).

    `dyn` is either one DiscreteDynamics reused along the horizon or a
    tuple (A_d, [B_d per step]) when the contact plan changes within the
    horizon.
    """
    N = config.horizon
    if isinstance(dyn, DiscreteDynamics):
        A_d = dyn.A_d
        B_steps = [dyn.B_d] * N
    else:
        A_d, B_steps = dyn
        if len(B_steps) != N:
            raise ValueError("need one input matrix per horizon step")
    x_ref = np.atleast_2d(x_ref)
    if x_ref.shape != (N, NX) or x0.shape != (NX,):
        raise ValueError("reference/state dimensions do not match the horizon")

    ws = workspace or _CondenseWorkspace(config)
    A_qp = ws.A_qp
    Ak = A_d
    for i in range(N):
        A_qp[i * NX:(i + 1) * NX] = Ak
        if i + 1 < N:
            Ak = A_d @ Ak
    # chains A^i B for each distinct input matrix (the schedule holds at
    # most a couple), then block placement by lag i - j
    chains = {}
    for B in B_steps:
        key = id(B)
        if key not in chains:
            chain = np.empty((N, NX, NU))
            chain[0] = B
            for i in range(1, N):
                chain[i] = A_d @ chain[i - 1]
            chains[key] = chain.reshape(N * NX, NU)
    B_qp = ws.B_qp
    for j in range(N):
        B_qp[j * NX:, j * NU:(j + 1) * NU] = chains[id(B_steps[j])][:(N - j) * NX]
    err0 = A_qp @ x0 - x_ref.reshape(-1)
    BtQ = B_qp.T * ws.q_bar
    H = 2.0 * (BtQ @ B_qp)
    H[ws.diag_idx, ws.diag_idx] += ws.r_bar2
    m = 2.0 * (BtQ @ err0)
    return H, m, A_qp, B_qp


def _constraint_matrix(mu: float, horizon: int, hand_frame: np.ndarray) -> np.ndarray:
    """Constant constraint matrix for the fixed row layout."""
    C = np.zeros((ROWS_PER_STEP * horizon, NU * horizon))
    n_h = hand_frame[:, 0]
    t1 = hand_frame[:, 1]
    t2 = hand_frame[:, 2]
    for k in range(horizon):
        r0 = ROWS_PER_STEP * k
        u0 = NU * k
        for fi, fsl in enumerate((slice(3, 6), slice(6, 9))):   # left, right
            base = r0 + 5 * fi
            for ci, (ax, nz) in enumerate(_F_CONE):
                C[base + 2 * ci, u0 + fsl.start + ax] = 1.0
                C[base + 2 * ci, u0 + fsl.start + nz] = -mu
                C[base + 2 * ci + 1, u0 + fsl.start + ax] = 1.0
                C[base + 2 * ci + 1, u0 + fsl.start + nz] = mu
            C[base + 4, u0 + fsl.start + 2] = 1.0
        hb = r0 + 10
        for ci, tv in enumerate((t1, t2)):
            C[hb + 2 * ci, u0:u0 + 3] = tv - mu * n_h
            C[hb + 2 * ci + 1, u0:u0 + 3] = tv + mu * n_h
        C[hb + 4, u0:u0 + 3] = n_h
        for j in range(9):
            C[r0 + 15 + j, u0 + j] = 1.0
            C[r0 + 24 + j, u0 + 9 + j] = 1.0
    return C


def _step_bounds(step: StepContact):
    """(lo, up) for one horizon step's ROWS_PER_STEP rows."""
    lo = np.empty(ROWS_PER_STEP)
    up = np.empty(ROWS_PER_STEP)
    inf = INF_BOUND * 10
    cs = step.contacts
    for fi, name in enumerate(("left", "right")):
        base = 5 * fi
        if cs.active(name):
            lo[base:base + 4:2] = -inf
            up[base:base + 4:2] = 0.0
            lo[base + 1:base + 4:2] = 0.0
            up[base + 1:base + 4:2] = inf
            lo[base + 4] = 0.0
            up[base + 4] = step.f_foot_max
        else:
            lo[base:base + 5] = -inf
            up[base:base + 5] = inf
    if cs.hand_in_contact:
        lo[10:14:2] = -inf
        up[10:14:2] = 0.0
        lo[11:14:2] = 0.0
        up[11:14:2] = inf
        lo[14] = step.f_hand_min
        up[14] = step.f_hand_max
    else:
        lo[10:15] = -inf
        up[10:15] = inf
    for si, name in enumerate(("hand", "left", "right")):
        fp = 15 + 3 * si
        mp = 24 + 3 * si
        val = (-inf, inf) if cs.active(name) else (0.0, 0.0)
        lo[fp:fp + 3] = val[0]
        up[fp:fp + 3] = val[1]
        lo[mp:mp + 3] = val[0]
        up[mp:mp + 3] = val[1]
    return lo, up


def _constraint_bounds(schedule: ContactSchedule, params: RobotParams):
    N = len(schedule)
    lo = np.empty((N, ROWS_PER_STEP))
    up = np.empty((N, ROWS_PER_STEP))
    cache = {}
    for k, step in enumerate(schedule.steps):
        key = id(step)
        if key not in cache:
            cache[key] = _step_bounds(step)
        lo[k], up[k] = cache[key]
    return lo.reshape(-1), up.reshape(-1)


def build_contact_constraints(schedule: ContactSchedule, params: RobotParams):
    """(C, c_min, c_max) for the stacked input vector. Friction cones and
    force bounds for active contacts, zero pins for inactive wrench
    entries."""
    C = _constraint_matrix(params.mu, len(schedule), schedule.hand_frame)
    lo, up = _constraint_bounds(schedule, params)
    return C, lo, up


def wrench_to_torques(J_p: np.ndarray, J_o: np.ndarray, T_sel: np.ndarray,
                      L_sel: np.ndarray, u_site: np.ndarray) -> np.ndarray:
    """Joint torques realizing a site wrench through the stacked, selection-
    masked Jacobian: tau = (T J_p)' F + (L J_o)' M."""
    u_site = np.asarray(u_site, dtype=float)
    return (T_sel @ J_p).T @ u_site[:3] + (L_sel @ J_o).T @ u_site[3:]


class SrbMpc:
    """Per-robot MPC instance: owns the QP solver (warm-start state), the
    cached constraint matrix, and the previous wrench for failure holds."""

    def __init__(self, config: MpcConfig, params: RobotParams, dump_fp=None):
        self.config = config
        self.params = params
        self.solver = DenseQpSolver()
        self.prev_u0 = np.zeros(NU)
        self.dump_fp = dump_fp        # binary QP dump stream, one record/tick
        self._C = None
        self._hand_frame_key = None
        self._consecutive_failures = 0
        self._ws = _CondenseWorkspace(config)

    def _constraint_cache(self, schedule: ContactSchedule):
        key = schedule.hand_frame.tobytes()
        if self._C is None or key != self._hand_frame_key:
            self._C = _constraint_matrix(self.params.mu, self.config.horizon,
                                         schedule.hand_frame)
            self._hand_frame_key = key
        return self._C

    def solve(self, x0: np.ndarray, command, schedule: ContactSchedule) -> MpcOutput:
        """One tick: returns the first optimal wrench and the predicted
        trajectory. On solver failure the previous wrench is held and the
        output is flagged."""
        cfg = self.config
        N = cfg.horizon
        if len(schedule) != N:
            raise ValueError("schedule length must equal the horizon")
        params = self.params
        state = SrbState.from_vector(x0)
        A_ce, _ = build_continuous_dynamics(state, schedule.steps[0].contacts, params)
        A_d, Psi = zoh_transition_nilpotent3(A_ce, cfg.dt)
        B_steps = []
        prev_cs = None
        B_d = None
        for step in schedule.steps:
            if step.contacts is not prev_cs:
                _, B_ce = build_continuous_dynamics(state, step.contacts, params)
                B_d = Psi @ B_ce
                prev_cs = step.contacts
            B_steps.append(B_d)
        ref = build_reference(x0, command, cfg, params)
        H, m, A_qp, B_qp = condense((A_d, B_steps), x0, ref, cfg, self._ws)
        C = self._constraint_cache(schedule)
        lo, up = _constraint_bounds(schedule, params)
        problem = QpProblem(H, m, C, lo, up, validate=False)
        if self.dump_fp is not None:
            from .qp import dump_qp
            dump_qp(problem, self.dump_fp)
        sol = self.solver.solve(problem)
        ok = sol.status == QpStatus.OPTIMAL
        if ok:
            U = sol.x
            u0 = U[:NU].copy()
            self.prev_u0 = u0
            self._consecutive_failures = 0
        else:
            U = np.tile(self.prev_u0, N)
            u0 = self.prev_u0.copy()
            self._consecutive_failures += 1
        predicted = (A_qp @ x0 + B_qp @ U).reshape(N, NX)
        return MpcOutput(u0, predicted, ref, ok, sol.status, sol.iterations,
                         sol.solve_time, sol.objective)


def solve_mpc(x0: np.ndarray, command, schedule: ContactSchedule,
              config: MpcConfig, params: RobotParams,
              mpc: SrbMpc | None = None) -> MpcOutput:
    """Functional wrapper; pass an SrbMpc to keep warm-start state."""
    if mpc is None:
        mpc = SrbMpc(config, params)
    return mpc.solve(x0, command, schedule)
