"""Experiment harness: closed-loop scenarios, tracking runs, push sweeps.

A scenario wires one plant to one controller variant, walks it at a
commanded speed, applies scripted pushes, and classifies the outcome over
a fixed post-push window. The sweep enumerates the default 1440-cell push
grid per controller variant; results stream into a CSV (one row per
scenario) plus a JSON summary. Everything is deterministic: identical
configuration gives byte-identical outputs, and scenario-level parallelism
cannot change any outcome because scenarios share nothing.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import TelemetryLog, WalkingController
from .hlip import HlipConfig
from .mpc import MpcConfig
from .plant import (FailureCode, PlantState, PushEvent, SrbPlant,
                    classify_failure)
from .srb import RobotParams
from .supervisor import SupervisorConfig, WallSet

POST_PUSH_WINDOW = 5.0

CSV_COLUMNS = ("variant", "force_N", "height_m", "side", "speed_mps",
               "push_time_s", "outcome", "failure_code", "recovery_s",
               "peak_vdev", "peak_wdev")


@dataclass
class SweepGrid:
    """Push-sweep grid; the default enumerates 1440 cells."""

    forces: tuple = tuple(range(30, 101, 10))
    heights: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    sides: tuple = ("left", "right")
    speeds: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    push_times: tuple = (2.0, 2.5, 3.0)
    push_duration: float = 0.2
    pre_push_walk: float = 2.0

    def cells(self):
        return list(itertools.product(self.forces, self.heights, self.sides,
                                      self.speeds, self.push_times))

    def __len__(self):
        return (len(self.forces) * len(self.heights) * len(self.sides)
                * len(self.speeds) * len(self.push_times))

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepGrid":
        kw = {}
        for key in ("forces", "heights", "sides", "speeds", "push_times"):
            if key in raw:
                kw[key] = tuple(raw[key])
        for key in ("push_duration", "pre_push_walk"):
            if key in raw:
                kw[key] = float(raw[key])
        return cls(**kw)


@dataclass
class ScenarioResult:
    variant: str
    force: float
    height: float
    side: str
    speed: float
    push_time: float
    outcome: str                 # "recovered" / "failed"
    failure_code: str
    recovery_s: float
    peak_vdev: float
    peak_wdev: float

    def csv_row(self) -> str:
        return ",".join([
            self.variant, _fmt(self.force), _fmt(self.height), self.side,
            _fmt(self.speed), _fmt(self.push_time), self.outcome,
            self.failure_code, _fmt(self.recovery_s), _fmt(self.peak_vdev),
            _fmt(self.peak_wdev),
        ])


@dataclass
class SafesetStats:
    variant: str
    recovered: int
    total: int
    worst_case_force: float      # largest force recovered at every cell it appears

    @property
    def percentage(self) -> float:
        return 100.0 * self.recovered / self.total if self.total else 0.0


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


@dataclass
class StackConfig:
    """Everything needed to build one plant + controller pair."""

    params: RobotParams = field(default_factory=RobotParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    hlip: HlipConfig | None = None
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    wall_offset: float = 0.8
    wall_tilt_deg: float = 0.0

    def __post_init__(self):
        if self.hlip is None:
            self.hlip = HlipConfig.from_robot(self.params.g_mag, self.params.z0)

    def walls(self) -> WallSet:
        return WallSet.corridor(self.wall_offset, self.wall_tilt_deg)


@dataclass
class ScenarioTrace:
    t: np.ndarray
    p_c: np.ndarray
    v_c: np.ndarray
    quat: np.ndarray
    omega: np.ndarray
    mode: list
    u0: np.ndarray
    frequency: np.ndarray

    def euler(self) -> np.ndarray:
        from .plant import quat_to_euler
        return np.array([quat_to_euler(q) for q in self.quat])

    def write_csv(self, fp):
        fp.write("t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,mode,freq,"
                 + ",".join(f"u{i}" for i in range(18)) + "\n")
        for i in range(len(self.t)):
            row = ([_fmt(self.t[i])]
                   + [_fmt(v) for v in self.p_c[i]]
                   + [_fmt(v) for v in self.v_c[i]]
                   + [_fmt(v) for v in self.quat[i]]
                   + [_fmt(v) for v in self.omega[i]]
                   + [self.mode[i], _fmt(self.frequency[i])]
                   + [_fmt(v) for v in self.u0[i]])
            fp.write(",".join(row) + "\n")


def simulate(variant: str, stack: StackConfig, command, duration: float,
             pushes=(), stop_on_failure: bool = False,
             telemetry: TelemetryLog | None = None):
    """Run one closed-loop scenario; returns (trace, failure code, time)."""
    walls = stack.walls()
    plant = SrbPlant(stack.params)
    ctrl = WalkingController(variant, stack.params, walls,
                             mpc_config=stack.mpc, hlip_config=stack.hlip,
                             supervisor_config=stack.supervisor,
                             telemetry=telemetry)
    ctrl.reset(plant)
    dt = 1.0 / stack.mpc.control_rate
    n_sub = max(1, round(dt / plant.dt))
    n_ticks = int(round(duration / dt))
    ts = np.empty(n_ticks)
    ps = np.empty((n_ticks, 3))
    vs = np.empty((n_ticks, 3))
    qs = np.empty((n_ticks, 4))
    ws = np.empty((n_ticks, 3))
    us = np.empty((n_ticks, 18))
    fr = np.empty(n_ticks)
    modes = []
    geometry = None
    t = 0.0
    n_done = 0
    fail_code, fail_t = FailureCode.NONE, None
    for k in range(n_ticks):
        push = None
        for p in pushes:
            if p.active(t):
                push = p
                break
        u, contacts, limbs, info = ctrl.tick(plant, command, t, dt)
        plant.step(u, contacts, push, n_substeps=n_sub)
        for limb, target in limbs.items():
            plant.move_limb(limb, target, dt)
        st = plant.state
        t = st.t
        ts[k] = t
        ps[k] = st.p_c
        vs[k] = st.v_c
        qs[k] = st.quat
        ws[k] = st.omega
        us[k] = u
        fr[k] = info["frequency"]
        modes.append(info["mode"])
        n_done = k + 1
        if stop_on_failure and (k % 25 == 24 or k == n_ticks - 1):
            code, tf = classify_failure(ts[max(0, k - 24):n_done],
                                        ps[max(0, k - 24):n_done],
                                        qs[max(0, k - 24):n_done],
                                        walls, stack.params,
                                        shoulder_dwell=np.inf)
            if code != FailureCode.NONE:
                fail_code, fail_t = code, tf
                break
    trace = ScenarioTrace(ts[:n_done], ps[:n_done], vs[:n_done], qs[:n_done],
                          ws[:n_done], modes, us[:n_done], fr[:n_done])
    code, tf = classify_failure(trace.t, trace.p_c, trace.quat, walls, stack.params)
    if code == FailureCode.NONE and fail_code != FailureCode.NONE:
        code, tf = fail_code, fail_t
    return trace, code, tf


# -- push sweep ---------------------------------------------------------------

def run_cell(variant: str, stack: StackConfig, cell) -> ScenarioResult:
    """One sweep cell: walk, push, classify over the post-push window."""
    force, height, side, speed, push_time = cell
    direction = -1.0 if side == "left" else 1.0   # pushed from that side
    push = PushEvent(force=[0.0, direction * force, 0.0], height=height,
                     start=push_time)
    duration = push_time + push.duration + POST_PUSH_WINDOW
    try:
        trace, code, tf = simulate(variant, stack, (speed, 0.0, 0.0), duration,
                                   pushes=[push], stop_on_failure=True)
        recovered = code == FailureCode.NONE
        # deviation peaks after push onset
        mask = trace.t >= push_time
        ref_v = np.zeros((int(mask.sum()), 3))
        ref_v[:, 0] = speed
        peak_v = float(np.max(np.linalg.norm(trace.v_c[mask] - ref_v, axis=1), initial=0.0))
        peak_w = float(np.max(np.linalg.norm(trace.omega[mask], axis=1), initial=0.0))
        if recovered:
            # time from push onset until deviations settle for good
            dev = (np.linalg.norm(trace.v_c[mask] - ref_v, axis=1) > 0.1) \
                | (np.linalg.norm(trace.omega[mask], axis=1) > 0.1)
            idx = np.flatnonzero(dev)
            rec_t = float(trace.t[mask][idx[-1]] - push_time) if idx.size else 0.0
        else:
            rec_t = float("nan")
        return ScenarioResult(variant, force, height, side, speed, push_time,
                              "recovered" if recovered else "failed",
                              code.value, rec_t, peak_v, peak_w)
    except Exception as exc:   # a crashed cell is a failed cell, never fatal
        return ScenarioResult(variant, force, height, side, speed, push_time,
                              "failed", f"error:{type(exc).__name__}",
                              float("nan"), float("nan"), float("nan"))


def _run_cell_job(args):
    variant, stack, cell = args
    return run_cell(variant, stack, cell)


def run_push_sweep(grid: SweepGrid, stack: StackConfig,
                   variants=("hlip", "mpc"), parallel: int = 1,
                   progress=None):
    """All grid cells for each variant, merged in deterministic grid order."""
    cells = grid.cells()
    jobs = [(variant, stack, cell) for variant in variants for cell in cells]
    results = []
    if parallel > 1 and len(jobs) > 1:
        import multiprocessing as mp
        ctx = mp.get_context("spawn")
        with ctx.Pool(parallel) as pool:
            for i, res in enumerate(pool.imap(_run_cell_job, jobs, chunksize=4)):
                results.append(res)
                if progress:
                    progress(i + 1, len(jobs), res)
    else:
        for i, job in enumerate(jobs):
            res = _run_cell_job(job)
            results.append(res)
            if progress:
                progress(i + 1, len(jobs), res)
    return results


def compute_safeset_stats(results) -> dict:
    """Per-variant recovered counts plus the worst-case force each variant
    rejects across every in-place cell (the all-direction tolerance)."""
    stats = {}
    for variant in sorted({r.variant for r in results}):
        rs = [r for r in results if r.variant == variant]
        recovered = sum(1 for r in rs if r.outcome == "recovered")
        # all-direction in-place tolerance: largest force such that every
        # in-place cell at that force and below recovered
        worst = 0.0
        in_place = [r for r in rs if r.speed == 0.0]
        for f in sorted({r.force for r in in_place}):
            group = [r for r in in_place if r.force == f]
            if all(r.outcome == "recovered" for r in group):
                worst = f
            else:
                break
        stats[variant] = SafesetStats(variant, recovered, len(rs), worst)
    return stats


def write_sweep_outputs(results, stats, out_dir):
    """results.csv (one row per scenario, grid order) + summary.json."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as fp:
        fp.write(",".join(CSV_COLUMNS) + "\n")
        for r in results:
            fp.write(r.csv_row() + "\n")
    summary = {
        variant: {
            "recovered": s.recovered,
            "total": s.total,
            "percentage": round(s.percentage, 4),
            "worst_case_force_N": s.worst_case_force,
        }
        for variant, s in stats.items()
    }
    if "hlip" in stats and "mpc" in stats and stats["hlip"].percentage > 0:
        summary["ratio_mpc_over_hlip"] = round(
            stats["mpc"].percentage / stats["hlip"].percentage, 4)
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w") as fp:
        json.dump(summary, fp, indent=2, sort_keys=True)
        fp.write("\n")
    return csv_path, json_path


# -- tracking test -------------------------------------------------------------

def run_tracking(stack: StackConfig, speed: float = 0.5, duration: float = 8.0,
                 variants=("hlip", "mpc"), axis: str = "x"):
    """Stepped-command test: start in place, step the command to `speed`
    at t = 1 s, hold. Reports per-variant traces and summary metrics."""
    reports = {}
    for variant in variants:
        plant_cmd_schedule = [(0.0, (0.0, 0.0, 0.0))]
        cmd = {"x": (speed, 0.0, 0.0), "y": (0.0, speed, 0.0),
               "yaw": (0.0, 0.0, speed)}[axis]
        plant_cmd_schedule.append((1.0, cmd))
        trace, code, tf = _simulate_with_schedule(variant, stack,
                                                  plant_cmd_schedule, duration)
        vel = trace.v_c
        ts = trace.t
        mask = ts >= duration - 2.0
        if axis == "x":
            achieved = float(vel[mask, 0].mean())
        elif axis == "y":
            achieved = float(vel[mask, 1].mean())
        else:
            achieved = float(trace.omega[mask, 2].mean())
        settle = ts >= 2.0
        roll_env = float(np.max(np.abs(trace.omega[settle, 0]), initial=0.0))
        reports[variant] = {
            "trace": trace,
            "failure": code.value,
            "commanded": speed,
            "achieved_mean_last2s": achieved,
            "roll_rate_envelope": roll_env,
        }
    return reports


def _simulate_with_schedule(variant, stack, cmd_schedule, duration):
    """Like simulate() but with a piecewise-constant command schedule."""
    walls = stack.walls()
    plant = SrbPlant(stack.params)
    ctrl = WalkingController(variant, stack.params, walls,
                             mpc_config=stack.mpc, hlip_config=stack.hlip,
                             supervisor_config=stack.supervisor)
    ctrl.reset(plant)
    dt = 1.0 / stack.mpc.control_rate
    n_sub = max(1, round(dt / plant.dt))
    n_ticks = int(round(duration / dt))
    ts = np.empty(n_ticks)
    ps = np.empty((n_ticks, 3))
    vs = np.empty((n_ticks, 3))
    qs = np.empty((n_ticks, 4))
    ws = np.empty((n_ticks, 3))
    us = np.empty((n_ticks, 18))
    fr = np.empty(n_ticks)
    modes = []
    t = 0.0
    for k in range(n_ticks):
        command = cmd_schedule[0][1]
        for t_on, cmd in cmd_schedule:
            if t >= t_on:
                command = cmd
        u, contacts, limbs, info = ctrl.tick(plant, command, t, dt)
        plant.step(u, contacts, None, n_substeps=n_sub)
        for limb, target in limbs.items():
            plant.move_limb(limb, target, dt)
        st = plant.state
        t = st.t
        ts[k] = t
        ps[k] = st.p_c
        vs[k] = st.v_c
        qs[k] = st.quat
        ws[k] = st.omega
        us[k] = u
        fr[k] = info["frequency"]
        modes.append(info["mode"])
    trace = ScenarioTrace(ts, ps, vs, qs, ws, modes, us, fr)
    code, tf = classify_failure(ts, ps, qs, walls, stack.params)
    return trace, code, tf


def write_tracking_csv(reports, out_dir, axis="x"):
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for variant, rep in reports.items():
        path = os.path.join(out_dir, f"tracking_{axis}_{variant}.csv")
        with open(path, "w") as fp:
            rep["trace"].write_csv(fp)
        paths.append(path)
    summary = {variant: {k: v for k, v in rep.items() if k != "trace"}
               for variant, rep in reports.items()}
    spath = os.path.join(out_dir, f"tracking_{axis}_summary.json")
    with open(spath, "w") as fp:
        json.dump(summary, fp, indent=2, sort_keys=True)
        fp.write("\n")
    return paths + [spath]
