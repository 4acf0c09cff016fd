"""JSON configuration for the experiment harness.

Schema (all sections optional, defaults apply):

    {
      "robot":      {mass, inertia, gravity, mu, z0, arm_reach,
                     f_foot_max, f_hand_min, f_hand_max},
      "mpc":        {horizon, dt, q_diag, r_diag, control_rate},
      "hlip":       {t_dsp, z_swing_min, z_swing_max,
                     nominal_frequency, recovery_frequency},
      "supervisor": {v_threshold, w_threshold, exit_hysteresis, exit_dwell,
                     step_margin, hand_height, retract_duration},
      "walls":      {offset, tilt_deg},
      "grid":       {forces, heights, sides, speeds, push_times,
                     push_duration, pre_push_walk},
      "scenario":   {command, duration, pushes: [{force, height, start,
                     duration}]}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .harness import StackConfig, SweepGrid
from .hlip import HlipConfig
from .mpc import MpcConfig
from .plant import PushEvent
from .srb import RobotParams
from .supervisor import SupervisorConfig


@dataclass
class ScenarioSpec:
    command: tuple = (0.0, 0.0, 0.0)
    duration: float = 8.0
    pushes: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioSpec":
        pushes = [PushEvent(force=p["force"], height=p.get("height", 0.1),
                            start=p["start"], duration=p.get("duration", 0.2))
                  for p in raw.get("pushes", [])]
        return cls(command=tuple(raw.get("command", (0.0, 0.0, 0.0))),
                   duration=float(raw.get("duration", 8.0)), pushes=pushes)


@dataclass
class HarnessConfig:
    stack: StackConfig
    grid: SweepGrid
    scenario: ScenarioSpec
    tracking_speed: float = 0.5
    tracking_duration: float = 8.0

    @classmethod
    def default(cls) -> "HarnessConfig":
        return cls(StackConfig(), SweepGrid(), ScenarioSpec())


def _mpc_from_dict(raw: dict) -> MpcConfig:
    kw = {}
    for key in ("horizon",):
        if key in raw:
            kw[key] = int(raw[key])
    for key in ("dt", "control_rate"):
        if key in raw:
            kw[key] = float(raw[key])
    for key in ("q_diag", "r_diag"):
        if key in raw:
            kw[key] = np.asarray(raw[key], dtype=float)
    return MpcConfig(**kw)


def _hlip_from_dict(raw: dict, params: RobotParams) -> HlipConfig:
    kw = {}
    for key in ("t_dsp", "z_swing_min", "z_swing_max",
                "nominal_frequency", "recovery_frequency"):
        if key in raw:
            kw[key] = float(raw[key])
    freq = kw.pop("nominal_frequency", 3.0)
    t_dsp = kw.pop("t_dsp", 0.0)
    period = 1.0 / freq
    return HlipConfig.from_robot(params.g_mag, params.z0,
                                 t_ssp=period - t_dsp, t_dsp=t_dsp,
                                 nominal_frequency=freq, **kw)


def _supervisor_from_dict(raw: dict) -> SupervisorConfig:
    kw = {k: float(v) for k, v in raw.items()
          if k in ("v_threshold", "w_threshold", "normal_frequency",
                   "recovery_frequency", "exit_hysteresis", "exit_dwell",
                   "step_margin", "hand_height", "retract_duration")}
    return SupervisorConfig(**kw)


def load_config(path=None) -> HarnessConfig:
    """Build the harness configuration from a JSON file (or defaults)."""
    raw = {}
    if path is not None:
        with open(path) as fp:
            raw = json.load(fp)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> HarnessConfig:
    params = RobotParams.from_dict(raw.get("robot", {}))
    mpc = _mpc_from_dict(raw.get("mpc", {}))
    hl = _hlip_from_dict(raw.get("hlip", {}), params)
    sup = _supervisor_from_dict(raw.get("supervisor", {}))
    walls = raw.get("walls", {})
    stack = StackConfig(params=params, mpc=mpc, hlip=hl, supervisor=sup,
                        wall_offset=float(walls.get("offset", 0.8)),
                        wall_tilt_deg=float(walls.get("tilt_deg", 0.0)))
    grid = SweepGrid.from_dict(raw.get("grid", {}))
    scenario = ScenarioSpec.from_dict(raw.get("scenario", {}))
    tr = raw.get("tracking", {})
    return HarnessConfig(stack, grid, scenario,
                         tracking_speed=float(tr.get("speed", 0.5)),
                         tracking_duration=float(tr.get("duration", 8.0)))
