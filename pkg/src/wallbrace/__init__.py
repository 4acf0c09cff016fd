"""Walking and push-recovery control stack on a single-rigid-body plant.

A wrench-level model-predictive controller (dense QP over friction-cone
constrained contact forces, including wall-bracing hand contacts) combined
with pendulum-based deadbeat stepping, a push-detection supervisor, a
nonlinear rigid-body simulator, and the experiment harness that measures
tracking performance and push-recovery safesets.
"""

from .discretize import DiscreteDynamics, zoh_discretize, zoh_transition
from .hlip import (HlipConfig, HlipState, SwingTarget, deadbeat_gain,
                   nominal_p1_orbit, s2s_matrices, ssp_flow, step_feedback,
                   swing_trajectory)
from .mpc import (ContactSchedule, MpcConfig, MpcOutput, SrbMpc, StepContact,
                  build_contact_constraints, build_reference, condense,
                  solve_mpc, wrench_to_torques)
from .plant import (FailureCode, PlantState, PushEvent, SrbPlant,
                    TorsoGeometry, check_hand_contact, classify_failure,
                    step_plant, wall_distance)
from .qp import (DenseQpSolver, QpProblem, QpSolution, QpStatus, dump_qp,
                 kkt_residual, load_qp, solve_qp)
from .srb import (ContactSet, InputWrench, RobotParams, SrbState,
                  build_continuous_dynamics, rotation_z, rotation_z_inverse,
                  selection_matrices, skew)
from .supervisor import (HandPhase, Mode, Supervisor, SupervisorConfig, Wall,
                         WallSet, contact_limits, detect_push, hand_target,
                         limit_step_location, update_mode, wall_reachable)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
