"""Vibration dynamics of a Cartesian FFF printer gantry with a carriage-mounted tuned mass damper."""
from .analysis import (CaseMetrics, DoePlan, MainEffects, main_effects, run_doe, tracking_metrics,
                       tune_tmd)
from .dynamics import (SystemMatrices, assemble_A, deriv, deriv_three_mass, mechanical_energy,
                       observe, spectrum)
from .integrator import SimConfig, SimulationError, Trajectory, rk4_step, simulate
from .motion import (ConfigError, IdealProfile, KinematicLimits, TorqueProfile,
                     build_ideal_profile, ideal_state_at, torque_profile)
from .params import (TABLE_II, DomainError, GantryParams, TmdParams, belt_stiffness_fixed,
                     belt_stiffness_moving, pulley_inertia, validate_params)

__version__ = "0.1.0"
