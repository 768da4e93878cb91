"""Bias-aware trajectory planning for range-aided inertial navigation.

The package couples a derivative-closed Gaussian process interpolator, an
error-state Kalman filter with IMU bias states, and sampling planners whose
edge utility is the forecast reduction in bias (or position) covariance.
"""

from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .eskf import (EstimatorState, Landmark, RangeMeasurement, SensorConfig,
                   error_state_jacobians, forecast_covariance,
                   initial_covariance, predict, trace_bias, trace_position,
                   update_range)
from .gp import (DerivativeOrder, GpObservation, GpPosterior, KernelParams,
                 gp_infer, se_kernel)
from .imu import GRAVITY, ImuNoiseSpec, ImuSample, TrueState, \
    integrate_kinematics, synthesize_imu
from .minsnap import PolySegment, fit_min_snap, interpolate_min_snap, snap_cost
from .planner import (Box, PlannedPath, PlannerConfig, PlannerError, PlanNode,
                      PlanTree, Pose6D, UtilityMode, greedy_plan,
                      rrt_star_plan, select_mode, utility)
from .rotations import so3_exp, so3_log, so3_right_jacobian
from .scenarios import Scenario, make_scenario
from .trajectory import (SegmentSpec, TrajectorySegment, default_kernel,
                         hold_segment, interpolate_segment,
                         segment_duration_heuristic)

__version__ = "0.1.0"

__all__ = [
    "Box", "ConfigError", "DerivativeOrder", "EstimatorState",
    "ExperimentConfig", "GRAVITY", "GpObservation", "GpPosterior",
    "ImuNoiseSpec", "ImuSample", "KernelParams", "Landmark", "PlanNode",
    "PlanTree", "PlannedPath", "PlannerConfig", "PlannerError", "PolySegment",
    "Pose6D", "RangeMeasurement", "Scenario", "SegmentSpec", "SensorConfig",
    "TrajectorySegment", "TrueState", "UtilityMode", "default_kernel",
    "dump_config", "error_state_jacobians", "fit_min_snap",
    "forecast_covariance", "gp_infer", "greedy_plan", "hold_segment",
    "initial_covariance", "integrate_kinematics", "interpolate_min_snap",
    "interpolate_segment", "load_config", "make_scenario", "predict",
    "rrt_star_plan", "se_kernel", "segment_duration_heuristic", "select_mode",
    "snap_cost", "so3_exp", "so3_log", "so3_right_jacobian", "synthesize_imu",
    "trace_bias", "trace_position", "update_range", "utility", "__version__",
]
