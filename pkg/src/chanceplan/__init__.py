"""Chance-constrained collision avoidance for robots with Gaussian state
uncertainty: collision-probability bounds and baselines, EKF belief
propagation, a receding-horizon planner and a multi-robot simulator."""

from .collision import Body, CollisionQuery, bound_collision_probability, constraint_margin, estimate
from .dynamics import BeliefState, NoiseSpec
from .gaussian import GaussianBelief, chi2_cdf, chi2_inv_cdf
from .planner import ControlBounds, CostSpec, HorizonPlan, ObstacleForecast, plan
from .sim import RobotSpec, ScenarioConfig, run_scenario, scenario_position_exchange

__all__ = [
    "BeliefState",
    "Body",
    "CollisionQuery",
    "ControlBounds",
    "CostSpec",
    "GaussianBelief",
    "HorizonPlan",
    "NoiseSpec",
    "ObstacleForecast",
    "RobotSpec",
    "ScenarioConfig",
    "bound_collision_probability",
    "chi2_cdf",
    "chi2_inv_cdf",
    "constraint_margin",
    "estimate",
    "plan",
    "run_scenario",
    "scenario_position_exchange",
]
