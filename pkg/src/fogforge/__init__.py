"""Workbench for multi-objective service placement on fog infrastructures."""

from fogforge.model import (
    Application,
    ConfigurationError,
    Device,
    InstanceTooLargeError,
    InvalidPlacementError,
    NormBounds,
    ObjectivePoint,
    Placement,
    WeightVector,
    analytic_bounds,
    batch_objectives,
    brute_force_oracle,
    dominates,
    evaluate,
    hypervolume_2d,
    latency_contribution_matrix,
    pareto_front,
    placement_cost,
    response_time,
    weighted_objective,
)

__version__ = "0.1.0"

__all__ = [
    "Application",
    "ConfigurationError",
    "Device",
    "InstanceTooLargeError",
    "InvalidPlacementError",
    "NormBounds",
    "ObjectivePoint",
    "Placement",
    "WeightVector",
    "analytic_bounds",
    "batch_objectives",
    "brute_force_oracle",
    "dominates",
    "evaluate",
    "hypervolume_2d",
    "latency_contribution_matrix",
    "pareto_front",
    "placement_cost",
    "response_time",
    "weighted_objective",
]
