"""Transformed snapshot interpolation with hp-adaptive parameter refinement.

Approximates parametric functions with moving jump discontinuities by
interpolating snapshots after aligning them with parameter-dependent spatial
transforms. Includes an exact Burgers front-tracking solver for snapshots.
"""

from hptsi.burgers import (PiecewiseConstantIC, collision_time, godunov_solve, sample,
                           shock_rarefaction_ic, solve_front_tracking, two_shock_ic)
from hptsi.field import Grid1D, SampledField, evaluate, l1_distance, mollify
from hptsi.fit import FitConfig, FitError, FitReport, fit_cell, fit_localized
from hptsi.hp import (Cell, Partition, ScheduleConfig, adapt, build_models, evaluate_partition,
                      hp_decide, partition_values, theoretical_schedule)
from hptsi.interp import NodeSet, chebyshev_nodes, interpolate_fields, lagrange_coeffs
from hptsi.tensor import (Axis1Config, Axis2Config, ComponentModel, evaluate_componentwise,
                          fit_componentwise)
from hptsi.transforms import TransformSet, apply, compose_chain, dof_count
from hptsi.tsi import TsiCellModel, transformed_snapshot, tsi_evaluate, worst_case_error

__version__ = "0.1.0"

__all__ = [
    "Axis1Config",
    "Axis2Config",
    "Cell",
    "ComponentModel",
    "FitConfig",
    "FitError",
    "FitReport",
    "Grid1D",
    "NodeSet",
    "Partition",
    "PiecewiseConstantIC",
    "SampledField",
    "ScheduleConfig",
    "TransformSet",
    "TsiCellModel",
    "adapt",
    "apply",
    "build_models",
    "chebyshev_nodes",
    "collision_time",
    "compose_chain",
    "dof_count",
    "evaluate",
    "evaluate_componentwise",
    "evaluate_partition",
    "fit_cell",
    "fit_componentwise",
    "fit_localized",
    "godunov_solve",
    "hp_decide",
    "interpolate_fields",
    "l1_distance",
    "lagrange_coeffs",
    "mollify",
    "partition_values",
    "sample",
    "shock_rarefaction_ic",
    "solve_front_tracking",
    "theoretical_schedule",
    "transformed_snapshot",
    "tsi_evaluate",
    "two_shock_ic",
    "worst_case_error",
]
