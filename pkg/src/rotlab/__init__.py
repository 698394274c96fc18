"""
Rotating shallow-water and Euler laboratory on the 2D torus.

Closed-form pressureless flow, the periodic second approximation, full
pseudo-spectral solvers, and scripted delta-scaling experiments.
"""

from rotlab.approx import (
    ApproxSolution,
    approximate_solution,
    build_u2,
    residual_R,
    transport_h2_exact,
    transport_h2_numeric,
    transport_S2,
    vacuum_guard,
)
from rotlab.params import FlowParams
from rotlab.pressureless import (
    PressurelessFlow,
    ThresholdReport,
    eulerian_velocity,
    gradient_matrix,
    lagrangian_velocity,
    relative_vorticity,
    threshold_analyze,
    trajectory_position,
)
from rotlab.solver import FlowState, SolverOptions, breakdown_time, compare_to_approx, integrate, rhs, step
from rotlab.spectral import (
    ScalarField,
    TorusGrid,
    VectorField,
    dealias,
    grad_linf,
    linf_norm,
    sobolev_norm,
    spectral_derivative,
)
from rotlab.transforms import denormalize, normalize_height

__version__ = "0.1.0"
