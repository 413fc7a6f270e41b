"""Finite-horizon reversible capacity investment toolkit.

Solves the two moving action thresholds of the investment/disinvestment band,
evaluates the band value function, cross-checks it with a penalized PDE
solver, and verifies the optimal policy by Monte Carlo simulation.
"""

from .model import (
    DerivedConstants,
    ModelParams,
    ProductionFn,
    crossing_prob_above,
    crossing_prob_below,
    derived_constants,
    rc_inverse,
    truncated_marginal_expectation,
)
from .boundaries import (
    BoundaryCurves,
    BoundaryProblem,
    GridConfig,
    certify_residuals,
    interpolate,
    residual_minus,
    residual_plus,
    solve_boundaries,
    terminal_values,
)

__version__ = "0.1.0"
