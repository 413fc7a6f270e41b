"""Penalized parabolic solver: the verification path independent of the
threshold representation.

Works in log-capacity x = ln y, where the generator has constant
coefficients.  The double-obstacle structure (value pinned between
c_minus/f_c and c_plus/f_c) is imposed by penalty terms of strength 1/epsilon
acting wherever the solution escapes the band of admissible values; the
scheme is implicit Euler in time with a semismooth Newton solve per step (the
penalty is piecewise linear, so its generalized derivative is a diagonal
indicator).  Thresholds are recovered afterwards by locating the level
crossings of each time slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .boundaries import BoundaryCurves, plus_upper_bound, terminal_values
from .errors import ConvergenceError, ExtractionError
from .model import ModelParams, ProductionFn, derived_constants
from .value import ValueGrid

__all__ = [
    "PdeConfig",
    "solve_penalized",
    "extract_boundaries",
    "penalty_excess",
]


@dataclass(frozen=True)
class PdeConfig:
    """Space-time grid and nonlinear-solver controls for the penalized PDE."""

    x_min: float = -4.5           # log-capacity domain, must sit deep in the
    x_max: float = 3.5            # investment / disinvestment regions
    n_x: int = 400                # space nodes
    n_t: int = 400                # time steps
    epsilon: float = 1e-4         # penalty strength 1/epsilon
    newton_tol: float = 1e-10     # sup-norm tolerance on the step residual
    newton_max_iters: int = 30

    def __post_init__(self) -> None:
        if self.x_min >= self.x_max:
            raise ValueError("x_min must be below x_max")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_x < 50 or self.n_t < 50:
            raise ValueError("n_x and n_t must be at least 50")
        if self.newton_tol <= 0 or self.newton_max_iters < 1:
            raise ValueError("newton_tol must be positive, newton_max_iters >= 1")


def _validate_domain(params: ModelParams, prod: ProductionFn, cfg: PdeConfig) -> None:
    # x_min is checkable statically; the upper requirement involves the solved
    # threshold at t = 0, so only a necessity check runs here and the
    # extraction-time edge guard catches domains that truncate the threshold.
    lo_needed = np.log(plus_upper_bound(params, prod)) - 2.0
    hi_needed = np.log(terminal_values(params, prod)[1]) + 0.1
    if cfg.x_min >= lo_needed:
        raise ValueError(
            f"x_min={cfg.x_min} too high: needs margin below the investment "
            f"region, x_min < {lo_needed:.4f}"
        )
    if cfg.x_max <= hi_needed:
        raise ValueError(
            f"x_max={cfg.x_max} too low: needs room above the terminal "
            f"disinvestment threshold, x_max > {hi_needed:.4f}"
        )


def solve_penalized(params: ModelParams, prod: ProductionFn, cfg: PdeConfig,
                    variant: str = "penalty") -> ValueGrid:
    """March the penalized equation backward from the terminal slice.

    ``variant="penalty"`` is the reference scheme; ``variant="clamp"``
    replaces the penalty by a hard projection of each implicit-Euler step
    onto the admissible value band (an independent discretization of the same
    double-obstacle structure, shipped as a cross-check).
    """
    if variant not in ("penalty", "clamp"):
        raise ValueError(f"unknown variant {variant!r}")
    _validate_domain(params, prod, cfg)
    dc = derived_constants(params)
    lo, hi = params.stop_payoff_low, params.stop_payoff_high

    x = np.linspace(cfg.x_min, cfg.x_max, cfg.n_x)
    h = x[1] - x[0]
    dt = params.horizon / cfg.n_t
    t_grid = np.linspace(0.0, params.horizon, cfg.n_t + 1)
    source = prod.marginal(np.exp(x[1:-1]))

    # Constant-coefficient interior stencil of  (sigma^2/2) u_xx + hat_mu u_x.
    diff = 0.5 * params.sigma_c**2 / h**2
    drift = dc.hat_mu_c / (2.0 * h)
    c_dn, c_mid, c_up = diff - drift, -2.0 * diff, diff + drift

    values = np.empty((cfg.n_t + 1, cfg.n_x))
    values[-1] = lo
    u = np.full(cfg.n_x, lo)

    inv_eps = 1.0 / cfg.epsilon
    n_int = cfg.n_x - 2
    band = np.zeros((3, n_int))

    for k in range(cfg.n_t - 1, -1, -1):
        u_next = u.copy()
        u = u_next.copy()
        u[0], u[-1] = hi, lo
        if variant == "clamp":
            rhs = u_next[1:-1] / dt + source
            rhs[0] += c_dn * hi
            rhs[-1] += c_up * lo
            band[0, 1:] = -c_up
            band[1, :] = 1.0 / dt + dc.bar_mu - c_mid
            band[2, :-1] = -c_dn
            u[1:-1] = solve_banded((1, 1), band, rhs)
            np.clip(u, lo, hi, out=u)
        else:
            ui = u[1:-1]
            for it in range(cfg.newton_max_iters):
                lap = c_dn * u[:-2] + c_mid * u[1:-1] + c_up * u[2:]
                pen = inv_eps * (np.maximum(lo - ui, 0.0)
                                 - np.maximum(ui - hi, 0.0))
                resid = ((ui - u_next[1:-1]) / dt - lap + dc.bar_mu * ui
                         - source - pen)
                if np.abs(resid).max() <= cfg.newton_tol:
                    break
                active = inv_eps * ((ui < lo) | (ui > hi)).astype(float)
                band[0, 1:] = -c_up
                band[1, :] = 1.0 / dt + dc.bar_mu - c_mid + active
                band[2, :-1] = -c_dn
                delta = solve_banded((1, 1), band, -resid)
                ui += delta
            else:
                raise ConvergenceError(
                    f"penalized Newton did not converge at time step {k}"
                )
        values[k] = u
    return ValueGrid(t_grid=t_grid, x_grid=x, values=values, source="pde")


def extract_boundaries(grid: ValueGrid, params: ModelParams, prod: ProductionFn,
                       level_tol: float = 1e-6) -> BoundaryCurves:
    """Locate the two action thresholds from a penalized-PDE value grid.

    Per time slice: the investment threshold is the largest capacity where
    the value still reaches c_plus/f_c - level_tol, the disinvestment
    threshold the smallest capacity where it has fallen to
    c_minus/f_c + level_tol; both linearly inverse-interpolated between the
    bracketing space nodes.  The terminal row is pinned to the exact terminal
    thresholds.  Raises :class:`ExtractionError` when a crossing hugs the
    domain edge away from the terminal time, which signals a too-small
    domain.
    """
    if grid.source != "pde":
        raise ValueError("extract_boundaries expects a pde-sourced grid")
    x, t, v = grid.x_grid, grid.t_grid, grid.values
    horizon = float(t[-1])
    hi_level = params.stop_payoff_high - level_tol
    lo_level = params.stop_payoff_low + level_tol

    y_plus = np.empty(t.size)
    y_minus = np.empty(t.size)
    yp_T, ym_T = terminal_values(params, prod)
    edge_guard = 2
    for i in range(t.size):
        if i == t.size - 1:
            y_plus[i], y_minus[i] = yp_T, ym_T
            continue
        row = v[i]
        above = np.nonzero(row >= hi_level)[0]
        below = np.nonzero(row <= lo_level)[0]
        if above.size == 0 or below.size == 0:
            raise ExtractionError(
                f"value levels never crossed at t={t[i]:.4f}: domain too small"
            )
        k = int(above[-1])
        if k == x.size - 1:
            raise ExtractionError(
                f"investment region reaches x_max at t={t[i]:.4f}: domain too small"
            )
        frac = (row[k] - hi_level) / (row[k] - row[k + 1])
        y_plus[i] = np.exp(x[k] + frac * (x[k + 1] - x[k]))
        j = int(below[0])
        if j == 0:
            raise ExtractionError(
                f"disinvestment region reaches x_min at t={t[i]:.4f}: domain too small"
            )
        frac = (lo_level - row[j - 1]) / (row[j] - row[j - 1])
        y_minus[i] = np.exp(x[j - 1] + frac * (x[j] - x[j - 1]))
        near_end = horizon - t[i] <= 0.05 * horizon
        if not near_end and (k <= edge_guard or j >= x.size - 1 - edge_guard):
            raise ExtractionError(
                f"threshold pinned at the domain edge at t={t[i]:.4f}: "
                "domain too small"
            )
    return BoundaryCurves(t_grid=t.copy(), y_plus=y_plus, y_minus=y_minus)


def penalty_excess(grid: ValueGrid, params: ModelParams) -> tuple[float, float]:
    """Measured (max overshoot above c_plus/f_c, max undershoot below
    c_minus/f_c) of a penalized solution."""
    over = float(np.maximum(grid.values - params.stop_payoff_high, 0.0).max())
    under = float(np.maximum(params.stop_payoff_low - grid.values, 0.0).max())
    return over, under
