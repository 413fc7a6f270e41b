"""Band value function and its diagnostics.

Once the two threshold curves are known, the value of the stopping game (the
marginal value of capacity) has an explicit representation: discounted
terminal reward, plus the expected discounted marginal-profit flow while the
uncontrolled capacity stays inside the band, plus the expected discounted
stopping payments once it leaves.  This module evaluates that representation
on the curves' own time grid and provides the structural checks used for
acceptance: boundary identities, global bounds, monotonicity, smooth fit, and
a finite-difference residual check of the parabolic equation inside the band.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .boundaries import BoundaryCurves, _quad_tables, interpolate
from .model import (
    ModelParams,
    ProductionFn,
    crossing_prob_above,
    crossing_prob_below,
    derived_constants,
    truncated_marginal_expectation,
)

__all__ = [
    "ValueGrid",
    "value_at",
    "value_grid",
    "smooth_fit_check",
    "pde_residual_check",
    "PdeResidualReport",
    "value_grid_to_csv",
    "value_grid_to_json",
]

SCHEMA_VERSION = 1


@dataclass
class ValueGrid:
    """Value samples on a (time x log-capacity) lattice."""

    t_grid: np.ndarray
    x_grid: np.ndarray            # log capacity
    values: np.ndarray            # shape (len(t_grid), len(x_grid))
    source: str                   # "volterra" | "pde"

    @property
    def y_grid(self) -> np.ndarray:
        return np.exp(self.x_grid)


def _integration_nodes(curves: BoundaryCurves, t: float):
    """Elapsed-time nodes {0} U {t_j - t : t_j > t} and thresholds there."""
    future = curves.t_grid[curves.t_grid > t]
    s = np.concatenate(([0.0], future - t))
    yp0, ym0 = interpolate(curves, t)
    a = np.concatenate(([yp0], curves.y_plus[curves.t_grid > t]))
    b = np.concatenate(([ym0], curves.y_minus[curves.t_grid > t]))
    return s, a, b


def _values_at_time(params: ModelParams, prod: ProductionFn,
                    curves: BoundaryCurves, t: float, y: np.ndarray,
                    head_cells: int = 8, head_nodes: int = 16,
                    tail_nodes: int = 6) -> np.ndarray:
    """Representation-formula values at one time for a vector of capacities.

    Same quadrature as the threshold solver: cellwise Gauss-Legendre with the
    sqrt(s) substitution over the leading cells (resolving the kernels'
    short-time layer and keeping v continuous in y across the thresholds) and
    linearly interpolated thresholds at the quadrature points.
    """
    dc = derived_constants(params)
    horizon = curves.horizon
    s, a, b = _integration_nodes(curves, t)
    terminal = np.exp(-dc.bar_mu * (horizon - t)) * params.stop_payoff_low
    if s.size == 1:
        return np.full(y.size, terminal)
    yc = y[:, None]

    quad = _quad_tables(s, head_cells, head_nodes, tail_nodes, dc.bar_mu)
    a_q = (1.0 - quad.lam_q) * a[quad.cell_q] + quad.lam_q * a[quad.cell_q + 1]
    b_q = (1.0 - quad.lam_q) * b[quad.cell_q] + quad.lam_q * b[quad.cell_q + 1]
    k1 = truncated_marginal_expectation(dc, params, prod, yc, quad.s_q, a_q, b_q)
    k2 = crossing_prob_below(dc, params, yc, quad.s_q, a_q)
    k3 = crossing_prob_above(dc, params, yc, quad.s_q, b_q)
    f = k1 + (dc.bar_mu / params.f_c) * (params.c_plus * k2 + params.c_minus * k3)
    return terminal + f @ quad.w_q


def value_at(params: ModelParams, prod: ProductionFn, curves: BoundaryCurves,
             t: float, y: float) -> float:
    """Game value v(t, y) from the threshold representation.

    Trapezoid quadrature on the curves' time grid restricted to [t, T], with
    linearly interpolated thresholds at the off-node left endpoint.
    """
    if not 0.0 <= t <= curves.horizon:
        raise ValueError(f"t={t} outside [0, {curves.horizon}]")
    if y <= 0:
        raise ValueError(f"capacity y must be positive, got {y}")
    return float(_values_at_time(params, prod, curves, t, np.array([y]))[0])


def value_grid(params: ModelParams, prod: ProductionFn, curves: BoundaryCurves,
               t_grid, x_grid) -> ValueGrid:
    """Matrix of representation values; source tag ``volterra``."""
    t_grid = np.asarray(t_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0) or np.any(np.diff(x_grid) <= 0):
        raise ValueError("t_grid and x_grid must be strictly increasing")
    if not np.all(np.isfinite(x_grid)):
        raise ValueError("x_grid must be finite")
    y = np.exp(x_grid)
    vals = np.empty((t_grid.size, x_grid.size))
    for i, t in enumerate(t_grid):
        vals[i] = _values_at_time(params, prod, curves, float(t), y)
    return ValueGrid(t_grid=t_grid, x_grid=x_grid, values=vals, source="volterra")


def smooth_fit_check(params: ModelParams, prod: ProductionFn,
                     curves: BoundaryCurves, t: float, h: float):
    """One-sided difference quotients of v across each threshold.

    Returns (slope at the investment threshold from inside the band, slope at
    the disinvestment threshold from inside the band); both tend to 0 as
    h -> 0 when the value function pastes smoothly.
    """
    if not 0.0 <= t < curves.horizon:
        raise ValueError(f"t={t} must lie in [0, T)")
    yp, ym = interpolate(curves, t)
    if h >= (ym - yp) / 4.0:
        raise ValueError(
            f"bump h={h} too large relative to the band width {ym - yp}"
        )
    slope_plus = (value_at(params, prod, curves, t, yp + h)
                  - value_at(params, prod, curves, t, yp)) / h
    slope_minus = (value_at(params, prod, curves, t, ym)
                   - value_at(params, prod, curves, t, ym - h)) / h
    return slope_plus, slope_minus


@dataclass
class PdeResidualReport:
    """Finite-difference residuals of the band equation and the two
    inequality directions outside it."""

    max_band_residual: float      # max |v_t + Lv - bar_mu v + marginal| in band
    n_band: int
    min_invest_residual: float    # same expression in the investment region (>= 0)
    n_invest: int
    max_disinvest_residual: float  # same expression in the disinvestment region (<= 0)
    n_disinvest: int


def pde_residual_check(grid: ValueGrid, params: ModelParams, prod: ProductionFn,
                       curves: BoundaryCurves,
                       standoff: float = 0.0) -> PdeResidualReport:
    """Check the parabolic equation satisfied by v, region by region.

    Inside the band the generator identity holds with the marginal profit as
    source; below the lower threshold the expression is nonnegative and above
    the upper threshold nonpositive.  Uses second-order central differences in
    log-capacity and time on interior nodes whose full stencil stays in one
    region (terminal row excluded).  ``standoff`` adds a fixed log-space
    margin to the stencil-width margin around each threshold, which keeps the
    checked nodes away from the value function's curvature spike when grids
    are refined.
    """
    t, x, v = grid.t_grid, grid.x_grid, grid.values
    if t.size < 3 or x.size < 3:
        raise ValueError("grid too coarse for finite differences (need >= 3 nodes)")
    dc = derived_constants(params)
    hx = np.diff(x)
    if not np.allclose(hx, hx[0], rtol=1e-8):
        raise ValueError("x_grid must be uniform")
    hx = float(hx[0])

    v_t = np.gradient(v, t, axis=0)
    v_x = (v[:, 2:] - v[:, :-2]) / (2.0 * hx)
    v_xx = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / hx**2
    y_in = np.exp(x[1:-1])
    resid = (v_t[:, 1:-1]
             + 0.5 * params.sigma_c**2 * v_xx
             + dc.hat_mu_c * v_x
             - dc.bar_mu * v[:, 1:-1]
             + prod.marginal(y_in))

    # Region masks with a stencil-wide margin so differences never straddle a
    # threshold kink; terminal row and first/last rows excluded (v_t stencil).
    yp_t, ym_t = interpolate(curves, t)
    yp_max = np.maximum.reduce([yp_t[:-2], yp_t[1:-1], yp_t[2:]])
    yp_min = np.minimum.reduce([yp_t[:-2], yp_t[1:-1], yp_t[2:]])
    ym_max = np.maximum.reduce([ym_t[:-2], ym_t[1:-1], ym_t[2:]])
    ym_min = np.minimum.reduce([ym_t[:-2], ym_t[1:-1], ym_t[2:]])
    pad = np.exp(2.0 * hx + standoff)
    rows = slice(1, t.size - 1)
    band = (y_in[None, :] > yp_max[:, None] * pad) & (y_in[None, :] < ym_min[:, None] / pad)
    invest = y_in[None, :] < yp_min[:, None] / pad
    disinvest = y_in[None, :] > ym_max[:, None] * pad

    r = resid[rows]
    band_vals = r[band]
    invest_vals = r[invest]
    disinvest_vals = r[disinvest]
    return PdeResidualReport(
        max_band_residual=float(np.abs(band_vals).max()) if band_vals.size else 0.0,
        n_band=int(band_vals.size),
        min_invest_residual=float(invest_vals.min()) if invest_vals.size else 0.0,
        n_invest=int(invest_vals.size),
        max_disinvest_residual=float(disinvest_vals.max()) if disinvest_vals.size else 0.0,
        n_disinvest=int(disinvest_vals.size),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def value_grid_to_csv(grid: ValueGrid, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,y,v,source\n")
        for i, t in enumerate(grid.t_grid):
            for j, x in enumerate(grid.x_grid):
                fh.write(f"{float(t)!r},{float(x)!r},{float(np.exp(x))!r},"
                         f"{float(grid.values[i, j])!r},{grid.source}\n")


def value_grid_to_json(grid: ValueGrid) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "source": grid.source,
        "t": grid.t_grid.tolist(),
        "x": grid.x_grid.tolist(),
        "values": grid.values.flatten().tolist(),   # row-major, t rows
    }


def save_value_grid_json(grid: ValueGrid, path) -> None:
    with open(path, "w") as fh:
        json.dump(value_grid_to_json(grid), fh, indent=2)
