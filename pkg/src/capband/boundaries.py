"""Backward solver for the two moving action thresholds.

The investment threshold ``y_plus`` and disinvestment threshold ``y_minus``
satisfy a coupled pair of nonlinear integral equations of Volterra type: at
each time the discounted terminal reward plus the expected discounted flow of
marginal profit inside the inaction band plus the expected discounted stopping
payments outside it must equal ``c_plus/f_c`` on the lower curve and
``c_minus/f_c`` on the upper curve.

Discretization: uniform time grid with exact lognormal kernels.  The kernels
have a sqrt(s) layer at small elapsed time (their standardized arguments blow
up like 1/sqrt(s)), which a plain trapezoid cannot resolve, so the leading
cells of every elapsed-time integral are integrated by Gauss-Legendre in
u = sqrt(s) with linearly interpolated thresholds, and the composite
trapezoid covers the smooth remainder.  Each node is solved by Gauss-Seidel
alternation of certified bisections, marching from the terminal condition
``y_plus(T) = 0``, ``y_minus(T) = marginal_inverse(bar_mu * c_minus / f_c)``
down to t = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import BracketError, ConvergenceError
from .model import (
    DerivedConstants,
    ModelParams,
    ProductionFn,
    derived_constants,
    rc_inverse,
)

__all__ = [
    "GridConfig",
    "BoundaryCurves",
    "BoundaryProblem",
    "terminal_values",
    "plus_upper_bound",
    "residual_minus",
    "residual_plus",
    "solve_boundaries",
    "certify_residuals",
    "interpolate",
    "curves_to_csv",
    "curves_from_csv",
    "curves_to_json",
    "curves_from_json",
    "save_curves_json",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GridConfig:
    """Discretization and root-finding controls for the threshold solver."""

    n_steps: int = 200               # uniform time intervals on [0, T]
    root_tol: float = 1e-10          # absolute tolerance on threshold values
    residual_tol: float = 1e-8       # tolerance on integral-equation residuals
    max_outer_iters: int = 40        # Gauss-Seidel sweeps per node
    y_minus_cap_factor: float = 4.0  # initial upper-bracket multiplier for y_minus
    eps_floor: float = 1e-12         # bracket floor for y_plus at the node before T
    head_cells: int = 8              # leading cells integrated in sqrt(s)
    head_nodes: int = 16             # Gauss-Legendre nodes per head cell
    tail_nodes: int = 6              # Gauss-Legendre nodes per later cell

    def __post_init__(self) -> None:
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be at least 2, got {self.n_steps}")
        if not (self.root_tol > 0 and self.residual_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")
        if not self.y_minus_cap_factor > 1:
            raise ValueError(
                f"y_minus_cap_factor must exceed 1, got {self.y_minus_cap_factor}"
            )
        if self.head_cells < 1 or self.head_nodes < 2 or self.tail_nodes < 2:
            raise ValueError(
                "head_cells must be >= 1, head_nodes and tail_nodes >= 2"
            )


@dataclass
class BoundaryCurves:
    """Discretized threshold curves on a uniform time grid.

    Deliberately unvalidated on construction so that diagnostic code can load
    arbitrary (possibly corrupted) curve files; the solver certifies its own
    output and the check routines report violations instead of raising.
    """

    t_grid: np.ndarray
    y_plus: np.ndarray
    y_minus: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.t_grid[-1])

    def interpolate(self, t):
        return interpolate(self, t)


def terminal_values(params: ModelParams, prod: ProductionFn) -> tuple[float, float]:
    """Threshold values at t = T: (0, marginal_inverse(bar_mu*c_minus/f_c))."""
    dc = derived_constants(params)
    return 0.0, rc_inverse(prod, dc.bar_mu * params.c_minus / params.f_c)


def plus_upper_bound(params: ModelParams, prod: ProductionFn) -> float:
    """Strict upper bound for y_plus(t): marginal_inverse(bar_mu*c_plus/f_c)."""
    dc = derived_constants(params)
    return rc_inverse(prod, dc.bar_mu * params.c_plus / params.f_c)


@dataclass(frozen=True)
class QuadTables:
    """Cellwise Gauss-Legendre data for the elapsed-time integrals.

    The kernels have a short-time layer (their standardized arguments scale
    like 1/sqrt(s)), so the first ``head`` cells after s = 0 are integrated in
    the variable u = sqrt(s), where the integrand is smooth; later cells use
    plain Gauss-Legendre in s.  Thresholds at quadrature points are linear
    interpolants of the node values.  ``end[m]`` is the number of quadrature
    points covering the first m cells, so an integral over [0, s_m] uses the
    prefix ``[:end[m]]`` of every array.
    """

    cell_q: np.ndarray    # cell index per quadrature point (flat)
    lam_q: np.ndarray     # interpolation fraction within the cell
    s_q: np.ndarray       # elapsed times of the quadrature points
    w_q: np.ndarray       # quadrature weight including exp(-bar_mu * s)
    end: np.ndarray       # cumulative point count per cell count


def _quad_tables(s_nodes: np.ndarray, head_cells: int, head_nodes: int,
                 tail_nodes: int, bar_mu: float) -> QuadTables:
    n_cells = s_nodes.size - 1
    head = min(head_cells, n_cells)
    cell_l, lam_l, s_l, w_l = [], [], [], []
    counts = np.empty(n_cells, dtype=np.int64)

    if head:
        gl_x, gl_w = np.polynomial.legendre.leggauss(head_nodes)
        u_edges = np.sqrt(s_nodes[: head + 1])
        half = 0.5 * (u_edges[1:] - u_edges[:-1])
        mid = 0.5 * (u_edges[1:] + u_edges[:-1])
        u = (mid[:, None] + half[:, None] * gl_x).ravel()
        s = u * u
        w_l.append((half[:, None] * gl_w).ravel() * 2.0 * u * np.exp(-bar_mu * s))
        cell = np.repeat(np.arange(head), head_nodes)
        cell_l.append(cell)
        s_l.append(s)
        lam_l.append((s - s_nodes[cell]) / (s_nodes[cell + 1] - s_nodes[cell]))
        counts[:head] = head_nodes

    if n_cells > head:
        gl_x, gl_w = np.polynomial.legendre.leggauss(tail_nodes)
        lo = s_nodes[head:-1]
        hi = s_nodes[head + 1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        s = (mid[:, None] + half[:, None] * gl_x).ravel()
        w_l.append((half[:, None] * gl_w).ravel() * np.exp(-bar_mu * s))
        cell = np.repeat(np.arange(head, n_cells), tail_nodes)
        cell_l.append(cell)
        s_l.append(s)
        lam_l.append((s - s_nodes[cell]) / (s_nodes[cell + 1] - s_nodes[cell]))
        counts[head:] = tail_nodes

    return QuadTables(
        cell_q=np.concatenate(cell_l),
        lam_q=np.concatenate(lam_l),
        s_q=np.concatenate(s_l),
        w_q=np.concatenate(w_l),
        end=np.concatenate(([0], np.cumsum(counts))),
    )


@dataclass
class BoundaryProblem:
    """Model, production, and grid data plus cached kernel tables.

    The residual of either integral equation is evaluated thousands of times
    during the backward sweep, so every s-dependent piece of the lognormal
    kernels (standardization factors, discounts, growth multipliers, head
    quadrature weights) is precomputed once; per candidate only one scalar
    log and a handful of Gaussian CDF array calls remain.
    """

    params: ModelParams
    prod: ProductionFn
    grid: GridConfig
    dc: DerivedConstants = field(init=False)
    t_grid: np.ndarray = field(init=False)
    dt: float = field(init=False)
    _disc_terminal: np.ndarray = field(init=False)  # exp(-bar_mu * k * dt)
    _quad: QuadTables = field(init=False)
    _inv: np.ndarray = field(init=False)            # 1 / (sigma_c sqrt(s_q))
    _mu_s: np.ndarray = field(init=False)           # hat_mu_c * s_q
    _shift: np.ndarray = field(init=False)          # p * sigma_c * sqrt(s_q)
    _growth: np.ndarray = field(init=False)         # lognormal moment multiplier

    def __post_init__(self) -> None:
        self.dc = derived_constants(self.params)
        n = self.grid.n_steps
        self.dt = self.params.horizon / n
        self.t_grid = np.linspace(0.0, self.params.horizon, n + 1)
        s_nodes = self.dt * np.arange(n + 1)
        self._disc_terminal = np.exp(-self.dc.bar_mu * s_nodes)
        # Cells are relative offsets, so one table serves every node index.
        self._quad = _quad_tables(s_nodes, self.grid.head_cells,
                                  self.grid.head_nodes, self.grid.tail_nodes,
                                  self.dc.bar_mu)
        p = self.prod.exponent
        sig = self.params.sigma_c
        sq = self._quad.s_q
        self._inv = 1.0 / (sig * np.sqrt(sq))
        self._mu_s = self.dc.hat_mu_c * sq
        self._shift = p * sig * np.sqrt(sq)
        self._growth = np.exp(-p * self._mu_s + 0.5 * p**2 * sig**2 * sq)

    def rhs(self, i: int, y: float, a: np.ndarray, b: np.ndarray) -> float:
        """Right-hand side of the threshold equations at node i, start value y.

        ``a``/``b`` hold the lower/upper thresholds at nodes i..n (length
        m+1, zero allowed); quadrature points inside each cell interpolate
        them linearly.
        """
        m = self.grid.n_steps - i
        par = self.params
        terminal = self._disc_terminal[m] * par.stop_payoff_low
        if m == 0:
            return terminal
        ln_y = math.log(y)
        nq = self._quad.end[m]
        cell = self._quad.cell_q[:nq]
        lam = self._quad.lam_q[:nq]
        a_q = (1.0 - lam) * a[cell] + lam * a[cell + 1]
        b_q = (1.0 - lam) * b[cell] + lam * b[cell + 1]
        inv = self._inv[:nq]
        with np.errstate(divide="ignore"):
            d_a = (np.log(a_q) - ln_y - self._mu_s[:nq]) * inv
            d_b = (np.log(b_q) - ln_y - self._mu_s[:nq]) * inv
        k1 = (self.prod.marginal(y) * self._growth[:nq]
              * (ndtr(d_b + self._shift[:nq]) - ndtr(d_a + self._shift[:nq])))
        k2 = ndtr(d_a)
        k3 = 1.0 - ndtr(d_b)
        f = k1 + (self.dc.bar_mu / par.f_c) * (par.c_plus * k2 + par.c_minus * k3)
        return terminal + float(np.dot(self._quad.w_q[:nq], f))


def _tail_thresholds(curves: BoundaryCurves, i: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.array(curves.y_plus[i:], dtype=float)
    b = np.array(curves.y_minus[i:], dtype=float)
    if np.isnan(a[1:]).any() or np.isnan(b[1:]).any():
        raise RuntimeError(f"threshold values at nodes beyond {i} are not filled yet")
    return a, b


def residual_minus(
    t_index: int,
    y_cand: float,
    curves: BoundaryCurves,
    ctx: BoundaryProblem,
    y_plus_i: float | None = None,
) -> float:
    """Upper-threshold equation residual at node ``t_index``.

    Evaluates the discretized integral equation with y_minus(t_i) replaced by
    ``y_cand`` (both as the start value and as the node-i threshold) and
    y_plus(t_i) taken from ``y_plus_i`` or the stored iterate.
    """
    if y_cand <= 0:
        raise ValueError("y_cand must be positive")
    a, b = _tail_thresholds(curves, t_index)
    if y_plus_i is not None:
        a[0] = y_plus_i
    b[0] = y_cand
    return ctx.rhs(t_index, y_cand, a, b) - ctx.params.stop_payoff_low


def residual_plus(
    t_index: int,
    y_cand: float,
    curves: BoundaryCurves,
    ctx: BoundaryProblem,
    y_minus_i: float | None = None,
) -> float:
    """Lower-threshold equation residual at node ``t_index`` (target c_plus/f_c)."""
    if y_cand <= 0:
        raise ValueError("y_cand must be positive")
    a, b = _tail_thresholds(curves, t_index)
    a[0] = y_cand
    if y_minus_i is not None:
        b[0] = y_minus_i
    return ctx.rhs(t_index, y_cand, a, b) - ctx.params.stop_payoff_high


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------

def _bisect(f, lo: float, hi: float, f_lo: float, f_hi: float, grid: GridConfig,
            node: int, label: str) -> float:
    """Certified bisection: returns x with |f(x)| <= residual_tol."""
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(
            f"no sign change for {label} at node {node} on [{lo}, {hi}]",
            node=node,
        )
    f_mid = math.inf
    mid = lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        # Return the point actually evaluated: the residual certificate must
        # hold at the stored value, not at a nearby untested midpoint.
        if hi - lo <= grid.root_tol and abs(f_mid) <= grid.residual_tol:
            return mid
    if abs(f_mid) <= grid.residual_tol:
        return mid
    raise ConvergenceError(
        f"bisection for {label} at node {node} did not reach residual tolerance"
    )


def _scan_bracket(f, lo: float, hi: float, n_scan: int = 128):
    """Dense residual scan; returns (xs, fs, bracket) with bracket possibly None."""
    xs = np.linspace(lo, hi, n_scan + 1)
    fs = np.array([f(x) for x in xs])
    sign = np.sign(fs)
    for k in range(n_scan):
        if sign[k + 1] == 0:
            return xs, fs, (xs[k + 1], xs[k + 1], 0.0, 0.0)
        if sign[k] != 0 and sign[k] != sign[k + 1]:
            return xs, fs, (xs[k], xs[k + 1], fs[k], fs[k + 1])
    return xs, fs, None


def _solve_node_root(f, lo: float, hi: float, grid: GridConfig, node: int,
                     label: str) -> float:
    f_lo, f_hi = f(lo), f(hi)
    if np.sign(f_lo) != np.sign(f_hi) or f_lo == 0.0 or f_hi == 0.0:
        return _bisect(f, lo, hi, f_lo, f_hi, grid, node, label)
    xs, fs, bracket = _scan_bracket(f, lo, hi)
    if bracket is not None:
        b_lo, b_hi, fb_lo, fb_hi = bracket
        if b_lo == b_hi:
            return b_lo
        return _bisect(f, b_lo, b_hi, fb_lo, fb_hi, grid, node, label)
    # Flat tail: accept an endpoint already inside residual tolerance.
    if abs(f_lo) <= grid.residual_tol:
        return lo
    if abs(f_hi) <= grid.residual_tol:
        return hi
    raise BracketError(
        f"no sign change for {label} at node {node}; residual stays "
        f"{'positive' if f_lo > 0 else 'negative'} on [{lo}, {hi}]",
        node=node,
        scan=(xs, fs),
    )


def _solve_minus_node(f, lo: float, grid: GridConfig, node: int,
                      y_bar_minus: float) -> float:
    cap = grid.y_minus_cap_factor * y_bar_minus
    f_lo = f(lo)
    if f_lo == 0.0:
        return lo
    for _ in range(11):  # cap, 2*cap, ..., 2^10 * cap
        f_cap = f(cap)
        if np.sign(f_lo) != np.sign(f_cap) or f_cap == 0.0:
            return _bisect(f, lo, cap, f_lo, f_cap, grid, node, "y_minus")
        cap *= 2.0
    xs, fs, bracket = _scan_bracket(f, lo, cap / 2.0)
    if bracket is not None:
        b_lo, b_hi, fb_lo, fb_hi = bracket
        if b_lo == b_hi:
            return b_lo
        return _bisect(f, b_lo, b_hi, fb_lo, fb_hi, grid, node, "y_minus")
    if abs(f_lo) <= grid.residual_tol:
        return lo
    raise BracketError(
        f"upper-threshold residual has no sign change at node {node} even "
        f"after cap expansion to {cap / 2.0}",
        node=node,
        scan=(xs, fs),
    )


def solve_boundaries(params: ModelParams, prod: ProductionFn,
                     grid: GridConfig) -> BoundaryCurves:
    """Solve both threshold curves backward from the terminal condition.

    Returns curves with certified residuals: at every interior node both
    discretized integral equations hold to ``grid.residual_tol``.  Raises
    :class:`BracketError` or :class:`ConvergenceError` on failure.
    """
    ctx = BoundaryProblem(params, prod, grid)
    n = grid.n_steps
    yp_T, ym_T = terminal_values(params, prod)
    y_bar_plus = plus_upper_bound(params, prod)

    y_plus = np.full(n + 1, np.nan)
    y_minus = np.full(n + 1, np.nan)
    y_plus[n] = yp_T
    y_minus[n] = ym_T
    low, high = params.stop_payoff_low, params.stop_payoff_high

    for i in range(n - 1, -1, -1):
        a_loc = y_plus[i:].copy()
        b_loc = y_minus[i:].copy()
        yp = max(float(y_plus[i + 1]), grid.eps_floor)
        ym = float(y_minus[i + 1])
        a_loc[0], b_loc[0] = yp, ym

        def f_plus(y):
            a_loc[0] = y
            return ctx.rhs(i, y, a_loc, b_loc) - high

        def f_minus(y):
            b_loc[0] = y
            return ctx.rhs(i, y, a_loc, b_loc) - low

        for _ in range(grid.max_outer_iters):
            yp_new = _solve_node_root(
                f_plus, max(float(y_plus[i + 1]), grid.eps_floor), y_bar_plus,
                grid, i, "y_plus",
            )
            a_loc[0] = yp_new
            ym_new = _solve_minus_node(f_minus, float(y_minus[i + 1]), grid, i, ym_T)
            b_loc[0] = ym_new
            if abs(yp_new - yp) < grid.root_tol and abs(ym_new - ym) < grid.root_tol:
                yp, ym = yp_new, ym_new
                break
            yp, ym = yp_new, ym_new
        else:
            raise ConvergenceError(
                f"Gauss-Seidel did not settle at node {i} within "
                f"{grid.max_outer_iters} sweeps"
            )
        y_plus[i], y_minus[i] = yp, ym

    return BoundaryCurves(t_grid=ctx.t_grid, y_plus=y_plus, y_minus=y_minus)


def certify_residuals(curves: BoundaryCurves, params: ModelParams,
                      prod: ProductionFn, grid: GridConfig):
    """Recompute both residuals at every interior node of solved curves."""
    ctx = BoundaryProblem(params, prod, grid)
    n = grid.n_steps
    res_plus = np.array([
        residual_plus(i, float(curves.y_plus[i]), curves, ctx) for i in range(n)
    ])
    res_minus = np.array([
        residual_minus(i, float(curves.y_minus[i]), curves, ctx) for i in range(n)
    ])
    return res_plus, res_minus


def interpolate(curves: BoundaryCurves, t):
    """Piecewise-linear threshold values at time(s) t in [0, T]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < curves.t_grid[0]) or np.any(t_arr > curves.t_grid[-1]):
        raise ValueError(f"t={t} outside the curve domain [0, {curves.horizon}]")
    yp = np.interp(t_arr, curves.t_grid, curves.y_plus)
    ym = np.interp(t_arr, curves.t_grid, curves.y_minus)
    if t_arr.ndim == 0:
        return float(yp), float(ym)
    return yp, ym


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def curves_to_csv(curves: BoundaryCurves, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,y_plus,y_minus\n")
        for t, yp, ym in zip(curves.t_grid, curves.y_plus, curves.y_minus):
            fh.write(f"{float(t)!r},{float(yp)!r},{float(ym)!r}\n")


def curves_from_csv(path) -> BoundaryCurves:
    data = np.atleast_2d(np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float))
    return BoundaryCurves(
        t_grid=data[:, 0].copy(),
        y_plus=data[:, 1].copy(),
        y_minus=data[:, 2].copy(),
    )


def curves_to_json(curves: BoundaryCurves, params: ModelParams,
                   prod: ProductionFn, grid: GridConfig,
                   residual_norms: dict | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "model": vars(params).copy(),
        "production": vars(prod).copy(),
        "grid": vars(grid).copy(),
        "residual_norms": residual_norms or {},
        "t": curves.t_grid.tolist(),
        "y_plus": curves.y_plus.tolist(),
        "y_minus": curves.y_minus.tolist(),
    }


def curves_from_json(doc: dict) -> BoundaryCurves:
    return BoundaryCurves(
        t_grid=np.asarray(doc["t"], dtype=float),
        y_plus=np.asarray(doc["y_plus"], dtype=float),
        y_minus=np.asarray(doc["y_minus"], dtype=float),
    )


def save_curves_json(curves: BoundaryCurves, params, prod, grid, path,
                     residual_norms=None) -> None:
    with open(path, "w") as fh:
        json.dump(curves_to_json(curves, params, prod, grid, residual_norms),
                  fh, indent=2)
