#!/usr/bin/env python3
"""Penalty-strength ladder for the parabolic oracle.

For each penalty parameter, reports how far the solution escapes the value
band and how far the extracted thresholds sit from the integral-equation
solution.
"""

import argparse

import numpy as np

from capband import GridConfig, ModelParams, ProductionFn, interpolate, solve_boundaries
from capband.pde import PdeConfig, extract_boundaries, penalty_excess, solve_penalized


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilons", type=float, nargs="*",
                    default=[1e-2, 1e-3, 1e-4])
    ap.add_argument("--resolution", type=int, default=400)
    args = ap.parse_args()

    params = ModelParams(mu_c=0.2, sigma_c=1.0, mu_f=0.6, f_c=1.0,
                         c_plus=1.0, c_minus=0.8, horizon=1.0)
    prod = ProductionFn(scale=1.0, exponent=0.5)
    curves = solve_boundaries(params, prod, GridConfig(n_steps=200))

    print(f"{'epsilon':>10} {'overshoot':>11} {'undershoot':>11} "
          f"{'gap plus':>10} {'gap minus':>10}")
    for eps in args.epsilons:
        grid = solve_penalized(params, prod, PdeConfig(
            n_x=args.resolution, n_t=args.resolution, epsilon=eps))
        over, under = penalty_excess(grid, params)
        ext = extract_boundaries(grid, params, prod)
        mask = ext.t_grid <= params.horizon - 0.05
        ypv, ymv = interpolate(curves, ext.t_grid[mask])
        gp = np.abs(ext.y_plus[mask] - ypv).max()
        gm = np.abs(ext.y_minus[mask] - ymv).max()
        print(f"{eps:10.0e} {over:11.3e} {under:11.3e} {gp:10.4f} {gm:10.4f}")


if __name__ == "__main__":
    main()
