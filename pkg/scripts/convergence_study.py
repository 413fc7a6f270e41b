#!/usr/bin/env python3
"""Grid-refinement study for the threshold solver.

Prints the max-norm change between consecutive grid doublings, globally and
away from the terminal layer of the upper threshold, plus the t = 0 values.
The global column is dominated by the infinite-slope terminal layer of
y_minus and shrinks only like sqrt(dt); the windowed column shows the
first-order-or-better interior convergence.
"""

import argparse
import time

import numpy as np

from capband import GridConfig, ModelParams, ProductionFn, solve_boundaries


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, nargs="*",
                    default=[50, 100, 200, 400])
    args = ap.parse_args()

    params = ModelParams(mu_c=0.2, sigma_c=1.0, mu_f=0.6, f_c=1.0,
                         c_plus=1.0, c_minus=0.8, horizon=1.0)
    prod = ProductionFn(scale=1.0, exponent=0.5)

    solved = {}
    for n in args.levels:
        t0 = time.time()
        solved[n] = solve_boundaries(params, prod, GridConfig(n_steps=n))
        c = solved[n]
        print(f"n={n:5d}  {time.time() - t0:6.1f}s  "
              f"y_plus(0)={c.y_plus[0]:.8f}  y_minus(0)={c.y_minus[0]:.8f}")

    print(f"\n{'pair':>12} {'global':>12} {'t<=T-0.05':>12}")
    for a, b in zip(args.levels, args.levels[1:]):
        ca, cb = solved[a], solved[b]
        stride = (cb.t_grid.size - 1) // (ca.t_grid.size - 1)
        dp = np.abs(ca.y_plus - cb.y_plus[::stride])
        dm = np.abs(ca.y_minus - cb.y_minus[::stride])
        mask = ca.t_grid <= params.horizon - 0.05
        full = max(dp.max(), dm.max())
        away = max(dp[mask].max(), dm[mask].max())
        print(f"{a:5d}->{b:5d} {full:12.3e} {away:12.3e}")


if __name__ == "__main__":
    main()
