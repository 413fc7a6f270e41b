#!/usr/bin/env python3
"""Solve the default parameter set and write curves + plot into ./out.

Equivalent to `capband solve --config configs/figure1.toml`, kept as a plain
script for quick interactive tweaking of parameters.
"""

import argparse
import time
from pathlib import Path

from capband import GridConfig, ModelParams, ProductionFn, solve_boundaries
from capband.boundaries import certify_residuals, curves_to_csv
from capband.svg import write_boundaries_svg


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-steps", type=int, default=200)
    ap.add_argument("--out", type=Path, default=Path("out"))
    args = ap.parse_args()

    params = ModelParams(mu_c=0.2, sigma_c=1.0, mu_f=0.6, f_c=1.0,
                         c_plus=1.0, c_minus=0.8, horizon=1.0)
    prod = ProductionFn(scale=1.0, exponent=0.5)
    grid = GridConfig(n_steps=args.n_steps)

    t0 = time.time()
    curves = solve_boundaries(params, prod, grid)
    res_plus, res_minus = certify_residuals(curves, params, prod, grid)
    print(f"solved {args.n_steps} steps in {time.time() - t0:.1f}s: "
          f"y_plus(0)={curves.y_plus[0]:.6f}, y_minus(0)={curves.y_minus[0]:.6f}")
    print(f"max residuals: plus {abs(res_plus).max():.2e}, "
          f"minus {abs(res_minus).max():.2e}")

    args.out.mkdir(parents=True, exist_ok=True)
    curves_to_csv(curves, args.out / "boundaries.csv")
    write_boundaries_svg(curves, args.out / "boundaries.svg")
    print(f"wrote {args.out / 'boundaries.csv'} and boundaries.svg")


if __name__ == "__main__":
    main()
