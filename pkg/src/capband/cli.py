"""Batch front door: config parsing, subcommands, artifact writing.

Subcommands:
  solve    threshold curves -> boundaries.csv / boundaries.json / boundaries.svg
  value    band values + diagnostics -> value_grid.csv / value_diagnostics.json
  verify   Monte Carlo verification -> verify.json (exit 0 iff all checks pass)
  all      the three above in order

Exit codes: 0 pass, 1 verification failure, 2 usage, 3 validation,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from . import boundaries as bnd
from .errors import NumericsError
from .model import ModelParams, ProductionFn, derived_constants
from .pde import PdeConfig, extract_boundaries, solve_penalized
from .simulate import (
    Deviation,
    SimConfig,
    estimate_game_value,
    marginal_value_check,
    reflect_path,
    reflected_path_to_csv,
    saddle_deviation_test,
    sample_path,
    skorokhod_conditions_check,
)
from .svg import write_boundaries_svg
from .value import pde_residual_check, smooth_fit_check, value_at, value_grid, value_grid_to_csv

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4


@dataclass
class VerifyConfig:
    """Optional [verify] block: probe points and pass thresholds."""

    y_probes: list[float] | None = None      # default: three mid-band points
    deviation_scales: list[float] = field(
        default_factory=lambda: [0.8, 0.9, 1.1, 1.2])
    marginal_y: float | None = None
    marginal_bump: float = 0.05
    skorokhod_paths: int = 200
    bias_coeff: float = 0.1                  # game-value allowance: coeff*sqrt(dt)
    quad_coeff: float = 1.0                  # marginal allowance: coeff*bump^2


@dataclass
class RunConfig:
    model: ModelParams
    production: ProductionFn
    grid: bnd.GridConfig
    pde: PdeConfig | None
    sim: SimConfig | None
    verify: VerifyConfig
    output_dir: FsPath


def load_config(path: FsPath) -> RunConfig:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    if "model" not in doc or "production" not in doc:
        raise ValueError("config must contain [model] and [production] tables")
    model = ModelParams(**doc["model"])
    production = ProductionFn(**doc["production"])
    grid = bnd.GridConfig(**doc.get("grid", {}))
    pde = PdeConfig(**doc["pde"]) if "pde" in doc else None
    sim = SimConfig(**doc["sim"]) if "sim" in doc else None
    verify = VerifyConfig(**doc.get("verify", {}))
    return RunConfig(
        model=model, production=production, grid=grid, pde=pde, sim=sim,
        verify=verify, output_dir=FsPath(doc.get("output_dir", "out")),
    )


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(doc: dict, path: FsPath) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **_jsonable(doc)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_or_solve(cfg: RunConfig, curves_path: str | None) -> bnd.BoundaryCurves:
    if curves_path is not None:
        p = FsPath(curves_path)
        if p.suffix == ".json":
            with open(p) as fh:
                return bnd.curves_from_json(json.load(fh))
        return bnd.curves_from_csv(p)
    return bnd.solve_boundaries(cfg.model, cfg.production, cfg.grid)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig) -> int:
    curves = bnd.solve_boundaries(cfg.model, cfg.production, cfg.grid)
    res_plus, res_minus = bnd.certify_residuals(curves, cfg.model,
                                                cfg.production, cfg.grid)
    norms = {
        "max_abs_residual_plus": float(np.abs(res_plus).max()),
        "max_abs_residual_minus": float(np.abs(res_minus).max()),
    }
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    bnd.curves_to_csv(curves, out / "boundaries.csv")
    bnd.save_curves_json(curves, cfg.model, cfg.production, cfg.grid,
                         out / "boundaries.json", residual_norms=norms)
    write_boundaries_svg(curves, out / "boundaries.svg")
    print(f"solved {cfg.grid.n_steps}-step thresholds: "
          f"y_plus(0)={curves.y_plus[0]:.6f}, y_minus(0)={curves.y_minus[0]:.6f}, "
          f"max residuals ({norms['max_abs_residual_plus']:.2e}, "
          f"{norms['max_abs_residual_minus']:.2e})")
    print(f"wrote {out / 'boundaries.csv'}, boundaries.json, boundaries.svg")
    return EXIT_OK


# ---------------------------------------------------------------------------
# value
# ---------------------------------------------------------------------------

def _default_grids(curves: bnd.BoundaryCurves):
    t = curves.t_grid
    stride = max(1, (t.size - 1) // 40)
    t_rows = np.unique(np.concatenate([t[::stride], t[-1:]]))
    y_lo = 0.25 * float(curves.y_plus[0])
    y_hi = 1.5 * float(curves.y_minus[0])
    x_cols = np.linspace(np.log(y_lo), np.log(y_hi), 61)
    return t_rows, x_cols


def cmd_value(cfg: RunConfig, curves_path: str | None, oracle: bool) -> int:
    curves = _load_or_solve(cfg, curves_path)
    params, prod = cfg.model, cfg.production
    value_tol = 10.0 * cfg.grid.residual_tol
    lo, hi = params.stop_payoff_low, params.stop_payoff_high

    t_rows, x_cols = _default_grids(curves)
    grid = value_grid(params, prod, curves, t_rows, x_cols)

    n = curves.t_grid.size - 1
    ident_minus = max(
        abs(value_at(params, prod, curves, float(curves.t_grid[i]),
                     float(curves.y_minus[i])) - lo)
        for i in range(n)
    )
    ident_plus = max(
        abs(value_at(params, prod, curves, float(curves.t_grid[i]),
                     float(curves.y_plus[i])) - hi)
        for i in range(n)
    )
    bound_low = max(float(lo - grid.values.min()), 0.0)
    bound_high = max(float(grid.values.max() - hi), 0.0)
    mono_y = float(np.diff(grid.values, axis=1).max())
    mono_t = float(np.diff(grid.values, axis=0).max())

    smooth = {}
    horizon = params.horizon
    for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
        tt = frac * horizon
        slopes = [smooth_fit_check(params, prod, curves, tt, h)
                  for h in (1e-2, 1e-3, 1e-4)]
        extrap = []
        for side in (0, 1):
            s_mid, s_small = slopes[1][side], slopes[2][side]
            rate = (s_mid - s_small) / (1e-3 - 1e-4)
            extrap.append(s_small - rate * 1e-4)
        smooth[f"t={tt:g}"] = {
            "slopes": [list(s) for s in slopes],
            "extrapolated": extrap,
        }
    smooth_ok = all(max(abs(e) for e in v["extrapolated"]) <= 1e-2
                    for v in smooth.values())

    residual_report = pde_residual_check(grid, params, prod, curves)

    diagnostics = {
        "identity_max_error_minus": ident_minus,
        "identity_max_error_plus": ident_plus,
        "identity_ok": max(ident_minus, ident_plus) <= value_tol,
        "bound_violation_low": bound_low,
        "bound_violation_high": bound_high,
        "bounds_ok": max(bound_low, bound_high) <= value_tol,
        "max_increase_in_y": mono_y,
        "max_increase_in_t": mono_t,
        "smooth_fit": smooth,
        "smooth_fit_ok": smooth_ok,
        "band_generator_residual": {
            "max_band_residual": residual_report.max_band_residual,
            "n_band": residual_report.n_band,
            "min_invest_residual": residual_report.min_invest_residual,
            "max_disinvest_residual": residual_report.max_disinvest_residual,
        },
        "value_tol": value_tol,
    }

    if oracle:
        if cfg.pde is None:
            raise ValueError("--oracle requires a [pde] block in the config")
        pde_grid = solve_penalized(params, prod, cfg.pde)
        extracted = extract_boundaries(pde_grid, params, prod)
        mask = extracted.t_grid <= horizon - 0.05 * horizon
        ypv, ymv = bnd.interpolate(curves, extracted.t_grid[mask])
        gap_plus = float(np.abs(extracted.y_plus[mask] - ypv).max())
        gap_minus = float(np.abs(extracted.y_minus[mask] - ymv).max())
        tg = np.linspace(0.0, 0.9 * horizon, 10)
        yg = np.geomspace(0.5 * curves.y_plus[0], 1.1 * curves.y_minus[0], 24)
        vv = value_grid(params, prod, curves, tg, np.log(yg))
        from scipy.interpolate import RegularGridInterpolator
        itp = RegularGridInterpolator((pde_grid.t_grid, pde_grid.x_grid),
                                      pde_grid.values)
        pts = np.array([[tt, xx] for tt in tg for xx in np.log(yg)])
        gap_value = float(np.abs(
            vv.values - itp(pts).reshape(tg.size, yg.size)).max())
        diagnostics["oracle"] = {
            "epsilon": cfg.pde.epsilon,
            "max_value_gap": gap_value,
            "boundary_gap_plus": gap_plus,
            "boundary_gap_minus": gap_minus,
        }

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    value_grid_to_csv(grid, out / "value_grid.csv")
    _write_json(diagnostics, out / "value_diagnostics.json")
    print(f"value grid {t_rows.size}x{x_cols.size}: identities "
          f"({ident_plus:.1e}, {ident_minus:.1e}), bound violations "
          f"({bound_low:.1e}, {bound_high:.1e})")
    print(f"wrote {out / 'value_grid.csv'}, value_diagnostics.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _guarded(fn):
    """Run one verification component; a crash counts as a failed check."""
    try:
        return fn(), None
    except (ValueError, NumericsError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_verify(cfg: RunConfig, curves_path: str | None,
               dump_paths: bool) -> int:
    if cfg.sim is None:
        raise ValueError("verify requires a [sim] block in the config")
    curves = _load_or_solve(cfg, curves_path)
    params, prod, sim, vc = cfg.model, cfg.production, cfg.sim, cfg.verify
    value_tol = 10.0 * cfg.grid.residual_tol
    lo, hi = params.stop_payoff_low, params.stop_payoff_high

    # Structural + identity checks on the curves themselves (these are what
    # catch a corrupted curves file before the statistical machinery runs).
    yp_T, ym_T = bnd.terminal_values(params, prod)
    structural = {
        "ordering_ok": bool(np.all(curves.y_plus < curves.y_minus)),
        "monotone_ok": bool(np.all(np.diff(curves.y_plus) <= 1e-12)
                            and np.all(np.diff(curves.y_minus) <= 1e-12)),
        "terminal_ok": bool(curves.y_plus[-1] == yp_T
                            and abs(curves.y_minus[-1] - ym_T) <= 1e-9),
    }

    def identity_errors():
        n = curves.t_grid.size - 1
        step = max(1, n // 50)
        e_minus = max(
            abs(value_at(params, prod, curves, float(curves.t_grid[i]),
                         float(curves.y_minus[i])) - lo)
            for i in range(0, n, step))
        e_plus = max(
            abs(value_at(params, prod, curves, float(curves.t_grid[i]),
                         float(curves.y_plus[i])) - hi)
            for i in range(0, n, step))
        return e_plus, e_minus

    idents, ident_err = _guarded(identity_errors)
    identity_doc = {"error": ident_err} if ident_err else {
        "max_error_plus": idents[0], "max_error_minus": idents[1],
    }
    identity_ok = ident_err is None and max(idents) <= value_tol
    identity_doc["ok"] = bool(identity_ok)

    yp0, ym0 = float(curves.y_plus[0]), float(curves.y_minus[0])
    band = max(ym0 - yp0, 0.0)
    probes = vc.y_probes or [yp0 + f * band for f in (0.25, 0.5, 0.75)]
    marginal_y = vc.marginal_y or (yp0 + 0.5 * band)
    allowance = vc.bias_coeff * np.sqrt(sim.dt)

    def run_game():
        rows = []
        for y in probes:
            est = estimate_game_value(params, prod, curves, 0.0, y, sim)
            ref = value_at(params, prod, curves, 0.0, y)
            ok = abs(est.mean - ref) <= 3.0 * est.std_err + allowance
            rows.append({
                "y": y, "estimate": est.mean, "std_err": est.std_err,
                "n": est.n, "reference": ref, "allowance": float(allowance),
                "ok": bool(ok),
            })
        return rows

    game, game_err = _guarded(run_game)
    game_ok = game_err is None and all(g["ok"] for g in game)
    game_doc = game if game_err is None else {"error": game_err, "ok": False}

    def run_saddle():
        deviations = [Deviation(player, s)
                      for player in ("sup", "inf") for s in vc.deviation_scales]
        rep = saddle_deviation_test(params, prod, curves, 0.0, marginal_y,
                                    sim, deviations)
        return [{
            "player": r.deviation.player, "scale": r.deviation.scale,
            "estimate": r.estimate.mean, "std_err": r.estimate.std_err,
            "gap_mean": r.gap_mean, "gap_se": r.gap_se, "ok": bool(r.satisfied),
        } for r in rep.results]

    saddle_doc, saddle_err = _guarded(run_saddle)
    saddle_ok = saddle_err is None and all(r["ok"] for r in saddle_doc)
    if saddle_err is not None:
        saddle_doc = {"error": saddle_err, "ok": False}

    dc = derived_constants(params)
    first_rp = None

    def run_skorokhod():
        nonlocal first_rp
        from .simulate import _stream
        sk_sim = SimConfig(n_paths=1, dt=sim.dt, seed=sim.seed)
        ok, max_viol, n_flat = True, 0.0, 0
        for k in range(vc.skorokhod_paths):
            p = sample_path(params, dc, 0.0, sk_sim, rng=_stream(sim.seed, k))
            rp = reflect_path(p, marginal_y, 0.0, curves)
            rep = skorokhod_conditions_check(rp, curves, 0.0)
            ok = ok and rep.passed
            max_viol = max(max_viol, rep.max_band_violation)
            n_flat += rep.n_flat_violations
            if first_rp is None:
                first_rp = rp
        return {"n_paths": vc.skorokhod_paths, "all_passed": bool(ok),
                "max_band_violation": max_viol, "flat_violations": n_flat,
                "ok": bool(ok)}

    skorokhod_doc, sk_err = _guarded(run_skorokhod)
    sk_ok = sk_err is None and skorokhod_doc["ok"]
    if sk_err is not None:
        skorokhod_doc = {"error": sk_err, "ok": False}

    def run_marginal():
        rep = marginal_value_check(params, prod, curves, marginal_y,
                                   vc.marginal_bump, sim)
        m_allow = vc.quad_coeff * vc.marginal_bump**2 + allowance
        return {
            "y": marginal_y, "bump": vc.marginal_bump,
            "quotient": rep.quotient_mean, "std_err": rep.quotient_se,
            "reference": rep.reference_value, "allowance": float(m_allow),
            "n": rep.n, "ok": bool(rep.within(3.0, extra=m_allow)),
        }

    marginal_doc, marg_err = _guarded(run_marginal)
    marginal_ok = marg_err is None and marginal_doc["ok"]
    if marg_err is not None:
        marginal_doc = {"error": marg_err, "ok": False}

    all_ok = bool(all(structural.values()) and identity_ok and game_ok
                  and saddle_ok and sk_ok and marginal_ok)
    doc = {
        "config": {"seed": sim.seed, "n_paths": sim.n_paths, "dt": sim.dt,
                   "antithetic": sim.antithetic},
        "structural": structural,
        "identity": identity_doc,
        "game_value": game_doc,
        "saddle": saddle_doc,
        "skorokhod": skorokhod_doc,
        "marginal_value": marginal_doc,
        "all_passed": all_ok,
    }
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(doc, out / "verify.json")
    if dump_paths and first_rp is not None:
        reflected_path_to_csv(first_rp, out / "paths.csv")
    print(f"verify: structural={all(structural.values())} "
          f"identity={identity_ok} game={game_ok} saddle={saddle_ok} "
          f"skorokhod={sk_ok} marginal={marginal_ok}")
    print(f"wrote {out / 'verify.json'}")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="capband",
        description="reversible-investment thresholds, band value, verification",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "value", "verify", "all"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--curves", help="existing boundaries.csv/.json")
        p.add_argument("--oracle", action="store_true",
                       help="cross-check values against the penalized PDE")
        p.add_argument("--seed", type=int, help="override [sim] seed")
        p.add_argument("--threads", type=int, help="worker cap for simulation")
        p.add_argument("--dump-paths", action="store_true",
                       help="write one reflected path as paths.csv")
        p.add_argument("--output", help="override output_dir")
    return ap


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    cfg_path = FsPath(args.config)
    if not cfg_path.is_file():
        parser.print_usage(sys.stderr)
        print(f"error: config file not found: {cfg_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(cfg_path)
        if args.output:
            cfg.output_dir = FsPath(args.output)
        if cfg.sim is not None and (args.seed is not None or args.threads):
            kw = {}
            if args.seed is not None:
                kw["seed"] = args.seed
            if args.threads:
                kw["threads"] = args.threads
            from dataclasses import replace
            cfg.sim = replace(cfg.sim, **kw)
    except (ValueError, TypeError, tomllib.TOMLDecodeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "value":
            return cmd_value(cfg, args.curves, args.oracle)
        if args.command == "verify":
            return cmd_verify(cfg, args.curves, args.dump_paths)
        rc = cmd_solve(cfg)
        if rc:
            return rc
        curves_file = str(cfg.output_dir / "boundaries.csv")
        rc = cmd_value(cfg, curves_file, args.oracle)
        if rc:
            return rc
        return cmd_verify(cfg, curves_file, args.dump_paths)
    except (ValueError, TypeError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericsError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
