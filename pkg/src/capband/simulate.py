"""Monte Carlo verification engine.

Simulates the uncontrolled unit capacity exactly (lognormal increments),
computes first hitting times of the two action thresholds, evaluates the
stopping-game payoff and its saddle property under unilateral deviations,
builds the two-sided reflection of the capacity inside the moving band (by
the explicit max/min formula and, independently, by the projection
recursion), and estimates the controlled-profit functional together with its
marginal in the start value.

Reproducibility: paths come from counter-based Philox streams keyed by
(seed, first path index of the chunk), and reductions run in a fixed chunk
order, so results are bit-identical for a given configuration at any thread
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boundaries import BoundaryCurves, interpolate
from .errors import ConsistencyError
from .model import (
    DerivedConstants,
    ModelParams,
    ProductionFn,
    derived_constants,
)
from .value import value_at

__all__ = [
    "SimConfig",
    "Path",
    "GameEstimate",
    "ReflectedPath",
    "Deviation",
    "DeviationResult",
    "SaddleReport",
    "SkorokhodReport",
    "MarginalValueReport",
    "sample_path",
    "hitting_times",
    "game_payoff",
    "estimate_game_value",
    "saddle_deviation_test",
    "reflect_path",
    "skorokhod_conditions_check",
    "estimate_control_value",
    "control_value_report",
    "marginal_value_check",
    "scaled_curves",
    "reflected_path_to_csv",
]


@dataclass(frozen=True)
class SimConfig:
    """Path count, step size, and reproducibility controls."""

    n_paths: int
    dt: float
    seed: int = 0
    antithetic: bool = False
    threads: int = 1
    bridge: bool = False           # Brownian-bridge crossing correction
    chunk_size: int | None = None  # paths per chunk; derived from dt if None

    def __post_init__(self) -> None:
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be positive, got {self.n_paths}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling requires an even n_paths")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    def resolved_chunk(self, n_steps: int) -> int:
        if self.chunk_size is not None:
            return self.chunk_size
        # Keep per-chunk arrays around ~30 MB; even, so antithetic pairs align.
        c = max(128, int(4_000_000 // (n_steps + 1)))
        return c + (c % 2)


@dataclass
class Path:
    """One uncontrolled unit-capacity path; c0[0] = 1."""

    times: np.ndarray
    c0: np.ndarray
    measure: str                 # "p_tilde" (working measure) or "p"


@dataclass(frozen=True)
class GameEstimate:
    mean: float
    std_err: float
    n: int


@dataclass
class ReflectedPath:
    """Reflection of the capacity inside the moving band.

    Arrays hold right limits at the grid times: index 0 already carries any
    initial jump onto the band, so ``capacity[k] = c0[k] * (start_value +
    nu_bar_plus[k] - nu_bar_minus[k])`` lies inside the band at every node.
    """

    base: Path
    start_value: float
    nu_bar_plus: np.ndarray
    nu_bar_minus: np.ndarray
    capacity: np.ndarray


@dataclass(frozen=True)
class Deviation:
    """A unilateral threshold-strategy deviation: the named player stops at
    the hitting time of their boundary scaled by ``scale``."""

    player: str                  # "sup" (disinvestment side) or "inf"
    scale: float

    def __post_init__(self) -> None:
        if self.player not in ("sup", "inf"):
            raise ValueError(f"player must be 'sup' or 'inf', got {self.player}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class DeviationResult:
    deviation: Deviation
    estimate: GameEstimate
    gap_mean: float              # deviation payoff minus saddle payoff (paired)
    gap_se: float
    satisfied: bool              # saddle ordering holds within 3 paired SE


@dataclass
class SaddleReport:
    base: GameEstimate
    results: list[DeviationResult]

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.results)


@dataclass
class SkorokhodReport:
    band_ok: bool
    flat_ok: bool
    max_band_violation: float
    n_flat_violations: int
    n_nodes: int

    @property
    def passed(self) -> bool:
        return self.band_ok and self.flat_ok


@dataclass
class MarginalValueReport:
    quotient_mean: float
    quotient_se: float
    reference_value: float       # band value v(0, y)
    bump: float
    n: int

    def within(self, n_se: float = 3.0, extra: float = 0.0) -> bool:
        half_width = n_se * self.quotient_se + extra
        return abs(self.quotient_mean - self.reference_value) <= half_width


# ---------------------------------------------------------------------------
# Path generation
# ---------------------------------------------------------------------------

def _n_steps(params: ModelParams, t: float, sim: SimConfig) -> int:
    span = params.horizon - t
    m = int(round(span / sim.dt))
    if abs(m * sim.dt - span) > 1e-9 * max(1.0, span):
        raise ValueError(f"dt={sim.dt} does not divide the horizon span {span}")
    return m


def _stream(seed: int, start: int) -> np.random.Generator:
    key = np.array([seed, start], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _log_drift(params: ModelParams, dc: DerivedConstants, measure: str) -> float:
    if measure == "p_tilde":
        return dc.hat_mu_c
    if measure == "p":
        return -params.mu_c - 0.5 * params.sigma_c**2
    raise ValueError(f"unknown measure {measure!r}")


def _c0_block(params: ModelParams, dc: DerivedConstants, dt: float, m: int,
              count: int, rng: np.random.Generator, measure: str,
              antithetic: bool) -> np.ndarray:
    """(count, m+1) exact lognormal paths; antithetic mates are rows i and
    i + count//2."""
    if m == 0:
        return np.ones((count, 1))
    if antithetic:
        z = rng.standard_normal((count // 2, m))
        z = np.concatenate([z, -z], axis=0)
    else:
        z = rng.standard_normal((count, m))
    drift = _log_drift(params, dc, measure)
    increments = drift * dt + params.sigma_c * math.sqrt(dt) * z
    logs = np.cumsum(increments, axis=1)
    out = np.empty((z.shape[0], m + 1))
    out[:, 0] = 1.0
    np.exp(logs, out=out[:, 1:])
    return out


def _jobs(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(start, min(chunk, n - start)) for start in range(0, n, chunk)]


def _map_chunks(fn, jobs, threads: int) -> list:
    if threads <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def sample_path(params: ModelParams, dc: DerivedConstants, t: float,
                sim: SimConfig, rng: np.random.Generator | None = None,
                measure: str = "p_tilde") -> Path:
    """One exact lognormal path of the unit capacity on [0, T - t]."""
    m = _n_steps(params, t, sim)
    if rng is None:
        rng = _stream(sim.seed, 0)
    c0 = _c0_block(params, dc, sim.dt, m, 1, rng, measure, antithetic=False)[0]
    return Path(times=sim.dt * np.arange(m + 1), c0=c0, measure=measure)


# ---------------------------------------------------------------------------
# Hitting times and game payoff
# ---------------------------------------------------------------------------

def _threshold_arrays(curves: BoundaryCurves, t: float, m: int, dt: float):
    s = dt * np.arange(m + 1)
    return interpolate(curves, np.minimum(t + s, curves.horizon))


def _first_true(mask: np.ndarray, default: int) -> np.ndarray:
    idx = mask.argmax(axis=1)
    return np.where(mask.any(axis=1), idx, default)


def _bridge_masks(Y: np.ndarray, a: np.ndarray, b: np.ndarray,
                  sigma_c: float, dt: float,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-step crossing indicators from the Brownian-bridge probability.

    For a step with both endpoints strictly on the inner side of a boundary,
    the bridge crosses the (log-linear) chord with probability
    exp(-2 * ln(b_k/Y_k) * ln(b_{k+1}/Y_{k+1}) / (sigma^2 dt)).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        g_up = np.log(b[None, :] / Y)
        g_dn = np.log(Y / a[None, :])
        p_up = np.exp(-2.0 * g_up[:, :-1] * g_up[:, 1:] / (sigma_c**2 * dt))
        p_dn = np.exp(-2.0 * g_dn[:, :-1] * g_dn[:, 1:] / (sigma_c**2 * dt))
    p_up = np.where(np.isfinite(p_up), p_up, 0.0)
    p_dn = np.where(np.isfinite(p_dn), p_dn, 0.0)
    u = rng.random(p_up.shape)
    return u < p_dn, u < p_up      # lower-boundary mask, upper-boundary mask


def _hit_indices(Y: np.ndarray, a: np.ndarray, b: np.ndarray,
                 bridge: tuple[np.ndarray, np.ndarray] | None = None):
    """First node indices where Y <= a (sigma) and Y >= b (tau); no hit -> m."""
    m = Y.shape[1] - 1
    below = Y <= a[None, :]
    above = Y >= b[None, :]
    if bridge is not None:
        below[:, 1:] |= bridge[0]
        above[:, 1:] |= bridge[1]
    return _first_true(below, m), _first_true(above, m)


def hitting_times(path: Path, curves: BoundaryCurves, t: float,
                  y: float) -> tuple[float, float]:
    """First grid times at which y*c0 leaves the band (else the horizon).

    Returns (sigma_star, tau_star): sigma_star is the first time the process
    reaches the investment threshold from above, tau_star the first time it
    reaches the disinvestment threshold from below.
    """
    m = path.c0.size - 1
    dt = float(path.times[1] - path.times[0]) if m else 0.0
    a, b = _threshold_arrays(curves, t, m, dt)
    Y = y * path.c0[None, :]
    sig_idx, tau_idx = _hit_indices(Y, np.atleast_1d(a), np.atleast_1d(b))
    span = curves.horizon - t
    return (min(float(sig_idx[0]) * dt, span) if m else span,
            min(float(tau_idx[0]) * dt, span) if m else span)


def _discounted_flow(params: ModelParams, dc: DerivedConstants,
                     prod: ProductionFn, Y: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid of exp(-bar_mu s) * marginal(Y(s)) along paths."""
    s = dt * np.arange(Y.shape[1])
    f = np.exp(-dc.bar_mu * s) * prod.marginal(Y)
    out = np.empty_like(f)
    out[:, 0] = 0.0
    np.cumsum(0.5 * dt * (f[:, 1:] + f[:, :-1]), axis=1, out=out[:, 1:])
    return out


def _payoffs(params: ModelParams, dc: DerivedConstants, flow: np.ndarray,
             disc: np.ndarray, sig_idx: np.ndarray,
             tau_idx: np.ndarray) -> np.ndarray:
    """Game payoff per path given hitting indices (grid-time convention)."""
    m = flow.shape[1] - 1
    stop = np.minimum(sig_idx, tau_idx)
    integral = np.take_along_axis(flow, stop[:, None], axis=1)[:, 0]
    hi, lo = params.stop_payoff_high, params.stop_payoff_low
    sigma_first = (sig_idx <= tau_idx) & (sig_idx < m)
    tau_first = tau_idx < sig_idx
    pay = np.where(sigma_first, hi * disc[sig_idx],
                   np.where(tau_first, lo * disc[tau_idx], lo * disc[m]))
    return pay + integral


def game_payoff(path: Path, y: float, t: float, sigma: float, tau: float,
                params: ModelParams, prod: ProductionFn) -> float:
    """Stopping-game payoff along one path for given grid stopping times."""
    m = path.c0.size - 1
    span = params.horizon - t
    dt = float(path.times[1] - path.times[0]) if m else span
    dc = derived_constants(params)
    for name, val in (("sigma", sigma), ("tau", tau)):
        if not 0.0 <= val <= span + 1e-12:
            raise ValueError(f"{name}={val} outside [0, {span}]")
        if m and abs(val / dt - round(val / dt)) > 1e-9:
            raise ValueError(f"{name}={val} is not a grid time (dt={dt})")
    k_sig = int(round(sigma / dt)) if m else 0
    k_tau = int(round(tau / dt)) if m else 0
    Y = y * path.c0[None, :]
    flow = _discounted_flow(params, dc, prod, Y, dt)
    disc = np.exp(-dc.bar_mu * dt * np.arange(m + 1)) if m else np.ones(1)
    pay = _payoffs(params, dc, flow, disc,
                   np.array([k_sig]), np.array([k_tau]))
    return float(pay[0])


class _Acc:
    """Streaming mean / standard-error accumulator over independent units."""

    def __init__(self) -> None:
        self.s = 0.0
        self.s2 = 0.0
        self.n = 0

    def add(self, total: float, total_sq: float, count: int) -> None:
        self.s += total
        self.s2 += total_sq
        self.n += count

    def estimate(self) -> GameEstimate:
        mean = self.s / self.n
        if self.n < 2:
            return GameEstimate(mean=mean, std_err=0.0, n=self.n)
        var = max(self.s2 - self.n * mean * mean, 0.0) / (self.n - 1)
        return GameEstimate(mean=mean, std_err=math.sqrt(var / self.n), n=self.n)


def _pair_units(x: np.ndarray, antithetic: bool) -> np.ndarray:
    """Collapse antithetic mates into single independent units."""
    if not antithetic:
        return x
    half = x.shape[0] // 2
    return 0.5 * (x[:half] + x[half:])


def _unit_stats(x: np.ndarray) -> tuple[float, float, int]:
    return float(x.sum()), float((x * x).sum()), x.size


def estimate_game_value(params: ModelParams, prod: ProductionFn,
                        curves: BoundaryCurves, t: float, y: float,
                        sim: SimConfig) -> GameEstimate:
    """Monte Carlo value of the stopping game under the threshold strategies."""
    if y <= 0:
        raise ValueError("y must be positive")
    dc = derived_constants(params)
    m = _n_steps(params, t, sim)
    a, b = (np.atleast_1d(v) for v in _threshold_arrays(curves, t, m, sim.dt))
    disc = np.exp(-dc.bar_mu * sim.dt * np.arange(m + 1))
    acc = _Acc()

    def run(start: int, count: int):
        rng = _stream(sim.seed, start)
        c0 = _c0_block(params, dc, sim.dt, m, count, rng, "p_tilde",
                       sim.antithetic)
        Y = y * c0
        bridge = (_bridge_masks(Y, a, b, params.sigma_c, sim.dt, rng)
                  if sim.bridge and m else None)
        sig_idx, tau_idx = _hit_indices(Y, a, b, bridge)
        flow = _discounted_flow(params, dc, prod, Y, sim.dt)
        pay = _payoffs(params, dc, flow, disc, sig_idx, tau_idx)
        return _unit_stats(_pair_units(pay, sim.antithetic))

    for stats in _map_chunks(run, _jobs(sim.n_paths, sim.resolved_chunk(m)),
                             sim.threads):
        acc.add(*stats)
    return acc.estimate()


def saddle_deviation_test(params: ModelParams, prod: ProductionFn,
                          curves: BoundaryCurves, t: float, y: float,
                          sim: SimConfig,
                          deviations: list[Deviation]) -> SaddleReport:
    """Check the saddle ordering against unilateral threshold deviations.

    Uses common random numbers: every arm is evaluated on the same paths, and
    the ordering is tested on the paired payoff differences (deviation minus
    saddle) within three standard errors of the difference.
    """
    dc = derived_constants(params)
    m = _n_steps(params, t, sim)
    a, b = (np.atleast_1d(v) for v in _threshold_arrays(curves, t, m, sim.dt))
    disc = np.exp(-dc.bar_mu * sim.dt * np.arange(m + 1))
    base_acc = _Acc()
    arm_accs = [_Acc() for _ in deviations]
    gap_accs = [_Acc() for _ in deviations]

    def run(start: int, count: int):
        rng = _stream(sim.seed, start)
        c0 = _c0_block(params, dc, sim.dt, m, count, rng, "p_tilde",
                       sim.antithetic)
        Y = y * c0
        bridge = (_bridge_masks(Y, a, b, params.sigma_c, sim.dt, rng)
                  if sim.bridge and m else None)
        sig_star, tau_star = _hit_indices(Y, a, b, bridge)
        flow = _discounted_flow(params, dc, prod, Y, sim.dt)
        base = _payoffs(params, dc, flow, disc, sig_star, tau_star)
        out = [_unit_stats(_pair_units(base, sim.antithetic))]
        for dev in deviations:
            if dev.player == "sup":
                _, tau_dev = _hit_indices(Y, a, dev.scale * b, bridge=None)
                pay = _payoffs(params, dc, flow, disc, sig_star, tau_dev)
            else:
                sig_dev, _ = _hit_indices(Y, dev.scale * a, b, bridge=None)
                pay = _payoffs(params, dc, flow, disc, sig_dev, tau_star)
            out.append(_unit_stats(_pair_units(pay, sim.antithetic)))
            out.append(_unit_stats(_pair_units(pay - base, sim.antithetic)))
        return out

    for stats in _map_chunks(run, _jobs(sim.n_paths, sim.resolved_chunk(m)),
                             sim.threads):
        base_acc.add(*stats[0])
        for j in range(len(deviations)):
            arm_accs[j].add(*stats[1 + 2 * j])
            gap_accs[j].add(*stats[2 + 2 * j])

    base = base_acc.estimate()
    results = []
    for dev, arm, gap in zip(deviations, arm_accs, gap_accs):
        g = gap.estimate()
        if dev.player == "sup":
            ok = g.mean <= 3.0 * g.std_err
        else:
            ok = g.mean >= -3.0 * g.std_err
        results.append(DeviationResult(deviation=dev, estimate=arm.estimate(),
                                       gap_mean=g.mean, gap_se=g.std_err,
                                       satisfied=ok))
    return SaddleReport(base=base, results=results)


# ---------------------------------------------------------------------------
# Two-sided reflection
# ---------------------------------------------------------------------------

def _reflect_arrays(y: float, ell: np.ndarray, r: np.ndarray,
                    check_tol: float | None = 1e-10):
    """Cumulative reflection controls for deflated barriers ell <= r.

    The deflated uncontrolled path is the constant ``y``; the projection
    recursion supplies the minimal nondecreasing controls, and the explicit
    running max/min formula is evaluated alongside as an independent
    construction.  Returns (nu_plus, nu_minus), right limits at the nodes.
    """
    n, m1 = ell.shape
    nup = np.empty((n, m1))
    num = np.empty((n, m1))
    up = np.maximum(ell[:, 0] - y, 0.0)
    dn = np.maximum(y - r[:, 0], 0.0)
    nup[:, 0], num[:, 0] = up, dn
    phi = y + up - dn
    for k in range(1, m1):
        under = np.maximum(ell[:, k] - phi, 0.0)
        over = np.maximum(phi - r[:, k], 0.0)
        up = up + under
        dn = dn + over
        nup[:, k], num[:, k] = up, dn
        phi = phi + under - over

    if check_tol is not None:
        # Explicit solution: nu(s+) = -max(A(s), B(s)) with
        # A(s) = (y - r(0))^+ ^ inf_{u<=s} g(u),  g(u) = y - ell(u),
        # B(s) = sup_{q<=s} [ (y - r(q)) ^ inf_{u in [q,s]} g(u) ],
        # evaluated by exact running recursions in min/max algebra.
        g = y - ell
        q = y - r
        A = np.minimum(np.maximum(q[:, 0], 0.0), g[:, 0])
        B = np.minimum(q[:, 0], g[:, 0])
        worst = 0.0
        for k in range(m1):
            if k:
                A = np.minimum(A, g[:, k])
                B = np.minimum(g[:, k], np.maximum(B, q[:, k]))
            net = -np.maximum(A, B)
            worst = max(worst, float(np.abs(net - (nup[:, k] - num[:, k])).max()))
        if worst > check_tol:
            raise ConsistencyError(
                f"explicit and recursive reflections disagree by {worst:.3e}"
            )
    return nup, num


def scaled_curves(curves: BoundaryCurves, scale_plus: float = 1.0,
                  scale_minus: float = 1.0) -> BoundaryCurves:
    """Threshold curves with each boundary multiplied by a constant factor."""
    return BoundaryCurves(
        t_grid=curves.t_grid.copy(),
        y_plus=scale_plus * curves.y_plus,
        y_minus=scale_minus * curves.y_minus,
    )


def reflect_path(path: Path, y: float, t: float,
                 curves: BoundaryCurves) -> ReflectedPath:
    """Reflect one capacity path inside the moving band.

    Computes the controls both by the explicit max/min formula and by the
    projection recursion and raises :class:`ConsistencyError` if they
    disagree beyond 1e-10 at any node.
    """
    if y <= 0:
        raise ValueError("y must be positive")
    m = path.c0.size - 1
    dt = float(path.times[1] - path.times[0]) if m else 0.0
    a, b = _threshold_arrays(curves, t, m, dt)
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    c0 = path.c0[None, :]
    nup, num = _reflect_arrays(y, a / c0, b / c0, check_tol=1e-10)
    capacity = path.c0 * (y + nup[0] - num[0])
    return ReflectedPath(base=path, start_value=y, nu_bar_plus=nup[0],
                         nu_bar_minus=num[0], capacity=capacity)


def skorokhod_conditions_check(rp: ReflectedPath, curves: BoundaryCurves,
                               t: float, band_tol: float = 1e-8,
                               flat_tol: float = 1e-8) -> SkorokhodReport:
    """Verify band containment and the flat-off property of the controls.

    Containment: the controlled capacity stays within [lower threshold -
    band_tol, upper threshold + band_tol] at every node from index 1 on (the
    start value itself may lie outside before the initial jump).  Flat-off:
    the upward control increases only at nodes where the capacity sits on the
    lower threshold (within flat_tol), and symmetrically for the downward
    control.
    """
    m = rp.capacity.size - 1
    dt = float(rp.base.times[1] - rp.base.times[0]) if m else 0.0
    a, b = _threshold_arrays(curves, t, m, dt)
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    cap = rp.capacity
    viol_low = np.maximum(a[1:] - cap[1:], 0.0) if m else np.zeros(0)
    viol_high = np.maximum(cap[1:] - b[1:], 0.0) if m else np.zeros(0)
    max_viol = float(np.concatenate([viol_low, viol_high]).max()) if m else 0.0

    d_up = np.diff(rp.nu_bar_plus, prepend=0.0)
    d_dn = np.diff(rp.nu_bar_minus, prepend=0.0)
    bad_up = (d_up > 0.0) & (cap > a + flat_tol)
    bad_dn = (d_dn > 0.0) & (cap < b - flat_tol)
    n_flat = int(bad_up.sum() + bad_dn.sum())
    return SkorokhodReport(
        band_ok=max_viol <= band_tol,
        flat_ok=n_flat == 0,
        max_band_violation=max_viol,
        n_flat_violations=n_flat,
        n_nodes=m + 1,
    )


# ---------------------------------------------------------------------------
# Controlled-profit functional (under the physical measure)
# ---------------------------------------------------------------------------

def _profit_block(params: ModelParams, prod: ProductionFn, c0: np.ndarray,
                  y: float, thresholds, dt: float) -> np.ndarray:
    """Profit functional per path.

    ``thresholds`` is (a, b) node arrays for the reflected policy or None for
    the no-action policy.  Control increments are charged at their node time
    (left endpoints of the right-continuous jumps), converted to raw
    investment units by c0/f_c.
    """
    m1 = c0.shape[1]
    s = dt * np.arange(m1)
    disc_f = np.exp(-params.mu_f * s)
    if thresholds is None:
        capacity = y * c0
        cost = gain = 0.0
    else:
        a, b = thresholds
        nup, num = _reflect_arrays(y, a / c0, b / c0, check_tol=None)
        capacity = c0 * (y + nup - num)
        d_up = np.diff(nup, prepend=0.0)
        d_dn = np.diff(num, prepend=0.0)
        unit = disc_f * c0 / params.f_c
        cost = params.c_plus * np.sum(unit * d_up, axis=1)
        gain = params.c_minus * np.sum(unit * d_dn, axis=1)
    run = disc_f * prod.profit(capacity)
    running = 0.5 * dt * np.sum(run[:, 1:] + run[:, :-1], axis=1) if m1 > 1 else 0.0
    scrap = disc_f[-1] * params.stop_payoff_low * capacity[:, -1]
    return running + scrap - cost + gain


def estimate_control_value(params: ModelParams, prod: ProductionFn,
                           curves: BoundaryCurves | None, y: float,
                           sim: SimConfig) -> GameEstimate:
    """Monte Carlo mean of the profit functional from t = 0.

    With ``curves`` the policy reflects the capacity inside the band; with
    ``curves=None`` no investment or disinvestment ever occurs.
    """
    if y <= 0:
        raise ValueError("y must be positive")
    dc = derived_constants(params)
    m = _n_steps(params, 0.0, sim)
    thr = None
    if curves is not None:
        a, b = _threshold_arrays(curves, 0.0, m, sim.dt)
        thr = (np.atleast_1d(a), np.atleast_1d(b))
    acc = _Acc()

    def run(start: int, count: int):
        rng = _stream(sim.seed, start)
        c0 = _c0_block(params, dc, sim.dt, m, count, rng, "p", sim.antithetic)
        profits = _profit_block(params, prod, c0, y, thr, sim.dt)
        return _unit_stats(_pair_units(profits, sim.antithetic))

    for stats in _map_chunks(run, _jobs(sim.n_paths, sim.resolved_chunk(m)),
                             sim.threads):
        acc.add(*stats)
    return acc.estimate()


def control_value_report(params: ModelParams, prod: ProductionFn,
                         curves: BoundaryCurves, y: float, sim: SimConfig,
                         alternatives: dict[str, BoundaryCurves | None]):
    """Reflected-policy profit against alternative policies on common paths.

    Returns (base estimate, {name: (estimate, gap estimate)}) where the gap
    is alternative minus base, paired per path.
    """
    dc = derived_constants(params)
    m = _n_steps(params, 0.0, sim)
    a, b = _threshold_arrays(curves, 0.0, m, sim.dt)
    base_thr = (np.atleast_1d(a), np.atleast_1d(b))
    alt_thr = {}
    for name, alt in alternatives.items():
        if alt is None:
            alt_thr[name] = None
        else:
            aa, bb = _threshold_arrays(alt, 0.0, m, sim.dt)
            alt_thr[name] = (np.atleast_1d(aa), np.atleast_1d(bb))
    names = list(alt_thr)
    base_acc = _Acc()
    accs = {n: (_Acc(), _Acc()) for n in names}

    def run(start: int, count: int):
        rng = _stream(sim.seed, start)
        c0 = _c0_block(params, dc, sim.dt, m, count, rng, "p", sim.antithetic)
        base = _profit_block(params, prod, c0, y, base_thr, sim.dt)
        out = [_unit_stats(_pair_units(base, sim.antithetic))]
        for name in names:
            alt = _profit_block(params, prod, c0, y, alt_thr[name], sim.dt)
            out.append(_unit_stats(_pair_units(alt, sim.antithetic)))
            out.append(_unit_stats(_pair_units(alt - base, sim.antithetic)))
        return out

    for stats in _map_chunks(run, _jobs(sim.n_paths, sim.resolved_chunk(m)),
                             sim.threads):
        base_acc.add(*stats[0])
        for j, name in enumerate(names):
            accs[name][0].add(*stats[1 + 2 * j])
            accs[name][1].add(*stats[2 + 2 * j])
    return base_acc.estimate(), {
        name: (accs[name][0].estimate(), accs[name][1].estimate())
        for name in names
    }


def marginal_value_check(params: ModelParams, prod: ProductionFn,
                         curves: BoundaryCurves, y: float, bump: float,
                         sim: SimConfig) -> MarginalValueReport:
    """Central difference of the profit in the start value versus the band value.

    Common random numbers: both bumped starts reuse the same capacity paths,
    each with its own reflection; the quotient is averaged per path, so its
    standard error reflects the paired differences.
    """
    if bump <= 0 or bump >= y:
        raise ValueError("bump must satisfy 0 < bump < y")
    dc = derived_constants(params)
    m = _n_steps(params, 0.0, sim)
    a, b = _threshold_arrays(curves, 0.0, m, sim.dt)
    thr = (np.atleast_1d(a), np.atleast_1d(b))
    acc = _Acc()

    def run(start: int, count: int):
        rng = _stream(sim.seed, start)
        c0 = _c0_block(params, dc, sim.dt, m, count, rng, "p", sim.antithetic)
        j_up = _profit_block(params, prod, c0, y + bump, thr, sim.dt)
        j_dn = _profit_block(params, prod, c0, y - bump, thr, sim.dt)
        quotient = (j_up - j_dn) / (2.0 * bump)
        return _unit_stats(_pair_units(quotient, sim.antithetic))

    for stats in _map_chunks(run, _jobs(sim.n_paths, sim.resolved_chunk(m)),
                             sim.threads):
        acc.add(*stats)
    est = acc.estimate()
    return MarginalValueReport(
        quotient_mean=est.mean,
        quotient_se=est.std_err,
        reference_value=value_at(params, prod, curves, 0.0, y),
        bump=bump,
        n=est.n,
    )


def reflected_path_to_csv(rp: ReflectedPath, path) -> None:
    with open(path, "w") as fh:
        fh.write("s,c0,capacity,nu_plus,nu_minus\n")
        for k in range(rp.capacity.size):
            fh.write(f"{float(rp.base.times[k])!r},{float(rp.base.c0[k])!r},"
                     f"{float(rp.capacity[k])!r},{float(rp.nu_bar_plus[k])!r},"
                     f"{float(rp.nu_bar_minus[k])!r}\n")
