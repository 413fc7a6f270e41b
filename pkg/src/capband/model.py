"""Market model, power production family, and lognormal transition kernels.

The uncontrolled unit capacity follows a geometric Brownian motion; under the
working measure its log-increments have drift ``hat_mu_c`` and volatility
``sigma_c``.  Every downstream solver (threshold equations, band value
function, penalized PDE, Monte Carlo) consumes the three kernels defined here:

* ``crossing_prob_below``  -- probability the capacity sits below a threshold,
* ``crossing_prob_above``  -- probability it sits above a threshold,
* ``truncated_marginal_expectation`` -- expected marginal profit restricted to
  a capacity window.

All three admit closed forms for the power family ``marginal(y) = a * y**-p``;
a Gauss-Legendre fallback in the standardized normal variable is provided for
general marginal-profit curves and doubles as an independent oracle in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

__all__ = [
    "ModelParams",
    "DerivedConstants",
    "ProductionFn",
    "derived_constants",
    "rc_inverse",
    "crossing_prob_below",
    "crossing_prob_above",
    "truncated_marginal_expectation",
]


@dataclass(frozen=True)
class ModelParams:
    """Market/firm constants.

    All rates are per unit time; ``f_c`` converts one unit of investment into
    ``f_c`` units of capacity.  ``c_plus`` is the unit investment cost,
    ``c_minus`` the unit disinvestment benefit, and ``horizon`` the terminal
    time.
    """

    mu_c: float       # capacity decay rate
    sigma_c: float    # capacity volatility
    mu_f: float       # discount rate
    f_c: float        # capacity per unit investment
    c_plus: float     # unit investment cost
    c_minus: float    # unit disinvestment benefit
    horizon: float    # terminal time

    def __post_init__(self) -> None:
        if not self.sigma_c > 0:
            raise ValueError(f"sigma_c must be positive, got {self.sigma_c}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.mu_f > 0:
            raise ValueError(f"mu_f must be positive, got {self.mu_f}")
        if not self.f_c > 0:
            raise ValueError(f"f_c must be positive, got {self.f_c}")
        if not self.c_minus > 0:
            raise ValueError(f"c_minus must be positive, got {self.c_minus}")
        if not self.c_plus > self.c_minus:
            raise ValueError(
                f"c_plus must exceed c_minus, got c_plus={self.c_plus}, "
                f"c_minus={self.c_minus}"
            )

    @property
    def stop_payoff_low(self) -> float:
        """Reward level c_minus / f_c attained in the disinvestment region."""
        return self.c_minus / self.f_c

    @property
    def stop_payoff_high(self) -> float:
        """Cost level c_plus / f_c attained in the investment region."""
        return self.c_plus / self.f_c


@dataclass(frozen=True)
class DerivedConstants:
    """Constants derived from :class:`ModelParams`.

    ``bar_mu = mu_f + mu_c`` is the combined discount applied to stopping
    payoffs; ``hat_mu_c = -mu_c + sigma_c**2 / 2`` is the log-drift of the
    unit capacity under the working measure.
    """

    bar_mu: float
    hat_mu_c: float


def derived_constants(params: ModelParams) -> DerivedConstants:
    return DerivedConstants(
        bar_mu=params.mu_f + params.mu_c,
        hat_mu_c=-params.mu_c + 0.5 * params.sigma_c**2,
    )


@dataclass(frozen=True)
class ProductionFn:
    """Power marginal-profit family ``marginal(y) = scale * y**-exponent``.

    The running profit is the antiderivative
    ``profit(y) = scale * y**(1 - exponent) / (1 - exponent)``, which is
    strictly concave with infinite marginal profit at zero capacity and
    vanishing marginal profit at infinity.
    """

    scale: float      # multiplier a > 0
    exponent: float   # p in (0, 1)

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not 0.0 < self.exponent < 1.0:
            raise ValueError(f"exponent must lie in (0, 1), got {self.exponent}")

    def profit(self, y):
        """Running profit; profit(0) = 0 (nan outside the domain y >= 0)."""
        y = np.asarray(y, dtype=float)
        q = 1.0 - self.exponent
        with np.errstate(invalid="ignore"):
            out = self.scale * np.power(y, q) / q
        return out if out.ndim else float(out)

    def marginal(self, y):
        """Marginal profit, strictly decreasing, infinite at 0."""
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.scale * np.power(y, -self.exponent)
        return out if out.ndim else float(out)

    def curvature(self, y):
        """Second derivative of the profit, strictly negative."""
        y = np.asarray(y, dtype=float)
        out = -self.scale * self.exponent * np.power(y, -self.exponent - 1.0)
        return out if out.ndim else float(out)

    def marginal_inverse(self, z):
        """Inverse of the marginal profit: y with marginal(y) = z."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("marginal_inverse requires a positive level z")
        # (scale/z)**(1/p) rather than (z/scale)**(-1/p): same value, exact
        # in floating point whenever scale/z and the power are representable.
        out = np.power(self.scale / z, 1.0 / self.exponent)
        return out if out.ndim else float(out)


def rc_inverse(prod: ProductionFn, z) -> float:
    """Capacity level at which the marginal profit equals ``z`` (z > 0)."""
    return prod.marginal_inverse(z)


# ---------------------------------------------------------------------------
# Lognormal kernels
# ---------------------------------------------------------------------------

def _validate_elapsed(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("elapsed time s must be nonnegative")
    return s


def _norm_arg(dc: DerivedConstants, params: ModelParams, y, s, x) -> np.ndarray:
    """Standardized threshold (ln(x/y) - hat_mu_c*s) / (sigma_c*sqrt(s)).

    Saturates to +/-inf at s = 0 (deterministic start) and at x in {0, inf};
    the 0/0 case x == y at s == 0 resolves to 0, i.e. the half-weight limit
    of the Gaussian CDF when the start point sits exactly on the threshold.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.log(x / y) - dc.hat_mu_c * s) / (params.sigma_c * np.sqrt(s))
    return np.where(np.isnan(out), 0.0, out)


def crossing_prob_below(dc: DerivedConstants, params: ModelParams, y, s, a):
    """P(y * C0(s) < a) for the uncontrolled capacity started at y > 0.

    At s = 0 this is the indicator of {y < a} (one half on the threshold);
    a = 0 gives 0 and a = +inf gives 1.
    """
    s = _validate_elapsed(s)
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(y <= 0):
        raise ValueError("start value y must be positive")
    if np.any(a < 0):
        raise ValueError("threshold a must be nonnegative")
    out = ndtr(_norm_arg(dc, params, y, s, a))
    return out if out.ndim else float(out)


def crossing_prob_above(dc: DerivedConstants, params: ModelParams, y, s, b):
    """P(y * C0(s) > b); b = +inf is a valid sentinel giving 0."""
    s = _validate_elapsed(s)
    y = np.asarray(y, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(y <= 0):
        raise ValueError("start value y must be positive")
    if np.any(b <= 0):
        raise ValueError("threshold b must be positive (or +inf)")
    out = 1.0 - ndtr(_norm_arg(dc, params, y, s, b))
    return out if out.ndim else float(out)


def truncated_marginal_expectation(
    dc: DerivedConstants,
    params: ModelParams,
    prod: ProductionFn,
    y,
    s,
    a,
    b,
    method: str = "closed",
    quad_nodes: int = 64,
):
    """E[ marginal(y * C0(s)) * 1{a < y * C0(s) < b} ].

    ``method="closed"`` uses the lognormal moment formula for the power
    family; ``method="quadrature"`` evaluates the same window integral by
    Gauss-Legendre in the standardized normal variable and works for any
    marginal-profit callable (here ``prod.marginal``).  At s = 0 both reduce
    to the deterministic limit marginal(y) * 1{a < y < b}.
    """
    s = _validate_elapsed(s)
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(y <= 0):
        raise ValueError("start value y must be positive")
    if np.any(a < 0):
        raise ValueError("lower threshold a must be nonnegative")
    if np.any(a >= b):
        raise ValueError("window requires a < b")
    if method == "closed":
        p = prod.exponent
        d_a = _norm_arg(dc, params, y, s, a)
        d_b = _norm_arg(dc, params, y, s, b)
        shift = p * params.sigma_c * np.sqrt(s)
        factor = prod.marginal(y) * np.exp(
            -p * dc.hat_mu_c * s + 0.5 * p**2 * params.sigma_c**2 * s
        )
        out = factor * (ndtr(d_b + shift) - ndtr(d_a + shift))
        return out if out.ndim else float(out)
    if method == "quadrature":
        return _truncated_expectation_quad(
            dc, params, prod.marginal, y, s, a, b, quad_nodes
        )
    raise ValueError(f"unknown method {method!r}")


def _truncated_expectation_quad(
    dc: DerivedConstants,
    params: ModelParams,
    marginal,
    y,
    s,
    a,
    b,
    n_nodes: int = 64,
    z_max: float = 10.0,
):
    """Gauss-Legendre window integral for an arbitrary marginal callable.

    Integrates marginal(y * exp(hat_mu_c*s + sigma_c*sqrt(s)*z)) * phi(z) over
    z in [d(a), d(b)], with the limits clipped to +/- z_max (the discarded
    Gaussian tail mass is below 1e-15 for z_max = 10).
    """
    y, s, a, b = np.broadcast_arrays(
        np.asarray(y, float), np.asarray(s, float),
        np.asarray(a, float), np.asarray(b, float),
    )
    scalar = y.ndim == 0
    y, s, a, b = np.atleast_1d(y, s, a, b)
    out = np.empty_like(y)

    zero = s == 0.0
    if np.any(zero):
        lo = ndtr(_norm_arg(dc, params, y[zero], 0.0, a[zero]))
        hi = ndtr(_norm_arg(dc, params, y[zero], 0.0, b[zero]))
        out[zero] = marginal(y[zero]) * (hi - lo)

    pos = ~zero
    if np.any(pos):
        nodes, weights = leggauss(n_nodes)
        d_lo = np.clip(_norm_arg(dc, params, y[pos], s[pos], a[pos]), -z_max, z_max)
        d_hi = np.clip(_norm_arg(dc, params, y[pos], s[pos], b[pos]), -z_max, z_max)
        half = 0.5 * (d_hi - d_lo)
        mid = 0.5 * (d_hi + d_lo)
        z = mid[..., None] + half[..., None] * nodes            # (..., n_nodes)
        vals = marginal(
            y[pos, None] * np.exp(dc.hat_mu_c * s[pos, None]
                                  + params.sigma_c * np.sqrt(s[pos, None]) * z)
        )
        phi = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
        out[pos] = half * np.sum(weights * vals * phi, axis=-1)

    return float(out[0]) if scalar else out
