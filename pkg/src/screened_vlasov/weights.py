"""Time-weight functions and the scalar inequalities built from them.

The decay bookkeeping of the solver rests on two families of weights:

* ``gamma``  -- a concave clock ``0.01*log(t+1) + 0.99*t + 1`` comparable to
  ``t + 1``; its negative curvature ``-gamma''`` is the damping budget that
  every comparison-ODE argument draws on.
* ``phi_n``  -- order-dependent Gevrey weights ``exp((n-2)*sqrt(t)/(n+sqrt(t)))``
  (``1`` for orders 0..2), nondecreasing in both the order and time.

The module also certifies two scalar inequalities used downstream: a
logarithm/mean ratio bound and the time-kernel envelope integral that controls
forcing terms in the derivative ladder.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

__all__ = [
    "GammaTriple",
    "gamma_eval",
    "phi_eval",
    "phi_limit",
    "log_inequality_margin",
    "EnvelopeIntegralResult",
    "envelope_integral_margin",
]

#: Coefficients of the clock gamma(t) = LOG_COEFF*log(1+t) + SLOPE*t + 1.
GAMMA_LOG_COEFF = 0.01
GAMMA_SLOPE = 0.99


class GammaTriple(NamedTuple):
    """Value and first two derivatives of the clock at one or more times."""

    value: np.ndarray | float
    slope: np.ndarray | float
    curvature: np.ndarray | float


def gamma_eval(t: np.ndarray | float) -> GammaTriple:
    """Evaluate the clock ``gamma`` and its first two derivatives.

    ``gamma(t) = 0.01*log(1+t) + 0.99*t + 1`` satisfies ``gamma(0) = 1``,
    ``gamma'(0) = 1``, ``0.99*(t+1) < gamma(t) <= t+1`` and
    ``gamma''(t) = -0.01/(1+t)**2 < 0``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("gamma_eval requires t >= 0")
    value = GAMMA_LOG_COEFF * np.log1p(t) + GAMMA_SLOPE * t + 1.0
    slope = GAMMA_LOG_COEFF / (1.0 + t) + GAMMA_SLOPE
    curvature = -GAMMA_LOG_COEFF / (1.0 + t) ** 2
    if value.ndim == 0:
        return GammaTriple(float(value), float(slope), float(curvature))
    return GammaTriple(value, slope, curvature)


def phi_eval(n: int, t: np.ndarray | float) -> np.ndarray | float:
    """Evaluate the order-``n`` Gevrey weight ``phi_n(t)``.

    ``phi_n(t) = exp((n-2)*sqrt(t)/(n + sqrt(t)))`` for ``n >= 2`` and ``1``
    for ``n in {0, 1}``.  Nondecreasing in ``t`` and in ``n``, with
    ``phi_n(0) = 1`` and ``phi_n -> exp(n-2)`` as ``t -> infinity``.
    """
    if n < 0 or n != int(n):
        raise ValueError("phi_eval requires an integer order n >= 0")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("phi_eval requires t >= 0")
    if n < 2:
        out = np.ones_like(t)
    else:
        root = np.sqrt(t)
        out = np.exp((n - 2) * root / (n + root))
    if out.ndim == 0:
        return float(out)
    return out


def phi_limit(n: int) -> float:
    """Large-time limit of ``phi_n``: ``exp(n-2)`` for ``n >= 2``, else 1."""
    if n < 2:
        return 1.0
    return math.exp(n - 2)


def log_inequality_margin(a: np.ndarray | float, b: np.ndarray | float) -> np.ndarray | float:
    """Margin of ``log(a/b) >= 2*(a-b)/(a+b)`` for ``a >= b > 0``.

    Returns ``log(a/b) - 2*(a-b)/(a+b)``, which is nonnegative on the stated
    domain (it vanishes exactly at ``a == b``).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0.0) or np.any(a < b):
        raise ValueError("log_inequality_margin requires a >= b > 0")
    margin = np.log(a / b) - 2.0 * (a - b) / (a + b)
    if margin.ndim == 0:
        return float(margin)
    return margin


class EnvelopeIntegralResult(NamedTuple):
    """Both sides of the time-kernel envelope bound and their margin."""

    lhs: float
    rhs: float
    margin: float


def _envelope_integrand(n: int, t: float) -> tuple[callable, float | None]:
    """Return the min-envelope integrand and its branch-crossover point.

    The integrand is ``min(2*phi_{n-1}(s), phi_{n+1}(s)*(n*(n+1))**2 /
    gamma(s)**2) * (t-s)/gamma(t)``; the crossover is where the two branches
    meet (``None`` if the second branch stays smaller on all of ``[0, t]``).
    """
    gamma_t = float(gamma_eval(t).value)
    scale = (n * (n + 1)) ** 2

    def branch_gap(s: float) -> float:
        gamma_s = float(gamma_eval(s).value)
        return 2.0 * phi_eval(n - 1, s) * gamma_s**2 - scale * phi_eval(n + 1, s)

    crossover: float | None = None
    if t > 0.0 and branch_gap(0.0) < 0.0:
        # The second branch starts below; find where the first takes over.
        hi = min(t, 1.0)
        while branch_gap(hi) < 0.0 and hi < t:
            hi = min(t, 2.0 * hi)
        if branch_gap(hi) >= 0.0:
            crossover = brentq(branch_gap, 0.0, hi, xtol=1e-14, rtol=1e-15)

    def integrand(s: float) -> float:
        gamma_s = float(gamma_eval(s).value)
        first = 2.0 * phi_eval(n - 1, s)
        second = scale * phi_eval(n + 1, s) / gamma_s**2
        return min(first, second) * (t - s) / gamma_t

    return integrand, crossover


def envelope_integral_margin(n: int, t: float, quad_tol: float = 1e-10) -> EnvelopeIntegralResult:
    """Certify the envelope integral bound for the ladder forcing at order ``n``.

    Left side: ``int_0^t min(2*phi_{n-1}(s), phi_{n+1}(s)*(n*(n+1))**2 /
    gamma(s)**2) * (t-s)/gamma(t) ds``.  Right side:
    ``min((50/9)*n**2*phi_n(t), 500*phi_{n-1}(t))``.  The returned margin is
    ``rhs - lhs`` and is guaranteed ``>= -quad_tol*rhs`` by the quadrature
    tolerance; the inequality itself holds with room to spare.
    """
    if n < 1:
        raise ValueError("envelope_integral_margin requires n >= 1")
    if t < 0.0:
        raise ValueError("envelope_integral_margin requires t >= 0")
    rhs = min(50.0 / 9.0 * n**2 * phi_eval(n, t), 500.0 * phi_eval(n - 1, t))
    if t == 0.0:
        return EnvelopeIntegralResult(0.0, rhs, rhs)
    integrand, crossover = _envelope_integrand(n, t)
    points = [crossover] if crossover is not None and 0.0 < crossover < t else None
    lhs, _ = quad(
        integrand,
        0.0,
        t,
        points=points,
        epsabs=quad_tol * max(rhs, 1.0),
        epsrel=quad_tol,
        limit=500,
    )
    return EnvelopeIntegralResult(lhs, rhs, rhs - lhs)
