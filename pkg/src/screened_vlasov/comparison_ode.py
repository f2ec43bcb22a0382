"""Linear comparison engine for y'' = h(s)·y (+ forcing) under the damping bound.

Admissible coefficients satisfy |h(s)| ≤ -γ''(s)/γ(s), where γ is the clock
weight.  Everything the bounds need comes from one augmented initial-value
integration of

    y1'' = h·y1,  y1(0) = y1'(0) = 1,
    G'   = 1/y1²,  P' = y1·F,  R' = y1·F·G,

because the decaying profile and the forced solution have the closed
representations

    y2(s) = y1(s)·(G(t) - G(s)),
    y(s)  = -y2(s)·P(s) - y1(s)·[G(t)·(P(t) - P(s)) - (R(t) - R(s))],

which satisfy their boundary conditions identically.  The Green kernel is
K(s,τ) = y1(min)·y2(max), and the certified bound compares it against
min{γ(s)(t-τ), γ(τ)(t-s)}/γ(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import PchipInterpolator

from .weights import gamma_eval

SOLVER_TOLERANCE = 1.0e-12
_CERTIFICATE_SAMPLES = 2001
_EDGE_OFFSET = 1.0e-6  # for ratios of the form |y(s)|/(t-s) near s = t


def damping_ceiling(s):
    """-γ''(s)/γ(s), the largest coefficient magnitude the comparison allows."""
    triple = gamma_eval(s)
    return -triple.curvature / triple.value


@dataclass(frozen=True, eq=False)
class CoefficientPath:
    """A coefficient s ↦ h(s) on [0, horizon] with its admissibility certificate."""

    horizon: float
    rule: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    label: str
    certified: bool
    sup_ratio: float

    def __call__(self, s):
        return self.rule(np.asarray(s, dtype=float))

    @staticmethod
    def _certify(rule, horizon: float) -> tuple[bool, float]:
        s = np.linspace(0.0, horizon, _CERTIFICATE_SAMPLES)
        ratio = np.abs(np.asarray(rule(s), dtype=float)) / damping_ceiling(s)
        sup_ratio = float(ratio.max())
        return sup_ratio <= 1.0 + 1e-9, sup_ratio

    @classmethod
    def from_callable(cls, rule, horizon: float, label: str = "custom") -> "CoefficientPath":
        if not horizon > 0.0:
            raise ValueError("horizon must be positive")
        certified, sup_ratio = cls._certify(rule, horizon)
        return cls(horizon, rule, label, certified, sup_ratio)

    @classmethod
    def zero(cls, horizon: float) -> "CoefficientPath":
        return cls.from_callable(lambda s: np.zeros_like(np.asarray(s, dtype=float)), horizon, "zero")

    @classmethod
    def damping_extreme(cls, horizon: float, sign: int = 1) -> "CoefficientPath":
        """The extreme admissible coefficient h = ±(-γ''/γ)."""
        if sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        label = "damping-ceiling" if sign == 1 else "damping-floor"
        return cls.from_callable(lambda s: sign * damping_ceiling(s), horizon, label)

    @classmethod
    def random_admissible(
        cls, horizon: float, rng: np.random.Generator, knots: int = 9
    ) -> "CoefficientPath":
        """h = θ(s)·(-γ''/γ) with θ a shape-preserving path through [-1, 1]."""
        nodes = np.linspace(0.0, horizon, knots)
        theta = PchipInterpolator(nodes, rng.uniform(-1.0, 1.0, size=knots))
        return cls.from_callable(lambda s: theta(s) * damping_ceiling(s), horizon, "random")


def random_bounded_forcing(
    horizon: float, rng: np.random.Generator, knots: int = 9
) -> Callable[[np.ndarray], np.ndarray]:
    """A smooth bounded forcing path for property tests."""
    nodes = np.linspace(0.0, horizon, knots)
    amplitude = rng.uniform(0.5, 2.0)
    path = PchipInterpolator(nodes, rng.uniform(-1.0, 1.0, size=knots))
    return lambda s: amplitude * path(np.asarray(s, dtype=float))


@dataclass(frozen=True, eq=False)
class LinearBvpSolution:
    """One solved profile: nodes, values, derivative, and boundary residuals."""

    kind: str
    horizon: float
    s_nodes: np.ndarray
    y: np.ndarray
    y_prime: np.ndarray
    boundary_residuals: tuple[float, float]
    dense: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] = field(repr=False)

    def evaluate(self, s):
        """(y, y') at arbitrary s in [0, horizon] from the dense output."""
        return self.dense(np.asarray(s, dtype=float))


class _AugmentedSolve:
    """Dense solution of the augmented system for one coefficient path."""

    def __init__(self, path: CoefficientPath, t: float, forcing=None):
        if not path.certified:
            raise ValueError(
                f"coefficient path is not admissible (sup ratio {path.sup_ratio:.3e} > 1)"
            )
        if not 0.0 < t <= path.horizon:
            raise ValueError("terminal time outside the coefficient path's span")
        self.t = t
        self.forcing = forcing

        def rhs(s, state):
            y1, y1p, _, _, _ = state
            drive = float(forcing(s)) if forcing is not None else 0.0
            flow = y1 * drive
            return (y1p, float(path(s)) * y1, 1.0 / y1**2, flow, flow * state[2])

        outcome = solve_ivp(
            rhs,
            (0.0, t),
            (1.0, 1.0, 0.0, 0.0, 0.0),
            method="DOP853",
            rtol=SOLVER_TOLERANCE,
            atol=SOLVER_TOLERANCE,
            dense_output=True,
        )
        if not outcome.success:
            raise RuntimeError(f"comparison integrator failed: {outcome.message}")
        self._dense = outcome.sol
        terminal = outcome.y[:, -1]
        self.growth_total = float(terminal[2])  # G(t)
        self.flow_total = float(terminal[3])  # P(t)
        self.mixed_total = float(terminal[4])  # R(t)

    def states(self, s):
        return self._dense(np.asarray(s, dtype=float))

    def y1(self, s):
        y1, y1p, _, _, _ = self.states(s)
        return y1, y1p

    def y2(self, s):
        y1, y1p, growth, _, _ = self.states(s)
        remaining = self.growth_total - growth
        return y1 * remaining, y1p * remaining - 1.0 / y1

    def forced(self, s):
        if self.forcing is None:
            raise ValueError("solve was built without a forcing rule")
        y1, y1p, growth, flow, mixed = self.states(s)
        remaining = self.growth_total - growth
        y2 = y1 * remaining
        y2p = y1p * remaining - 1.0 / y1
        tail = self.growth_total * (self.flow_total - flow) - (self.mixed_total - mixed)
        return -y2 * flow - y1 * tail, -y2p * flow - y1p * tail


def _default_nodes(t: float, samples: int) -> np.ndarray:
    return np.linspace(0.0, t, samples)


def solve_y1(
    path: CoefficientPath, t: float, c: float = 1.0, samples: int = 801
) -> LinearBvpSolution:
    """Growing profile: y'' = h·y with y(0) = y'(0) = c > 0."""
    if not c > 0.0:
        raise ValueError("initial value c must be positive")
    engine = _AugmentedSolve(path, t)
    nodes = _default_nodes(t, samples)
    y, y_prime = engine.y1(nodes)
    y, y_prime = c * y, c * y_prime

    def dense(s):
        base, base_p = engine.y1(s)
        return c * base, c * base_p

    residuals = (abs(y[0] - y_prime[0]), 0.0)
    return LinearBvpSolution("y1", t, nodes, y, y_prime, residuals, dense)


def solve_y2(path: CoefficientPath, t: float, samples: int = 801) -> LinearBvpSolution:
    """Decaying profile y2(s) = y1(s)·∫ₛᵗ y1(0)/y1(τ)² dτ; y2(t) = 0."""
    engine = _AugmentedSolve(path, t)
    nodes = _default_nodes(t, samples)
    y, y_prime = engine.y2(nodes)
    residuals = (abs(y[-1]), abs(y[0] - y_prime[0] - 1.0))
    return LinearBvpSolution("y2", t, nodes, y, y_prime, residuals, engine.y2)


def solve_forced(
    path: CoefficientPath, forcing, t: float, samples: int = 801
) -> LinearBvpSolution:
    """Particular solution y(s) = -∫₀ᵗ K(s,τ)·F(τ) dτ with y(0)=y'(0), y(t)=0."""
    engine = _AugmentedSolve(path, t, forcing=forcing)
    nodes = _default_nodes(t, samples)
    y, y_prime = engine.forced(nodes)
    residuals = (abs(y[0] - y_prime[0]), abs(y[-1]))
    return LinearBvpSolution("forced", t, nodes, y, y_prime, residuals, engine.forced)


_MAJORANT_X, _MAJORANT_W = np.polynomial.legendre.leggauss(8)


def gamma_majorant(s, t: float):
    """ỹγ(s) = γ(s)·∫ₛᵗ γ(τ)⁻² dτ, the comparison majorant for y2.

    The tail integral runs in the variable v = ln(1+τ), where the integrand
    (1+τ)/γ(τ)² decays like a smooth exponential, so a fixed composite Gauss
    rule resolves it to roundoff.
    """
    s_array = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_array < 0.0) or np.any(s_array > t):
        raise ValueError("s must lie in [0, t]")
    lower = np.log1p(s_array)
    upper = np.log1p(t)
    panels = 16
    edges = lower[:, None] + (upper - lower)[:, None] * np.arange(panels + 1) / panels
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    half = 0.5 * (edges[:, 1:] - edges[:, :-1])
    v = mid[..., None] + half[..., None] * _MAJORANT_X
    tau = np.expm1(v)
    integrand = (1.0 + tau) / gamma_eval(tau).value ** 2
    tails = np.sum(half * (integrand @ _MAJORANT_W), axis=1)
    out = gamma_eval(s_array).value * tails
    return out if np.ndim(s) else float(out[0])


def kernel_values(path: CoefficientPath, t: float, s, tau):
    """Green kernel K(s,τ) = y1(τ)y2(s)·1{τ≤s} + y1(s)y2(τ)·1{τ≥s}."""
    engine = _AugmentedSolve(path, t)
    s_arr = np.asarray(s, dtype=float)
    tau_arr = np.asarray(tau, dtype=float)
    y1_s, _ = engine.y1(s_arr)
    y1_tau, _ = engine.y1(tau_arr)
    y2_s, _ = engine.y2(s_arr)
    y2_tau, _ = engine.y2(tau_arr)
    return np.where(tau_arr <= s_arr, y1_tau * y2_s, y1_s * y2_tau)


def kernel_bound_margin(path: CoefficientPath, t: float, s: float, tau: float) -> float:
    """min{γ(s)(t-τ), γ(τ)(t-s)}/γ(t) - |K(s,τ)|, certified nonnegative."""
    if not (0.0 <= s <= t and 0.0 <= tau <= t):
        raise ValueError("s and τ must lie in [0, t]")
    bound = (
        min(gamma_eval(s).value * (t - tau), gamma_eval(tau).value * (t - s))
        / gamma_eval(t).value
    )
    return bound - abs(float(kernel_values(path, t, s, tau)))


def comparison_margins(
    path: CoefficientPath, t: float, forcing=None, samples: int = 801, mesh: int = 81
) -> dict[str, float]:
    """Worst-case margins of every certified bound for one coefficient path.

    Keys: positivity, bound_i, bound_ii_lower, bound_ii, kernel, wronskian_dev,
    y1_ratio_monotone, y2_majorant_monotone, product, majorant, and (when a
    forcing is given) bound_iii_gamma and bound_iii_time.
    """
    engine = _AugmentedSolve(path, t, forcing=forcing)
    nodes = np.linspace(0.0, t, samples)
    nodes[-1] = t
    gamma_nodes = gamma_eval(nodes).value
    gamma_t = gamma_nodes[-1]

    y1, y1p = engine.y1(nodes)
    y2, y2p = engine.y2(nodes)

    report: dict[str, float] = {}
    report["positivity"] = float(y1.min())
    report["bound_i"] = float((gamma_nodes * y1[-1] / gamma_t - y1).min())
    report["bound_ii_lower"] = float(y2.min())
    report["bound_ii"] = float(((t - nodes) / gamma_t - y2).min())
    report["wronskian_dev"] = float(np.abs(y2p * y1 - y1p * y2 + 1.0).max())

    ratio = y1 / gamma_nodes
    report["y1_ratio_monotone"] = float(np.diff(ratio).min())

    majorant = gamma_majorant(nodes, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        y2_over_majorant = np.where(majorant > 0.0, y2 / majorant, 0.0)
    report["y2_majorant_monotone"] = float(-np.diff(y2_over_majorant[:-1]).max())
    report["product"] = float((gamma_nodes * majorant - y1 * y2).min())
    report["majorant"] = float(((t - nodes) / gamma_t - majorant).min())

    grid = np.linspace(0.0, t, mesh)
    gamma_grid = gamma_eval(grid).value
    y1_g, _ = engine.y1(grid)
    y2_g, _ = engine.y2(grid)
    kernel = np.where(
        grid[None, :] <= grid[:, None],
        y1_g[None, :] * y2_g[:, None],
        y1_g[:, None] * y2_g[None, :],
    )
    bound = (
        np.minimum(
            gamma_grid[:, None] * (t - grid)[None, :],
            gamma_grid[None, :] * (t - grid)[:, None],
        )
        / gamma_t
    )
    report["kernel"] = float((bound - np.abs(kernel)).min())

    if forcing is not None:
        y, _ = engine.forced(nodes)
        abs_forcing = lambda u: abs(float(forcing(u)))
        gamma_weight = quad(
            lambda u: abs_forcing(u) * (t - u), 0.0, t, limit=200
        )[0] / gamma_t
        time_weight = quad(
            lambda u: abs_forcing(u) * gamma_eval(u).value, 0.0, t, limit=200
        )[0] / gamma_t
        report["bound_iii_gamma"] = gamma_weight - float(np.abs(y / gamma_nodes).max())
        probe = np.append(nodes[:-1], t - _EDGE_OFFSET)
        y_probe, _ = engine.forced(probe)
        report["bound_iii_time"] = time_weight - float(
            np.abs(y_probe / (t - probe)).max()
        )
    return report
