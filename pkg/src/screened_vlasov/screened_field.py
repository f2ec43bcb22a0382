"""Screened-Poisson solver on a uniform grid, with certified derivative bounds.

The solver inverts (1 - d²/dx²) by convolving with the exponential kernel
½·exp(-|x|).  Writing the convolution as a left-running and a right-running
exponential accumulation turns it into two first-order recurrences, which this
module evaluates in O(N) with sixth-order panel quadrature.  The gradient
comes out of the same two accumulators exactly, and higher derivatives of the
potential follow from the algebraic recursion  d^n phi = d^{n-2} phi -
d^{n-2} rho, so only low-order finite differences of the density are ever
required.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import lfilter

from .weights import gamma_eval, phi_eval

BOUNDARY_DECAY_LIMIT = 1.0e-12
_MAX_DERIVATIVE_ORDER = 8
_SLICE_MAGIC = b"VLSLICE1"

# 6-point Gauss-Legendre rule mapped to [0, 1].
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)
_GL_TAU = 0.5 * (_GL_X + 1.0)
_GL_WEIGHT = 0.5 * _GL_W


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A real function sampled on the uniform grid x_i = -L + i·2L/(N-1)."""

    half_width: float
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 8:
            raise ValueError("grid function needs at least 8 nodes on a 1D grid")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        if not self.half_width > 0.0:
            raise ValueError("half_width must be positive")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def node_count(self) -> int:
        return self.values.size

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.node_count - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.node_count)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.half_width, values)

    def to_csv(self, path: str | Path) -> None:
        table = np.column_stack([self.x, self.values])
        np.savetxt(path, table, delimiter=",", header="x,value", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path) -> "GridFunction":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        x, values = table[:, 0], table[:, 1]
        spacing = np.diff(x)
        if not np.allclose(spacing, spacing[0], rtol=1e-9, atol=1e-12):
            raise ValueError("grid nodes in CSV are not uniformly spaced")
        return cls(float(x[-1]), values)

    def to_binary(self, path: str | Path) -> None:
        with open(path, "wb") as handle:
            handle.write(_SLICE_MAGIC)
            handle.write(struct.pack("<d", self.half_width))
            handle.write(struct.pack("<Q", self.node_count))
            handle.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path: str | Path) -> "GridFunction":
        with open(path, "rb") as handle:
            magic = handle.read(len(_SLICE_MAGIC))
            if magic != _SLICE_MAGIC:
                raise ValueError("unrecognized slice file header")
            (half_width,) = struct.unpack("<d", handle.read(8))
            (count,) = struct.unpack("<Q", handle.read(8))
            values = np.frombuffer(handle.read(8 * count), dtype="<f8")
            if values.size != count:
                raise ValueError("slice file truncated")
        return cls(half_width, values.astype(float))


class PotentialSolution(NamedTuple):
    """Potential, its exact gradient, and the operator residual sup-norm."""

    phi: GridFunction
    grad: GridFunction
    residual_sup: float


@lru_cache(maxsize=None)
def _panel_interp_weights(shift: int) -> np.ndarray:
    """Row g: weights reproducing f(tau_g) from 6 nodes at integer offsets -shift..5-shift."""
    nodes = np.arange(6, dtype=float) - shift
    weights = np.empty((_GL_TAU.size, 6))
    for col in range(6):
        others = np.delete(nodes, col)
        numer = np.prod(_GL_TAU[:, None] - others[None, :], axis=1)
        denom = np.prod(nodes[col] - others)
        weights[:, col] = numer / denom
    return weights


def _density_at_panel_nodes(values: np.ndarray) -> np.ndarray:
    """Quintic interpolation of the density at the 6 Gauss nodes of every panel.

    Returns an array of shape (6, N-1); column i holds the density at
    x_i + tau_g * h for panel [x_i, x_{i+1}].  Interior panels use the centered
    6-point stencil i-2..i+3; the two panels at each end reuse the clamped
    stencil at the boundary.
    """
    n = values.size
    out = np.empty((_GL_TAU.size, n - 1))
    interior = _panel_interp_weights(2)
    block = np.zeros((_GL_TAU.size, n - 5))
    for offset in range(6):
        block += interior[:, offset : offset + 1] * values[offset : offset + n - 5][None, :]
    out[:, 2 : n - 3] = block
    out[:, 0] = _panel_interp_weights(0) @ values[:6]
    out[:, 1] = _panel_interp_weights(1) @ values[:6]
    out[:, n - 3] = _panel_interp_weights(3) @ values[n - 6 :]
    out[:, n - 2] = _panel_interp_weights(4) @ values[n - 6 :]
    return out


def solve_potential(rho: GridFunction, *, check_boundary: bool = True) -> PotentialSolution:
    """Solve (1 - d²/dx²) phi = rho by exponential-kernel convolution.

    The kernel integral splits at each node into a left accumulation
    A(x) = ∫_{-L}^x e^{-(x-y)} rho(y) dy and its right mirror B(x); both obey
    one-step exponential recurrences across panels, and

        phi = (A + B) / 2,      phi' = (B - A) / 2   (exactly).

    With ``check_boundary`` the near-vacuum precondition (density below
    ``BOUNDARY_DECAY_LIMIT`` at the domain edge) is enforced.
    """
    values = rho.values
    if check_boundary:
        edge = max(abs(values[0]), abs(values[-1]))
        if edge > BOUNDARY_DECAY_LIMIT:
            raise ValueError(
                f"density is {edge:.3e} at the domain boundary, above the "
                f"{BOUNDARY_DECAY_LIMIT:.0e} decay precondition; enlarge the domain"
            )
    h = rho.spacing
    at_nodes = _density_at_panel_nodes(values)
    decay_left = np.exp(-h * (1.0 - _GL_TAU)) * _GL_WEIGHT
    decay_right = np.exp(-h * _GL_TAU) * _GL_WEIGHT
    panels_left = h * (decay_left @ at_nodes)
    panels_right = h * (decay_right @ at_nodes)

    ratio = math.exp(-h)
    left = np.empty_like(values)
    left[0] = 0.0
    left[1:] = lfilter([1.0], [1.0, -ratio], panels_left)
    right = np.empty_like(values)
    right[-1] = 0.0
    right[:-1] = lfilter([1.0], [1.0, -ratio], panels_right[::-1])[::-1]

    phi = rho.with_values(0.5 * (left + right))
    grad = rho.with_values(0.5 * (right - left))
    second = spatial_derivative(phi, 2)
    residual_sup = float(np.max(np.abs(phi.values - second.values - values)))
    return PotentialSolution(phi, grad, residual_sup)


def _fornberg_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at 0."""
    count = offsets.size
    table = np.zeros((count, order + 1))
    table[0, 0] = 1.0
    c1 = 1.0
    c4 = offsets[0]
    for i in range(1, count):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = offsets[i]
        for j in range(i):
            c3 = offsets[i] - offsets[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    table[i, k] = c1 * (k * table[i - 1, k - 1] - c5 * table[i - 1, k]) / c2
                table[i, 0] = -c1 * c5 * table[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                table[j, k] = (c4 * table[j, k] - k * table[j, k - 1]) / c3
            table[j, 0] = c4 * table[j, 0] / c3
        c1 = c2
    return table[:, order]


@lru_cache(maxsize=None)
def _stencil_weights(order: int, stencil: int, position: int) -> np.ndarray:
    """Weights for the ``order``-th derivative at node ``position`` of a stencil."""
    offsets = np.arange(stencil, dtype=float) - position
    return _fornberg_weights(offsets, order)


def spatial_derivative(g: GridFunction, n: int) -> GridFunction:
    """n-fold differentiation: centered 8th-order stencils, one-sided at the edges."""
    if not 0 <= n <= _MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order must lie in 0..{_MAX_DERIVATIVE_ORDER}")
    if n == 0:
        return g.with_values(g.values)
    stencil = n + 8 if n % 2 else n + 9
    if g.node_count < stencil:
        raise ValueError("grid too coarse for the differentiation stencil")
    half = stencil // 2
    scale = g.spacing ** (-n)
    out = np.empty_like(g.values)
    centered = _stencil_weights(n, stencil, half)
    out[half:-half] = np.correlate(g.values, centered, mode="valid") * scale
    for row in range(half):
        out[row] = (_stencil_weights(n, stencil, row) @ g.values[:stencil]) * scale
        mirror = g.node_count - 1 - row
        out[mirror] = (
            _stencil_weights(n, stencil, stencil - 1 - row) @ g.values[-stencil:]
        ) * scale
    return g.with_values(out)


def potential_derivative(rho: GridFunction, solution: PotentialSolution, n: int) -> GridFunction:
    """d^n phi via the recursion d^n phi = d^{n-2} phi - d^{n-2} rho."""
    if n < 0:
        raise ValueError("derivative order must be nonnegative")
    if n == 0:
        return solution.phi
    if n == 1:
        return solution.grad
    lower = potential_derivative(rho, solution, n - 2)
    return lower.with_values(lower.values - spatial_derivative(rho, n - 2).values)


def max_principle_margins(
    rho: GridFunction, solution: PotentialSolution, n: int
) -> tuple[float, float]:
    """Margins of the kernel-convolution maximum principle at order n.

    m1 = ||d^n rho|| - ||d^n phi||            (unit kernel mass),
    m2 = min(2||d^n rho||, ||d^{n+2} rho||) - ||d^{n+2} phi||
         (two independent routes to the (n+2)-nd derivative).
    Both are nonnegative up to discretization slack.
    """
    if not 0 <= n <= _MAX_DERIVATIVE_ORDER - 2:
        raise ValueError(f"order must lie in 0..{_MAX_DERIVATIVE_ORDER - 2}")
    rho_n = spatial_derivative(rho, n).sup_norm()
    phi_n = potential_derivative(rho, solution, n).sup_norm()
    rho_n2 = spatial_derivative(rho, n + 2).sup_norm()
    phi_n2 = potential_derivative(rho, solution, n + 2).sup_norm()
    m1 = rho_n - phi_n
    m2 = min(2.0 * rho_n, rho_n2) - phi_n2
    return m1, m2


@dataclass(frozen=True, eq=False)
class FieldHistory:
    """Cached potential derivatives on shared time nodes, C¹-interpolated in time.

    ``profiles[m, k]`` is the grid profile of d^k phi at time node m, for
    k = 0..max_order.  Interpolation between nodes is a cubic spline per
    derivative order, so field evaluations along characteristics are smooth.
    """

    times: np.ndarray
    half_width: float
    node_count: int
    max_order: int
    profiles: np.ndarray
    interpolation_rule: str = "cubic-spline"
    _spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        if times.size < 4 or np.any(np.diff(times) <= 0.0) or times[0] != 0.0:
            raise ValueError("need at least 4 strictly increasing time nodes from 0")
        profiles = np.asarray(self.profiles, dtype=float)
        expected = (times.size, self.max_order + 1, self.node_count)
        if profiles.shape != expected:
            raise ValueError(f"profiles must have shape {expected}")
        times = times.copy()
        times.setflags(write=False)
        profiles = profiles.copy()
        profiles.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "_spline", CubicSpline(times, profiles, axis=0))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @classmethod
    def from_density_slices(
        cls, times: np.ndarray, densities: list[GridFunction], n_max: int
    ) -> "FieldHistory":
        """Solve the potential at every node and cache derivatives 0..n_max+2."""
        times = np.asarray(times, dtype=float)
        if len(densities) != times.size:
            raise ValueError("one density slice per time node required")
        base = densities[0]
        if any(
            d.node_count != base.node_count or d.half_width != base.half_width
            for d in densities
        ):
            raise ValueError("all density slices must share one grid")
        max_order = n_max + 2
        profiles = np.empty((times.size, max_order + 1, base.node_count))
        for m, rho in enumerate(densities):
            solution = solve_potential(rho)
            profiles[m, 0] = solution.phi.values
            profiles[m, 1] = solution.grad.values
            for k in range(2, max_order + 1):
                profiles[m, k] = profiles[m, k - 2] - spatial_derivative(rho, k - 2).values
        return cls(times, base.half_width, base.node_count, max_order, profiles)

    @classmethod
    def zero(cls, times: np.ndarray, half_width: float, node_count: int, n_max: int) -> "FieldHistory":
        times = np.asarray(times, dtype=float)
        max_order = n_max + 2
        profiles = np.zeros((times.size, max_order + 1, node_count))
        return cls(times, half_width, node_count, max_order, profiles)

    def derivative_profiles(self, s: float) -> np.ndarray:
        """All cached derivative profiles at time s, shape (max_order+1, N)."""
        if not 0.0 <= s <= self.horizon:
            raise ValueError("time outside the history span")
        return self._spline(s)

    def derivative_profile(self, order: int, s: float) -> np.ndarray:
        if not 0 <= order <= self.max_order:
            raise ValueError("derivative order not cached in this history")
        return self.derivative_profiles(s)[order]

    def node_sup_norms(self, order: int) -> np.ndarray:
        if not 0 <= order <= self.max_order:
            raise ValueError("derivative order not cached in this history")
        return np.max(np.abs(self.profiles[:, order, :]), axis=1)


def weighted_integral_bound(n: int, t: float) -> float:
    """min{ phi_n(t)(n!)²/270, phi_{n-1}(t)((n-1)!)²/3 }."""
    if n < 1:
        raise ValueError("order must be positive")
    return min(
        phi_eval(n, t) * math.factorial(n) ** 2 / 270.0,
        phi_eval(n - 1, t) * math.factorial(n - 1) ** 2 / 3.0,
    )


def weighted_derivative_integral(hist: FieldHistory, n: int, t: float) -> float:
    """∫₀ᵗ ||d^{n+1} phi(s)|| γ(s)ⁿ (t-s)/γ(t) ds over the history's time nodes."""
    if n < 1:
        raise ValueError("order must be positive")
    if n + 1 > hist.max_order:
        raise ValueError("history does not cache the required derivative order")
    if not 0.0 < t <= hist.horizon:
        raise ValueError("time outside the history span")
    nodes = hist.times[hist.times <= t]
    if nodes.size < 4:
        raise ValueError("history too sparse on [0, t] for the time quadrature")
    samples = [
        float(np.max(np.abs(hist.derivative_profile(n + 1, s)))) for s in nodes
    ]
    s_values = nodes
    if nodes[-1] < t:
        samples.append(float(np.max(np.abs(hist.derivative_profile(n + 1, t)))))
        s_values = np.append(nodes, t)
    gamma_t = gamma_eval(t).value
    integrand = (
        np.asarray(samples)
        * gamma_eval(s_values).value ** n
        * (t - s_values)
        / gamma_t
    )
    return float(CubicSpline(s_values, integrand).integrate(0.0, t))


def damping_margins(hist: FieldHistory) -> np.ndarray:
    """Per-node margins of the certificate ||d² phi(s)|| ≤ -γ''(s)/γ(s)."""
    sup_second = hist.node_sup_norms(2)
    triple = gamma_eval(hist.times)
    return -triple.curvature / triple.value - sup_second
