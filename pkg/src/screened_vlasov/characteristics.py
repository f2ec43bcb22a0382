"""Characteristic boundary-value solver with variational derivative ladders.

A characteristic ending at position x at time t with launch constraint
X(0) - V(0) = x0 obeys

    X'(s) = V(s),   V'(s) = -q·(d₁φ)(X(s), s).

Newton shooting runs on the launch velocity v0: perturbing v0 by δ moves both
X(0) and V(0) by δ, so the shooting Jacobian is the terminal value z(t) of the
variational flow z'' = h·z, z(0) = z'(0) = 1 with h(s) = -q·(d₁²φ)(X(s), s).
Under the damping certificate z stays above γ, making Newton well-posed.

All endpoint pairs in a batch integrate simultaneously on one geometric time
grid with fourth-order Runge-Kutta; field profiles at the Runge-Kutta stage
times are interpolated once from the field history and shared.

Derivative ladders reuse the comparison representation: with z and
G(s) = ∫₀ˢ z⁻² the decaying profile is y₂ = z·(G(t)-G(s)), and each
higher-order derivative of the flow solves y'' = h·y + F with boundary data
y(0)=y'(0), y(t)=0, whose kernel solution and edge slopes

    y'(0) = -(G(t)·P(t) - R(t)),     y'(t) = P(t)/z(t),
    P = ∫ z·F,  R = ∫ z·F·G,

come from cumulative quadrature on the shared grid.  Forcings are assembled
from partition sums over lower ladder orders (x-derivatives) and a Leibniz
expansion (mixed derivatives).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .combinatorics import (
    LADDER_FACTOR_DIVISOR,
    enumerate_partitions,
    multinomial_weight,
)
from .comparison_ode import CoefficientPath, LinearBvpSolution, solve_y1, solve_y2
from .screened_field import FieldHistory
from .weights import gamma_eval, phi_eval

BVP_TOLERANCE = 1.0e-10
MAX_NEWTON_ITERATIONS = 25
DEFAULT_STEP_SCALE = 0.02
_GATHER_POINTS = 8


def geometric_time_grid(t: float, step_scale: float = DEFAULT_STEP_SCALE) -> np.ndarray:
    """Nodes 0 = s₀ < … < s_K = t with spacing proportional to 1+s."""
    if not t > 0.0:
        raise ValueError("horizon must be positive")
    segments = max(8, math.ceil(math.log1p(t) / step_scale))
    nodes = np.expm1(np.log1p(t) * np.arange(segments + 1) / segments)
    nodes[0] = 0.0
    nodes[-1] = t
    return nodes


_OFFSETS = np.arange(_GATHER_POINTS)
_WEIGHT_DENOM = np.array(
    [
        (-1.0) ** (_GATHER_POINTS - 1 - j)
        * math.factorial(j)
        * math.factorial(_GATHER_POINTS - 1 - j)
        for j in range(_GATHER_POINTS)
    ]
)[:, None]


def _lagrange_gather_weights(theta: np.ndarray) -> np.ndarray:
    """Rows of 8-point Lagrange weights at local coordinate theta ∈ [0, 7].

    Computed as (∏ₘ(θ-m)) / ((θ-j)·Dⱼ); columns where θ sits on a node get the
    exact one-hot row instead of the 0/0 quotient.
    """
    diff = theta[None, :] - _OFFSETS[:, None]  # (8, B)
    full = np.prod(diff, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = full / (diff * _WEIGHT_DENOM)
    on_node = np.abs(diff) < 1.0e-12
    hit = np.any(on_node, axis=0)
    if np.any(hit):
        weights[:, hit] = on_node[:, hit].astype(float)
    return weights


class CharacteristicEngine:
    """Batched shooting solver for one (field history, horizon, charge) triple."""

    def __init__(
        self,
        hist: FieldHistory,
        t: float,
        q: int,
        step_scale: float = DEFAULT_STEP_SCALE,
    ):
        if q not in (-1, 1):
            raise ValueError("charge q must be +1 or -1")
        if not 0.0 < t <= hist.horizon:
            raise ValueError("horizon outside the field history span")
        self.hist = hist
        self.t = float(t)
        self.q = q
        self.s_nodes = geometric_time_grid(t, step_scale)
        segments = self.s_nodes.size - 1
        stage_times = np.empty(2 * segments + 1)
        stage_times[::2] = self.s_nodes
        stage_times[1::2] = 0.5 * (self.s_nodes[:-1] + self.s_nodes[1:])
        self.stage_times = stage_times
        # all derivative orders at all stage times, one spline evaluation
        self.stage_profiles = hist._spline(stage_times)
        self.half_width = hist.half_width
        self.spacing = 2.0 * hist.half_width / (hist.node_count - 1)
        self.node_count = hist.node_count

    # -- field gathers ----------------------------------------------------
    def _check_domain(self, position: np.ndarray) -> None:
        # Newton trial sweeps targeting a point pinned at the grid edge
        # overshoot it by the current residual, so excursions comparable to
        # the residual are routine and the field lookup continues the edge
        # value constantly; only an excursion of order the grid itself means
        # the grid fails to contain the dynamics
        if np.any(np.abs(position) > 1.25 * self.half_width + 1.0):
            raise RuntimeError("characteristic left the field grid domain")

    def _gather_multi(
        self, stage: int, orders: tuple[int, ...], position: np.ndarray
    ) -> list[np.ndarray]:
        """(d₁^order φ)(position, stage time) for several orders sharing weights."""
        # constant continuation past the edge: the grid is sized so the
        # field has decayed there, and clamping avoids extrapolation wobble
        scaled = (position + self.half_width) / self.spacing
        scaled = np.clip(scaled, 0.0, float(self.node_count - 1))
        base = np.clip(
            np.floor(scaled).astype(np.intp) - 3, 0, self.node_count - _GATHER_POINTS
        )
        theta = scaled - base
        weights = _lagrange_gather_weights(theta)
        stencil = base[None, :] + _OFFSETS[:, None]
        profiles = self.stage_profiles[stage]
        return [np.einsum("kb,kb->b", weights, profiles[o][stencil]) for o in orders]

    def _gather(self, stage: int, order: int, position: np.ndarray) -> np.ndarray:
        """(d₁^order φ)(position, stage time) by 8-point local interpolation."""
        self._check_domain(position)
        return self._gather_multi(stage, (order,), position)[0]

    def _force_pair(self, stage: int, position: np.ndarray):
        """(acceleration, variational coefficient) = -q·(d₁φ, d₁²φ) at one stage."""
        grad, curv = self._gather_multi(stage, (1, 2), position)
        return -self.q * grad, -self.q * curv

    # -- forward integration ----------------------------------------------
    def _sweep(self, v0: np.ndarray, x0: np.ndarray, record: bool):
        """RK4 pass of (X, V, z, z') from s=0 to s=t for launch velocities v0."""
        X = x0 + v0
        V = v0.copy()
        z = np.ones_like(v0)
        zp = np.ones_like(v0)
        if record:
            count = self.s_nodes.size
            XX = np.empty((count, v0.size))
            VV = np.empty((count, v0.size))
            ZZ = np.empty((count, v0.size))
            ZP = np.empty((count, v0.size))
            XX[0], VV[0], ZZ[0], ZP[0] = X, V, z, zp
        for k in range(self.s_nodes.size - 1):
            dt = self.s_nodes[k + 1] - self.s_nodes[k]
            s0, s1, s2 = 2 * k, 2 * k + 1, 2 * k + 2
            self._check_domain(X)

            a1, h1 = self._force_pair(s0, X)
            k1 = (V, a1, zp, h1 * z)

            a2, h2 = self._force_pair(s1, X + 0.5 * dt * k1[0])
            k2 = (V + 0.5 * dt * k1[1], a2, zp + 0.5 * dt * k1[3], h2 * (z + 0.5 * dt * k1[2]))

            a3, h3 = self._force_pair(s1, X + 0.5 * dt * k2[0])
            k3 = (V + 0.5 * dt * k2[1], a3, zp + 0.5 * dt * k2[3], h3 * (z + 0.5 * dt * k2[2]))

            a4, h4 = self._force_pair(s2, X + dt * k3[0])
            k4 = (V + dt * k3[1], a4, zp + dt * k3[3], h4 * (z + dt * k3[2]))

            X = X + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            V = V + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            z = z + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            zp = zp + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
            if record:
                XX[k + 1], VV[k + 1], ZZ[k + 1], ZP[k + 1] = X, V, z, zp
        self._check_domain(X)
        if record:
            return XX, VV, ZZ, ZP
        return X, z

    def solve(
        self,
        x,
        x0,
        bvp_tol: float = BVP_TOLERANCE,
        max_iter: int = MAX_NEWTON_ITERATIONS,
        record: bool = False,
        v0_init=None,
    ) -> dict:
        """Newton shooting for all endpoint pairs; optionally record node samples.

        v0_init overrides the free-streaming initial guess (warm start across
        outer iterations when the field changes little).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        x, x0 = np.broadcast_arrays(x, x0)
        x, x0 = x.astype(float).ravel(), x0.astype(float).ravel()
        if v0_init is None:
            v0 = (x - x0) / (1.0 + self.t)
        else:
            v0 = np.asarray(v0_init, dtype=float).ravel().copy()
            if v0.shape != x.shape:
                raise ValueError("v0_init must match the endpoint batch shape")
        iterations = 0
        for iterations in range(1, max_iter + 1):
            X_t, z_t = self._sweep(v0, x0, record=False)
            residual = X_t - x
            if np.min(z_t) <= 0.0:
                raise RuntimeError(
                    "shooting Jacobian lost positivity; field violates the damping certificate"
                )
            worst = float(np.max(np.abs(residual)))
            if worst <= bvp_tol:
                break
            v0 = v0 - residual / z_t
        else:
            raise RuntimeError(
                f"Newton shooting did not reach {bvp_tol:.0e} in {max_iter} iterations "
                f"(worst residual {worst:.3e})"
            )
        result = {
            "x": x,
            "x0": x0,
            "v0": v0,
            "z_t": z_t,
            "residual": np.abs(residual),
            "iterations": iterations,
        }
        if record:
            XX, VV, ZZ, ZP = self._sweep(v0, x0, record=True)
            result.update({"X": XX, "V": VV, "z": ZZ, "zp": ZP})
            result["z_t"] = ZZ[-1]
            result["residual"] = np.abs(XX[-1] - x)
        return result

    # -- ladder machinery ---------------------------------------------------
    def _kernel_pieces(self, stored: dict) -> dict:
        if "G" not in stored:
            z = stored["z"]
            growth = cumulative_simpson(z**-2.0, x=self.s_nodes, axis=0, initial=0.0)
            stored["G"] = growth
            remaining = growth[-1] - growth
            stored["y2"] = z * remaining
            stored["y2p"] = stored["zp"] * remaining - 1.0 / z
        return stored

    def _kernel_solve(self, stored: dict, forcing: np.ndarray):
        """Solve y'' = h·y + F with y(0)=y'(0), y(t)=0 on the node grid."""
        self._kernel_pieces(stored)
        z, zp = stored["z"], stored["zp"]
        growth = stored["G"]
        flow = cumulative_simpson(z * forcing, x=self.s_nodes, axis=0, initial=0.0)
        mixed = cumulative_simpson(
            z * forcing * growth, x=self.s_nodes, axis=0, initial=0.0
        )
        tail = growth[-1] * (flow[-1] - flow) - (mixed[-1] - mixed)
        y = -stored["y2"] * flow - z * tail
        y_prime = -stored["y2p"] * flow - zp * tail
        slope_origin = -(growth[-1] * flow[-1] - mixed[-1])
        slope_terminal = flow[-1] / z[-1]
        return y, y_prime, slope_origin, slope_terminal

    def _trajectory_derivative(self, stored: dict, order: int) -> np.ndarray:
        """(d₁^order φ) along the trajectory at the node times, cached."""
        cache = stored.setdefault("field_along", {})
        if order not in cache:
            X = stored["X"]
            values = np.empty_like(X)
            for k in range(self.s_nodes.size):
                values[k] = self._gather(2 * k, order, X[k])
            cache[order] = values
        return cache[order]

    def ladder(self, stored: dict, n_max: int) -> dict:
        """All x- and mixed derivatives of the flow up to order n_max.

        Returns arrays on (node, batch): dx_X[n] for n=1..n_max and
        mixed_X[n] for n=0..n_max, plus scalar rows dx_w0[n] (launch-velocity
        sensitivities, n ≥ 1) and mixed_w[n] (terminal slopes, n ≥ 0).
        """
        if n_max + 2 > self.hist.max_order:
            raise ValueError("field history does not cache enough derivative orders")
        if "X" not in stored:
            raise ValueError("ladder requires a recorded solve (record=True)")
        self._kernel_pieces(stored)
        z, z_t = stored["z"], stored["z_t"]

        dx_X: dict[int, np.ndarray] = {1: z / z_t}
        mixed_X: dict[int, np.ndarray] = {0: stored["y2"]}
        dx_w0: dict[int, np.ndarray] = {1: 1.0 / z_t}
        mixed_w: dict[int, np.ndarray] = {0: -1.0 / z_t}

        for n in range(2, n_max + 1):
            forcing = np.zeros_like(z)
            for m in enumerate_partitions(n):
                if m[n - 1] > 0:
                    continue  # the top part belongs to the homogeneous side
                depth = sum(m)
                term = multinomial_weight(m) * self._trajectory_derivative(
                    stored, 1 + depth
                )
                for j, mj in enumerate(m, start=1):
                    if mj:
                        term = term * dx_X[j] ** mj
                forcing += term
            forcing *= -self.q
            y, _, slope_origin, _ = self._kernel_solve(stored, forcing)
            dx_X[n] = y
            dx_w0[n] = slope_origin

        for n in range(1, n_max + 1):
            forcing = np.zeros_like(z)
            for k in range(1, n + 1):
                coefficient_k = np.zeros_like(z)
                for m in enumerate_partitions(k):
                    depth = sum(m)
                    term = multinomial_weight(m) * self._trajectory_derivative(
                        stored, 2 + depth
                    )
                    for j, mj in enumerate(m, start=1):
                        if mj:
                            term = term * dx_X[j] ** mj
                    coefficient_k += term
                forcing += math.comb(n, k) * coefficient_k * mixed_X[n - k]
            forcing *= -self.q
            y, _, _, slope_terminal = self._kernel_solve(stored, forcing)
            mixed_X[n] = y
            mixed_w[n] = slope_terminal

        return {"dx_X": dx_X, "mixed_X": mixed_X, "dx_w0": dx_w0, "mixed_w": mixed_w}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One converged characteristic with its recorded node samples."""

    x: float
    x0: float
    t: float
    q: int
    s_nodes: np.ndarray
    X: np.ndarray
    V: np.ndarray
    v0: float
    boundary_residual: float
    newton_iterations: int
    engine: CharacteristicEngine = field(repr=False)
    stored: dict = field(repr=False)

    def to_csv(self, path: str | Path) -> None:
        table = np.column_stack([self.s_nodes, self.X, self.V])
        np.savetxt(path, table, delimiter=",", header="s,X,V", comments="", fmt="%.17g")


class LadderSolution(NamedTuple):
    """One ladder order: sampled profile, its slope data, and edge scalars."""

    order: int
    s_nodes: np.ndarray
    values: np.ndarray
    origin_slope: float
    terminal_slope: float


@dataclass(frozen=True, eq=False)
class DerivativeLadder:
    """All flow derivatives of one trajectory up to a maximal order.

    dx_X[n] samples d_x^n X(s) (n = 1..n_max); mixed_X[n] samples
    d_x^n d_{x0} X(s) (n = 0..n_max); dx_w0 and mixed_w hold the matching
    launch/terminal velocity sensitivities.  Orders are contiguous from the
    base upward.
    """

    t: float
    q: int
    s_nodes: np.ndarray
    w: float
    w0: float
    dx_X: dict[int, np.ndarray]
    mixed_X: dict[int, np.ndarray]
    dx_w0: dict[int, float]
    mixed_w: dict[int, float]

    def __post_init__(self) -> None:
        n_max = max(self.dx_X)
        if sorted(self.dx_X) != list(range(1, n_max + 1)) or sorted(
            self.mixed_X
        ) != list(range(0, n_max + 1)):
            raise ValueError("ladder orders must be contiguous from the base")
        if sorted(self.dx_w0) != sorted(self.dx_X) or sorted(self.mixed_w) != sorted(
            self.mixed_X
        ):
            raise ValueError("scalar entries must mirror the sampled orders")

    @property
    def n_max(self) -> int:
        return max(self.dx_X)


def solve_bvp(
    x: float,
    x0: float,
    t: float,
    hist: FieldHistory,
    q: int,
    engine: CharacteristicEngine | None = None,
    bvp_tol: float = BVP_TOLERANCE,
    max_iter: int = MAX_NEWTON_ITERATIONS,
) -> Trajectory:
    """Solve the two-point characteristic problem for one endpoint pair."""
    if engine is None:
        engine = CharacteristicEngine(hist, t, q)
    stored = engine.solve([x], [x0], bvp_tol=bvp_tol, max_iter=max_iter, record=True)
    return Trajectory(
        x=float(x),
        x0=float(x0),
        t=t,
        q=q,
        s_nodes=engine.s_nodes,
        X=stored["X"][:, 0],
        V=stored["V"][:, 0],
        v0=float(stored["v0"][0]),
        boundary_residual=float(stored["residual"][0]),
        newton_iterations=stored["iterations"],
        engine=engine,
        stored=stored,
    )


def w_pair(traj: Trajectory) -> tuple[float, float]:
    """Terminal and launch velocities (w, w0) of a converged trajectory."""
    return float(traj.V[-1]), float(traj.V[0])


def coefficient_path(traj: Trajectory) -> CoefficientPath:
    """The variational coefficient h(s) = -q·(d₁²φ)(X(s), s) along a trajectory."""
    engine = traj.engine
    values = np.empty(traj.s_nodes.size)
    for k in range(traj.s_nodes.size):
        values[k] = engine._force_pair(2 * k, traj.X[k : k + 1])[1][0]
    spline = CubicSpline(traj.s_nodes, values)
    return CoefficientPath.from_callable(spline, traj.t, label="trajectory")


def variational_first(traj: Trajectory, which: str) -> LinearBvpSolution:
    """First derivative of the flow map by the comparison engine (dual route).

    which='x':  d_x X solves y'' = h·y, y(0)=y'(0), y(t)=1 (scaled growing
    profile); which='x0':  d_{x0} X solves the decaying-profile problem.
    """
    path = coefficient_path(traj)
    if which == "x":
        base = solve_y1(path, traj.t)
        scale = 1.0 / base.y[-1]
        dense = base.dense

        def scaled_dense(s):
            y, yp = dense(s)
            return scale * y, scale * yp

        residuals = (scale * base.boundary_residuals[0], abs(scale * base.y[-1] - 1.0))
        return LinearBvpSolution(
            "y1",
            traj.t,
            base.s_nodes,
            scale * base.y,
            scale * base.y_prime,
            residuals,
            scaled_dense,
        )
    if which == "x0":
        return solve_y2(path, traj.t)
    raise ValueError("which must be 'x' or 'x0'")


def _single_ladder(traj: Trajectory, n_max: int) -> dict:
    cache = traj.stored.setdefault("ladder_cache", {})
    if cache.get("n_max", -1) < n_max:
        cache["result"] = traj.engine.ladder(traj.stored, n_max)
        cache["n_max"] = n_max
    return cache["result"]


def ladder_x(traj: Trajectory, n: int) -> LadderSolution:
    """Sampled d_x^n X(s) with the launch-velocity slope d_x^n w0 = y'(0)."""
    if n < 2:
        raise ValueError("the x-ladder starts at order 2; use variational_first below")
    result = _single_ladder(traj, n)
    values = result["dx_X"][n][:, 0]
    return LadderSolution(n, traj.s_nodes, values, float(result["dx_w0"][n][0]), math.nan)


def ladder_mixed(traj: Trajectory, n: int) -> LadderSolution:
    """Sampled d_x^n d_{x0} X(s) with the terminal slope d_x^n d_{x0} w = y'(t)."""
    if n < 0:
        raise ValueError("mixed ladder order must be nonnegative")
    if n == 0:
        # base case is the decaying comparison profile itself
        sol = variational_first(traj, "x0")
        values, slopes = sol.evaluate(traj.s_nodes)
        return LadderSolution(0, traj.s_nodes, values, math.nan, float(slopes[-1]))
    result = _single_ladder(traj, max(n, 2))
    values = result["mixed_X"][n][:, 0]
    return LadderSolution(n, traj.s_nodes, values, math.nan, float(result["mixed_w"][n][0]))


def build_ladder(traj: Trajectory, n_max: int) -> DerivativeLadder:
    """Assemble the full derivative ladder of one trajectory up to n_max."""
    if n_max < 1:
        raise ValueError("ladder depth must be at least 1")
    result = _single_ladder(traj, max(n_max, 2))
    base = ladder_mixed(traj, 0)
    dx_X = {n: result["dx_X"][n][:, 0] for n in range(1, n_max + 1)}
    mixed_X = {0: base.values}
    mixed_X.update({n: result["mixed_X"][n][:, 0] for n in range(1, n_max + 1)})
    dx_w0 = {n: float(result["dx_w0"][n][0]) for n in range(1, n_max + 1)}
    mixed_w = {0: base.terminal_slope}
    mixed_w.update({n: float(result["mixed_w"][n][0]) for n in range(1, n_max + 1)})
    w, w0 = w_pair(traj)
    return DerivativeLadder(
        t=traj.t,
        q=traj.q,
        s_nodes=traj.s_nodes,
        w=w,
        w0=w0,
        dx_X=dx_X,
        mixed_X=mixed_X,
        dx_w0=dx_w0,
        mixed_w=mixed_w,
    )


def ladder_margins(traj: Trajectory, n_max: int) -> dict[str, dict[int, float]]:
    """Worst-case margins of the four ladder bounds for one trajectory.

    x1[n]: phi_n(t)(n!)² γ(s)/(200 γ(t)ⁿ) - |d_x^n X(s)|          (n ≥ 2)
    x2[n]: the launch-slope bounds, 1/γ(t) - |d_x w0| at n=1 and
           phi_n(t)(n!)²/(200 γ(t)ⁿ) - |d_x^n w0| for n ≥ 2
    x3[n]: phi_n(t)(n!)² (t-s)/γ(t)ⁿ⁺¹ - |d_x^n d_{x0} X(s)|      (n ≥ 0)
    x4[n]: phi_n(t)(n!)²/γ(t)ⁿ⁺¹ - |d_x^n d_{x0} w|               (n ≥ 0)
    first_x: γ(s)/γ(t) - d_x X(s) ≥ 0 with d_x X > 0 (order-one bounds)
    """
    result = _single_ladder(traj, max(n_max, 2))
    t = traj.t
    gamma_t = gamma_eval(t).value
    gamma_s = gamma_eval(traj.s_nodes).value
    margins: dict[str, dict[int, float]] = {"x1": {}, "x2": {}, "x3": {}, "x4": {}}

    first = result["dx_X"][1][:, 0]
    margins["first_x_positive"] = float(first.min())
    margins["first_x"] = float((gamma_s / gamma_t - first).min())
    margins["x2"][1] = 1.0 / gamma_t - abs(float(result["dx_w0"][1][0]))

    for n in range(2, n_max + 1):
        scale = phi_eval(n, t) * math.factorial(n) ** 2
        bound = scale * gamma_s / (LADDER_FACTOR_DIVISOR * gamma_t**n)
        margins["x1"][n] = float((bound - np.abs(result["dx_X"][n][:, 0])).min())
        margins["x2"][n] = scale / (LADDER_FACTOR_DIVISOR * gamma_t**n) - abs(
            float(result["dx_w0"][n][0])
        )
    for n in range(0, n_max + 1):
        scale = phi_eval(n, t) * math.factorial(n) ** 2
        bound = scale * (t - traj.s_nodes) / gamma_t ** (n + 1)
        margins["x3"][n] = float((bound - np.abs(result["mixed_X"][n][:, 0])).min())
        margins["x4"][n] = scale / gamma_t ** (n + 1) - abs(float(result["mixed_w"][n][0]))
    return margins
