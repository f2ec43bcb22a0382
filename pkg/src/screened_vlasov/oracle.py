"""Independent semi-Lagrangian phase-space solver for cross-validation.

Evolves the full phase-space density f(x, v, t) under

    f_t + v f_x - q phi_x f_v = 0,      (1 - d2/dx2) phi = rho

with Strang splitting: half x-advection, field solve, full v-advection,
half x-advection.  Every sweep traces grid points back along the exact
sub-flow (shifts are constant along the swept axis) and resamples by cubic
spline, with vacuum (zero) fill outside the domain.  The module shares the
grid container and field solver with the rest of the package but none of
the characteristic-flow machinery, so its densities are an independent
check of the reconstruction pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .picard import DensityHistory, RunConfig
from .screened_field import GridFunction, solve_potential, spatial_derivative
from .transport import GaussianData, theorem_envelope

V_WIDTH_FACTOR = 6.0
DEFAULT_TIME_STEP = 0.01
LEAK_THRESHOLD = 1.0e-6


def _shifted_resample(values: np.ndarray, grid: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Cubic-spline resample of each column at grid - shifts[col], zero outside.

    values has shape (len(grid), ncol); column j is interpreted as samples of
    a function that is advected by shifts[j], so the new column j holds the
    old one evaluated at grid - shifts[j] (vacuum beyond the domain ends).
    """
    spline = CubicSpline(grid, values, axis=0)
    coeff = spline.c  # shape (4, nseg, ncol)
    origins = grid[:, None] - np.asarray(shifts)[None, :]
    spacing = grid[1] - grid[0]
    segment = np.clip(
        ((origins - grid[0]) // spacing).astype(np.intp), 0, grid.size - 2
    )
    theta = origins - grid[segment]
    cols = np.arange(values.shape[1])[None, :]
    out = coeff[0][segment, cols]
    for m in range(1, 4):
        out = out * theta + coeff[m][segment, cols]
    np.copyto(out, 0.0, where=(origins < grid[0]) | (origins > grid[-1]))
    return out


@dataclass(frozen=True)
class PhaseSpaceFunction:
    """Phase-space samples on the tensor grid [-half_width, half_width] x [-v_max, v_max]."""

    half_width: float
    v_max: float
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 8:
            raise ValueError("phase-space values must be a 2D array, at least 8x8")
        if not np.all(np.isfinite(values)):
            raise ValueError("phase-space values must be finite")
        if not (self.half_width > 0.0 and self.v_max > 0.0):
            raise ValueError("domain half-widths must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.values.shape[0])

    @property
    def v(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.values.shape[1])

    def density(self) -> GridFunction:
        return GridFunction(
            self.half_width, simpson(self.values, x=self.v, axis=1)
        )

    def mass(self) -> float:
        return float(simpson(self.density().values, x=self.x))

    def min_value(self) -> float:
        return float(self.values.min())

    def boundary_fraction(self) -> float:
        """Largest |f| on the v-boundary rows relative to the overall sup."""
        sup = float(np.abs(self.values).max())
        if sup == 0.0:
            return 0.0
        edge = max(
            float(np.abs(self.values[:, 0]).max()),
            float(np.abs(self.values[:, -1]).max()),
        )
        return edge / sup


def initial_state(
    data: GaussianData,
    half_width: float,
    node_count: int,
    *,
    v_node_count: int = 257,
    v_max: float | None = None,
) -> PhaseSpaceFunction:
    """Sample the initial data on the phase-space grid (v_max = 6x thermal width)."""
    if v_max is None:
        v_max = V_WIDTH_FACTOR * data.thermal_width()
    x = np.linspace(-half_width, half_width, node_count)
    v = np.linspace(-v_max, v_max, v_node_count)
    return PhaseSpaceFunction(half_width, v_max, data.f0(x[:, None], v[None, :]))


def step(
    state: PhaseSpaceFunction, dt: float, q: int = 1, *, zero_field: bool = False
) -> PhaseSpaceFunction:
    """One Strang-split step of size dt.

    Half x-advection, screened-field solve from the mid-step density, full
    v-advection by the field kick, half x-advection.  With zero_field the
    kick is skipped and the step is pure transport.  Raises when mass leaks
    through the velocity boundary (the vacuum guard).
    """
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    if q not in (-1, 1):
        raise ValueError("charge sign q must be -1 or +1")
    x, v = state.x, state.v
    half_shift = v * (dt / 2.0)
    advected = _shifted_resample(state.values, x, half_shift)
    if not zero_field:
        rho = GridFunction(state.half_width, simpson(advected, x=v, axis=1))
        solution = solve_potential(rho)
        # back-traced origin of the velocity characteristic v' = -q phi_x
        kick = -q * dt * solution.grad.values
        advected = _shifted_resample(advected.T, v, kick).T
    advected = _shifted_resample(advected, x, half_shift)
    new = PhaseSpaceFunction(state.half_width, state.v_max, advected)
    leak = new.boundary_fraction()
    if leak > LEAK_THRESHOLD:
        raise RuntimeError(
            f"velocity-boundary mass leakage {leak:.3e} exceeds {LEAK_THRESHOLD:.0e};"
            " enlarge v_max"
        )
    return new


def advance(
    state: PhaseSpaceFunction,
    duration: float,
    dt: float,
    q: int = 1,
    *,
    zero_field: bool = False,
) -> tuple[PhaseSpaceFunction, int]:
    """Advance by duration using uniform steps of size at most dt."""
    if duration < 0.0:
        raise ValueError("duration must be nonnegative")
    if duration == 0.0:
        return state, 0
    count = max(1, math.ceil(duration / dt - 1e-12))
    size = duration / count
    for _ in range(count):
        state = step(state, size, q, zero_field=zero_field)
    return state, count


def write_density_csv(
    path: str | Path, density: GridFunction, n_max: int = 1
) -> None:
    """Density and grid derivatives in the slice-export schema (x,rho,d1rho,...)."""
    rows = [density.values] + [
        spatial_derivative(density, k).values for k in range(1, n_max + 1)
    ]
    labels = ["x", "rho"] + [f"d{k}rho" for k in range(1, n_max + 1)]
    np.savetxt(
        path,
        np.column_stack([density.x] + rows),
        delimiter=",",
        header=",".join(labels),
        comments="",
        fmt="%.17g",
    )


def decay_margins(
    densities: list[GridFunction], times: np.ndarray, n_max: int = 1
) -> list[float]:
    """Per-order minima over time of 3^n (n!)^2/10^3 - sup|d_x^n rho|*(t+1)^(n+1)."""
    return [
        min(
            (theorem_envelope(n, float(t)) - spatial_derivative(g, n).sup_norm())
            * (1.0 + float(t)) ** (n + 1)
            for t, g in zip(times, densities)
        )
        for n in range(n_max + 1)
    ]


def run_and_compare(
    cfg: RunConfig,
    data: GaussianData,
    picard_result: DensityHistory,
    *,
    dt: float = DEFAULT_TIME_STEP,
    v_node_count: int = 257,
    zero_field: bool = False,
) -> tuple[dict, list[GridFunction]]:
    """Evolve the phase-space solver over the run's time grid and compare.

    Returns the comparison report (JSON-friendly) and the oracle's density
    profiles at the time nodes.  The report tables hold, per time node, the
    sup-norm difference of the densities and of their first derivatives,
    plus the oracle's own mass drift, positivity undershoot, and decay
    margins, none of which involve the characteristic pipeline.
    """
    times = cfg.times()
    if picard_result.times.size != times.size or np.abs(
        picard_result.times - times
    ).max() > 0.0:
        raise ValueError("stored run does not span the configured time grid")
    reference = picard_result.slices[0].density
    if (
        reference.node_count != cfg.node_count
        or reference.half_width != cfg.half_width
    ):
        raise ValueError("stored run does not live on the configured space grid")

    state = initial_state(data, cfg.half_width, cfg.node_count, v_node_count=v_node_count)
    mass0 = state.mass()
    densities: list[GridFunction] = []
    density_diff: list[float] = []
    gradient_diff: list[float] = []
    masses: list[float] = []
    undershoot = 0.0
    total_steps = 0
    for j, t in enumerate(times):
        if j:
            state, count = advance(
                state, float(t - times[j - 1]), dt, cfg.q, zero_field=zero_field
            )
            total_steps += count
        rho = state.density()
        densities.append(rho)
        masses.append(state.mass())
        undershoot = min(undershoot, state.min_value())
        mine = picard_result.slices[j]
        density_diff.append(float(np.abs(rho.values - mine.density.values).max()))
        gradient_diff.append(
            float(
                np.abs(
                    spatial_derivative(rho, 1).values - mine.derivatives[1].values
                ).max()
            )
        )
    report = {
        "dt": dt,
        "steps": total_steps,
        "zero_field": zero_field,
        "times": [float(t) for t in times],
        "density_sup_diff": density_diff,
        "gradient_sup_diff": gradient_diff,
        "max_density_diff": max(density_diff),
        "max_gradient_diff": max(gradient_diff),
        "mass": masses,
        "mass_drift_rel": max(abs(m - mass0) for m in masses) / mass0 if mass0 else 0.0,
        "min_value": undershoot,
        "oracle_decay_margins": decay_margins(densities, times),
    }
    return report, densities
