"""Characteristic BVP solver and derivative-ladder tests.

Oracles: closed forms for the field-free flow, analytic screened pairs
(rho, phi) for desk-scale fields, and centered finite-difference stencils
across independently solved neighboring trajectories.
"""

import math

import numpy as np
import pytest

from screened_vlasov import characteristics as ch
from screened_vlasov.screened_field import FieldHistory, GridFunction
from screened_vlasov.weights import gamma_eval

# --- desk-scale field helpers -------------------------------------------
#
# With phi = eps * p(x) * c(s) the screened pair is rho = (1 - d^2) phi, so
# the potential (hence every field derivative) is known analytically.  The
# time factor c(s) = (1 - s/8)^3 is a cubic, which the history's not-a-knot
# cubic time spline reproduces exactly; eps keeps the damping certificate
# satisfied with a wide margin.

DESK_EPS = 2.0e-4
DESK_HALF_WIDTH = 40.0
DESK_NODES = 2049
DESK_HORIZON = 4.0


def _time_factor(s):
    return (1.0 - np.asarray(s) / 8.0) ** 3


def _desk_times():
    times = np.expm1(np.log(1.0 + DESK_HORIZON) * np.arange(9) / 8)
    times[0], times[-1] = 0.0, DESK_HORIZON
    return times


def _build_history(source_profile, eps=DESK_EPS):
    times = _desk_times()
    x = np.linspace(-DESK_HALF_WIDTH, DESK_HALF_WIDTH, DESK_NODES)
    slices = [
        GridFunction(DESK_HALF_WIDTH, eps * source_profile(x) * _time_factor(tj))
        for tj in times
    ]
    return FieldHistory.from_density_slices(times, slices, n_max=4)


def _even_source(x):
    # rho for phi = eps * exp(-x^2) * c(s): odd force
    return (3.0 - 4.0 * x**2) * np.exp(-(x**2))


def _odd_source(x):
    # rho for phi = eps * x * exp(-x^2) * c(s): even force
    return (7.0 * x - 4.0 * x**3) * np.exp(-(x**2))


@pytest.fixture(scope="module")
def desk_hist():
    return _build_history(_even_source)


@pytest.fixture(scope="module")
def zero_hist():
    return FieldHistory.zero(_desk_times(), DESK_HALF_WIDTH, 1025, n_max=4)


@pytest.fixture(scope="module")
def desk_engine(desk_hist):
    return ch.CharacteristicEngine(desk_hist, 3.0, 1)


@pytest.fixture(scope="module")
def desk_traj(desk_hist, desk_engine):
    return ch.solve_bvp(0.9, -0.3, 3.0, desk_hist, 1, engine=desk_engine, bvp_tol=1e-13)


class TestTimeGrid:
    def test_endpoints_and_monotonicity(self):
        nodes = ch.geometric_time_grid(7.3)
        assert nodes[0] == 0.0 and nodes[-1] == 7.3
        assert np.all(np.diff(nodes) > 0.0)

    def test_spacing_tracks_elapsed_time(self):
        nodes = ch.geometric_time_grid(50.0)
        gaps = np.diff(nodes)
        ratio = gaps / (1.0 + nodes[:-1])
        assert ratio.max() / ratio.min() < 1.1

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(ValueError, match="positive"):
            ch.geometric_time_grid(0.0)


class TestGatherWeights:
    def test_partition_of_unity_and_cubic_reproduction(self, rng):
        theta = rng.uniform(0.0, 7.0, 500)
        weights = ch._lagrange_gather_weights(theta)
        assert np.abs(weights.sum(axis=0) - 1.0).max() < 1e-13
        nodes = np.arange(8.0)
        interp = (weights * (nodes**3)[:, None]).sum(axis=0)
        assert np.abs(interp - theta**3).max() < 1e-12

    def test_exact_on_nodes(self):
        weights = ch._lagrange_gather_weights(np.arange(8.0))
        assert np.abs(weights - np.eye(8)).max() == 0.0


@pytest.fixture(scope="module")
def zero_traj(zero_hist):
    return ch.solve_bvp(1.7, -0.4, 3.0, zero_hist, 1)


class TestZeroFieldClosedForms:
    """Field-free flow: straight characteristics with known derivatives."""

    T = 3.0
    X_END, X_START = 1.7, -0.4

    @pytest.fixture()
    def traj(self, zero_traj):
        return zero_traj

    def test_shooting_velocity_and_path(self, traj):
        v0 = (self.X_END - self.X_START) / (1.0 + self.T)
        assert traj.v0 == pytest.approx(v0, abs=1e-10)
        assert traj.newton_iterations == 1
        assert traj.boundary_residual <= 1e-10
        path = self.X_START + v0 * (1.0 + traj.s_nodes)
        assert np.abs(traj.X - path).max() <= 1e-10

    def test_velocity_pair(self, traj):
        w, w0 = ch.w_pair(traj)
        v0 = (self.X_END - self.X_START) / (1.0 + self.T)
        assert abs(w - v0) <= 1e-10 and abs(w0 - v0) <= 1e-10

    def test_first_variational_profiles(self, traj):
        vx = ch.variational_first(traj, "x")
        assert np.abs(vx.y - (1.0 + vx.s_nodes) / (1.0 + self.T)).max() <= 1e-10
        vx0 = ch.variational_first(traj, "x0")
        assert np.abs(vx0.y - (self.T - vx0.s_nodes) / (1.0 + self.T)).max() <= 1e-10

    def test_higher_x_ladder_vanishes(self, traj):
        for n in (2, 3, 4):
            sol = ch.ladder_x(traj, n)
            assert np.abs(sol.values).max() <= 1e-10
            assert abs(sol.origin_slope) <= 1e-10

    def test_mixed_base_closed_form(self, traj):
        sol = ch.ladder_mixed(traj, 0)
        target = (self.T - sol.s_nodes) / (1.0 + self.T)
        assert np.abs(sol.values - target).max() <= 1e-10
        assert abs(sol.terminal_slope + 1.0 / (1.0 + self.T)) <= 1e-10

    def test_higher_mixed_ladder_vanishes(self, traj):
        for n in (1, 2, 3, 4):
            sol = ch.ladder_mixed(traj, n)
            assert np.abs(sol.values).max() <= 1e-10
            assert abs(sol.terminal_slope) <= 1e-10

    def test_launch_slope_scalar(self, traj):
        ladder = ch.build_ladder(traj, 4)
        assert abs(ladder.dx_w0[1] - 1.0 / (1.0 + self.T)) <= 1e-10
        assert abs(ladder.mixed_w[0] + 1.0 / (1.0 + self.T)) <= 1e-10


class TestDeskSolve:
    """Converged solves on the analytic desk-scale field."""

    def test_newton_converges_fast(self, desk_traj):
        assert desk_traj.newton_iterations <= 5
        assert desk_traj.boundary_residual <= 1e-13

    def test_coefficient_path_certified(self, desk_traj):
        path = ch.coefficient_path(desk_traj)
        assert path.certified
        assert path.sup_ratio == pytest.approx(0.17168706440770087, rel=1e-6)

    def test_frozen_scalars(self, desk_traj):
        ladder = ch.build_ladder(desk_traj, 4)
        assert desk_traj.v0 == pytest.approx(2.999373879859389e-01, rel=1e-12)
        assert ladder.dx_w0[1] == pytest.approx(1.0 / 4.001520842254123, rel=1e-10)
        frozen_dx_w0 = {
            2: 1.022233914023432e-04,
            3: 5.189632446502300e-05,
            4: -3.133235067149932e-04,
        }
        frozen_mixed_w = {
            1: -1.022233914023432e-04,
            2: -5.189632441577172e-05,
            3: 3.133235067150222e-04,
            4: -2.397970998988015e-04,
        }
        for n, value in frozen_dx_w0.items():
            assert ladder.dx_w0[n] == pytest.approx(value, rel=1e-8)
        for n, value in frozen_mixed_w.items():
            assert ladder.mixed_w[n] == pytest.approx(value, rel=1e-8)

    def test_ladder_container_shape(self, desk_traj):
        ladder = ch.build_ladder(desk_traj, 3)
        assert ladder.n_max == 3
        assert sorted(ladder.dx_X) == [1, 2, 3]
        assert sorted(ladder.mixed_X) == [0, 1, 2, 3]
        assert ladder.w == desk_traj.V[-1] and ladder.w0 == desk_traj.v0

    def test_wronskian_pairing_across_routes(self, desk_traj):
        # d_x^{n+1} w0 and -d_x^n d_{x0} w are the same scalar, computed by
        # the x-ladder origin slope and the mixed-ladder terminal slope.
        ladder = ch.build_ladder(desk_traj, 4)
        for n in (1, 2, 3):
            lhs, rhs = ladder.dx_w0[n + 1], -ladder.mixed_w[n]
            assert abs(lhs - rhs) <= 1e-12

    def test_idempotent_resolve(self, desk_hist, desk_engine, desk_traj):
        again = ch.solve_bvp(
            desk_traj.X[-1], desk_traj.x0, 3.0, desk_hist, 1,
            engine=desk_engine, bvp_tol=1e-13,
        )
        assert abs(again.V[-1] - desk_traj.V[-1]) <= 1e-13

    def test_monotone_in_terminal_position(self, desk_hist, desk_engine):
        starts = [
            ch.solve_bvp(x, -0.3, 3.0, desk_hist, 1, engine=desk_engine).X[0]
            for x in (-1.0, 0.0, 1.0, 2.0)
        ]
        assert np.all(np.diff(starts) > 0.0)


FD_DELTA = 0.05


@pytest.fixture(scope="module")
def stencils(desk_hist, desk_engine):
    offsets = np.array([-2, -1, 1, 2]) * FD_DELTA
    in_x = [
        ch.solve_bvp(0.9 + d, -0.3, 3.0, desk_hist, 1, engine=desk_engine, bvp_tol=1e-13)
        for d in offsets
    ]
    in_x0 = [
        ch.solve_bvp(0.9, -0.3 + d, 3.0, desk_hist, 1, engine=desk_engine, bvp_tol=1e-13)
        for d in offsets
    ]
    return in_x, in_x0


class TestFiniteDifferenceOracles:
    """Centered stencils across independently solved trajectories."""

    DELTA = FD_DELTA
    FD5 = np.array([1.0, -8.0, 8.0, -1.0])
    SECOND5 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])

    def _fd(self, samples):
        return sum(w * s for w, s in zip(self.FD5, samples)) / (12.0 * self.DELTA)

    def test_first_variational_vs_fd(self, desk_traj, stencils):
        in_x, in_x0 = stencils
        fd_x = self._fd([tr.X for tr in in_x])
        vx = ch.variational_first(desk_traj, "x")
        assert np.abs(fd_x - vx.evaluate(desk_traj.s_nodes)[0]).max() <= 1e-6
        fd_x0 = self._fd([tr.X for tr in in_x0])
        vx0 = ch.variational_first(desk_traj, "x0")
        assert np.abs(fd_x0 - vx0.evaluate(desk_traj.s_nodes)[0]).max() <= 1e-6

    def test_velocity_sensitivities_vs_fd(self, desk_traj, stencils):
        in_x, in_x0 = stencils
        ladder = ch.build_ladder(desk_traj, 4)
        fd_w0 = self._fd([tr.v0 for tr in in_x])
        assert abs(fd_w0 - ladder.dx_w0[1]) <= 1e-6
        fd_w = self._fd([tr.V[-1] for tr in in_x0])
        assert abs(fd_w - ladder.mixed_w[0]) <= 1e-6
        assert abs(fd_w0 + fd_w) <= 1e-6  # Wronskian pairing seen by FD alone

    def test_second_x_derivative_vs_direct_second_difference(
        self, desk_traj, stencils
    ):
        in_x, _ = stencils
        paths = [in_x[0].X, in_x[1].X, desk_traj.X, in_x[2].X, in_x[3].X]
        fd2 = sum(w * p for w, p in zip(self.SECOND5, paths)) / (12.0 * self.DELTA**2)
        sol = ch.ladder_x(desk_traj, 2)
        assert np.abs(fd2 - sol.values).max() <= 1e-5

    def test_ladder_orders_vs_fd_of_lower_orders(self, desk_traj, stencils):
        in_x, _ = stencils
        ladders = [ch.build_ladder(tr, 3) for tr in in_x]
        center = ch.build_ladder(desk_traj, 3)
        for n in (2, 3):
            fd_profile = self._fd([l.dx_X[n - 1] for l in ladders])
            assert np.abs(fd_profile - center.dx_X[n]).max() <= 1e-5
            fd_scalar = self._fd([l.dx_w0[n - 1] for l in ladders]) if n > 1 else None
            assert abs(fd_scalar - center.dx_w0[n]) <= 1e-5

    def test_mixed_orders_vs_fd(self, desk_traj, stencils):
        in_x, _ = stencils
        ladders = [ch.build_ladder(tr, 3) for tr in in_x]
        center = ch.build_ladder(desk_traj, 3)
        for n in (1, 2, 3):
            fd_profile = self._fd([l.mixed_X[n - 1] for l in ladders])
            assert np.abs(fd_profile - center.mixed_X[n]).max() <= 1e-5
            fd_scalar = self._fd([l.mixed_w[n - 1] for l in ladders])
            assert abs(fd_scalar - center.mixed_w[n]) <= 1e-5

    def test_mixed_cross_difference(self, desk_hist, desk_engine, desk_traj):
        d = self.DELTA
        corner = {}
        for sx in (-1, 1):
            for s0 in (-1, 1):
                tr = ch.solve_bvp(
                    0.9 + sx * d, -0.3 + s0 * d, 3.0, desk_hist, 1,
                    engine=desk_engine, bvp_tol=1e-13,
                )
                corner[sx, s0] = tr.X
        cross = (corner[1, 1] - corner[1, -1] - corner[-1, 1] + corner[-1, -1]) / (
            4.0 * d * d
        )
        sol = ch.ladder_mixed(desk_traj, 1)
        assert np.abs(cross - sol.values).max() <= 1e-5


class TestLadderBounds:
    """Bound certificates with the stated constants (200; 1; 1)."""

    def test_margins_on_desk_field(self, desk_hist, desk_engine):
        for x, x0 in [(0.9, -0.3), (-1.4, 0.8), (2.2, -2.0), (0.1, 1.1)]:
            traj = ch.solve_bvp(x, x0, 3.0, desk_hist, 1, engine=desk_engine)
            margins = ch.ladder_margins(traj, 4)
            assert margins["first_x_positive"] > 0.0
            assert margins["first_x"] >= -1e-12
            for family in ("x1", "x2", "x3", "x4"):
                worst = min(margins[family].values())
                assert worst >= -1e-12, (x, x0, family, margins[family])

    def test_first_order_bounds_random_endpoints(self, desk_hist, rng):
        # batched engine route across random horizons and endpoint pairs
        for t in rng.uniform(0.5, DESK_HORIZON, 10):
            engine = ch.CharacteristicEngine(desk_hist, t, 1)
            x = rng.uniform(-3.0, 3.0, 10)
            x0 = rng.uniform(-3.0, 3.0, 10)
            res = engine.solve(x, x0, record=True)
            gamma_t = gamma_eval(t).value
            gamma_s = gamma_eval(engine.s_nodes).value
            growth = res["z"] / res["z_t"]
            assert growth.min() > 0.0
            assert (gamma_s[:, None] / gamma_t - growth).min() >= -1e-8
            ladder = engine.ladder(res, 1)
            decay = ladder["mixed_X"][0]
            assert decay.min() >= -1e-8
            bound = (t - engine.s_nodes)[:, None] / gamma_t
            assert (bound - decay).min() >= -1e-8

    def test_first_order_bounds_comparison_route(self, desk_hist, rng):
        for _ in range(8):
            t = float(rng.uniform(0.5, DESK_HORIZON))
            traj = ch.solve_bvp(
                float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)), t, desk_hist, 1
            )
            gamma_t = gamma_eval(t).value
            vx = ch.variational_first(traj, "x")
            assert vx.y.min() > 0.0
            assert (gamma_eval(vx.s_nodes).value / gamma_t - vx.y).min() >= -1e-8
            vx0 = ch.variational_first(traj, "x0")
            assert vx0.y.min() >= -1e-8
            assert ((t - vx0.s_nodes) / gamma_t - vx0.y).min() >= -1e-8


class TestSymmetries:
    def test_even_source_mirror_same_charge(self, desk_hist):
        a = ch.solve_bvp(0.9, -0.3, 3.0, desk_hist, 1, bvp_tol=1e-13)
        b = ch.solve_bvp(-0.9, 0.3, 3.0, desk_hist, 1, bvp_tol=1e-13)
        assert abs(a.v0 + b.v0) <= 1e-12
        assert np.abs(a.X + b.X).max() <= 1e-12

    def test_odd_source_mirror_flips_charge(self):
        hist = _build_history(_odd_source)
        a = ch.solve_bvp(0.9, -0.3, 3.0, hist, 1, bvp_tol=1e-13)
        b = ch.solve_bvp(-0.9, 0.3, 3.0, hist, -1, bvp_tol=1e-13)
        assert abs(a.v0 + b.v0) <= 1e-12
        assert np.abs(a.X + b.X).max() <= 1e-12
        la, lb = ch.build_ladder(a, 3), ch.build_ladder(b, 3)
        for n in (1, 2, 3):
            assert abs(abs(la.dx_w0[n]) - abs(lb.dx_w0[n])) <= 1e-12
            assert abs(abs(la.mixed_w[n]) - abs(lb.mixed_w[n])) <= 1e-12


class TestBatchEngine:
    def test_batch_matches_single_solves(self, desk_hist, desk_engine):
        xs = np.array([0.9, -1.4, 2.2, 0.1])
        x0s = np.array([-0.3, 0.8, -2.0, 1.1])
        batch = desk_engine.solve(xs, x0s, record=True, bvp_tol=1e-13)
        blad = desk_engine.ladder(batch, 4)
        for i in range(xs.size):
            single = ch.solve_bvp(
                xs[i], x0s[i], 3.0, desk_hist, 1, engine=desk_engine, bvp_tol=1e-13
            )
            slad = ch._single_ladder(single, 4)
            assert abs(batch["v0"][i] - single.v0) <= 1e-14
            assert np.abs(batch["X"][:, i] - single.X).max() <= 1e-14
            for n in (2, 3, 4):
                assert (
                    np.abs(blad["dx_X"][n][:, i] - slad["dx_X"][n][:, 0]).max()
                    <= 1e-14
                )
                assert abs(blad["mixed_w"][n][i] - slad["mixed_w"][n][0]) <= 1e-14

    def test_warm_start_reuses_previous_velocities(self, desk_engine):
        xs = np.linspace(-2.0, 2.0, 50)
        x0s = np.linspace(-1.0, 1.0, 50)
        cold = desk_engine.solve(xs, x0s)
        assert cold["iterations"] >= 2
        warm = desk_engine.solve(xs, x0s, v0_init=cold["v0"])
        assert warm["iterations"] == 1
        assert np.abs(warm["v0"] - cold["v0"]).max() <= 1e-12

    def test_warm_start_shape_mismatch(self, desk_engine):
        with pytest.raises(ValueError, match="v0_init"):
            desk_engine.solve(np.zeros(4), np.zeros(4), v0_init=np.zeros(3))

    def test_edge_pinned_target_tolerates_trial_overshoot(self, desk_engine):
        # a warm start carried over from a different field overshoots the
        # grid edge on the trial sweeps; the solve must still converge
        x = np.array([DESK_HALF_WIDTH])
        x0 = np.array([0.5])
        rough = (x - x0) / 4.0 + 0.02
        solved = desk_engine.solve(x, x0, v0_init=rough)
        assert solved["residual"].max() <= ch.BVP_TOLERANCE

    def test_field_lookup_continues_edge_value(self, desk_engine):
        edge = desk_engine._gather(0, 0, np.array([DESK_HALF_WIDTH]))
        beyond = desk_engine._gather(0, 0, np.array([DESK_HALF_WIDTH + 0.7]))
        assert beyond[0] == edge[0]

    def test_step_scale_refinement_consistency(self, desk_hist):
        coarse = ch.CharacteristicEngine(desk_hist, 3.0, 1, step_scale=0.05)
        fine = ch.CharacteristicEngine(desk_hist, 3.0, 1, step_scale=0.02)
        xs = np.linspace(-2.0, 2.0, 20)
        x0s = np.linspace(1.0, -1.0, 20)
        a = coarse.solve(xs, x0s)
        b = fine.solve(xs, x0s)
        assert np.abs(a["v0"] - b["v0"]).max() <= 1e-9
        assert np.abs(a["z_t"] / b["z_t"] - 1.0).max() <= 1e-9


class TestErrorPaths:
    def test_focusing_field_degenerate_jacobian(self):
        hist = _build_history(_even_source, eps=0.5)
        with pytest.raises(RuntimeError, match="positivity"):
            ch.solve_bvp(0.0, 0.0, 4.0, hist, -1)

    def test_trajectory_leaving_domain(self, desk_hist):
        target = 1.3 * DESK_HALF_WIDTH + 2.0
        with pytest.raises(RuntimeError, match="domain"):
            ch.solve_bvp(target, 0.0, 3.0, desk_hist, 1)

    def test_newton_exhaustion(self, desk_hist):
        with pytest.raises(RuntimeError, match="Newton"):
            ch.solve_bvp(0.9, -0.3, 3.0, desk_hist, 1, max_iter=1)

    def test_uncertified_path_rejected_by_variational(self):
        hist = _build_history(_even_source, eps=0.1)
        traj = ch.solve_bvp(3.0, 2.5, 4.0, hist, 1)
        assert traj.newton_iterations <= 10  # shooting itself still works
        with pytest.raises(ValueError, match="admissible"):
            ch.variational_first(traj, "x")

    def test_engine_argument_validation(self, desk_hist):
        with pytest.raises(ValueError, match="charge"):
            ch.CharacteristicEngine(desk_hist, 3.0, 2)
        with pytest.raises(ValueError, match="span"):
            ch.CharacteristicEngine(desk_hist, DESK_HORIZON + 1.0, 1)

    def test_ladder_order_guards(self, desk_traj):
        with pytest.raises(ValueError, match="order 2"):
            ch.ladder_x(desk_traj, 1)
        with pytest.raises(ValueError, match="nonnegative"):
            ch.ladder_mixed(desk_traj, -1)
        with pytest.raises(ValueError, match="cache"):
            desk_traj.engine.ladder(desk_traj.stored, 8)
        with pytest.raises(ValueError, match="'x' or 'x0'"):
            ch.variational_first(desk_traj, "t")


class TestTrajectoryDump:
    def test_csv_round_trip(self, desk_traj, tmp_path):
        target = tmp_path / "trajectory.csv"
        desk_traj.to_csv(target)
        table = np.loadtxt(target, delimiter=",", skiprows=1)
        header = target.read_text().splitlines()[0]
        assert header == "s,X,V"
        assert np.array_equal(table[:, 0], desk_traj.s_nodes)
        assert np.array_equal(table[:, 1], desk_traj.X)
        assert np.array_equal(table[:, 2], desk_traj.V)
