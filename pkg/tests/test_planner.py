import math

import numpy as np
import pytest
from oracles import constant_control_oracle, cost_by_summation

from chanceplan.collision import Body, CollisionQuery, bound_collision_probability
from chanceplan.dynamics import MODELS, BeliefState, NoiseSpec
from chanceplan.planner import (
    CONVERGED,
    INFEASIBLE_RELAXED,
    ITERATION_CAPPED,
    ControlBounds,
    CostSpec,
    HorizonPlan,
    ObstacleForecast,
    evaluate_cost,
    plan,
    shift_warm_start,
)
from chanceplan.sim import PlannerSettings, scenario_position_exchange

UNI = MODELS["unicycle"]
DI = MODELS["double-integrator-3d"]
BOUNDS = ControlBounds.unicycle()
COST = PlannerSettings.for_model("unicycle").cost
NOISE = NoiseSpec.unicycle()


def belief(x, y, th, pos_var=1e-4, th_var=1e-4):
    return BeliefState([x, y, th], np.diag([pos_var, pos_var, th_var]))


# -- obstacle-free behaviour ---------------------------------------------------------------


@pytest.mark.parametrize("cost", [CostSpec(), COST])
def test_free_plan_matches_grid_oracle(cost):
    b = belief(0.0, 0.0, 0.0)
    p = plan(b, [1.0, 0.0], [], 0.1, BOUNDS, cost, L=10, dt=0.1, R=NOISE.R)
    j_grid, states_grid = constant_control_oracle(UNI, b.mean, np.array([1.0, 0.0]), cost, BOUNDS, 10, 0.1)
    assert np.linalg.norm(p.states[-1, :2] - states_grid[-1, :2]) < 0.05
    assert p.cost <= j_grid + 1e-9
    assert np.abs(p.states[:, 1]).max() < 0.01


def test_free_plan_oracle_off_axis_goal():
    b = belief(0.2, -0.1, 0.4)
    goal = np.array([0.3, 0.9])
    p = plan(b, goal, [], 0.1, BOUNDS, COST, L=10, dt=0.1, R=NOISE.R)
    _, states_grid = constant_control_oracle(UNI, b.mean, goal, COST, BOUNDS, 10, 0.1)
    assert np.linalg.norm(p.states[-1, :2] - states_grid[-1, :2]) < 0.05


def test_goal_at_current_position_is_fixed_point():
    for cost in (CostSpec(), COST):
        p = plan(belief(0.4, 0.3, 1.0), [0.4, 0.3], [], 0.1, BOUNDS, cost, L=10, dt=0.1)
        np.testing.assert_array_equal(p.controls, np.zeros((10, 2)))
        assert p.cost == 0.0
        assert p.solver_status == CONVERGED


def test_states_consistent_with_controls():
    obstacles = [ObstacleForecast.static(Body.make([0.5, 0.05], 0.01 * np.eye(2), 0.2))]
    p = plan(belief(0.0, 0.0, 0.0), [2.0, 0.0], obstacles, 0.1, BOUNDS, COST, L=10, dt=0.1, R=NOISE.R)
    x = p.states[0]
    for l in range(10):
        x = UNI.step(x, p.controls[l], 0.1)
        d = x - p.states[l + 1]
        d[2] = (d[2] + math.pi) % (2 * math.pi) - math.pi
        assert np.abs(d).max() < 1e-9
    assert p.margins.shape == (10, 1)
    assert p.states.shape == (11, 3)
    assert p.covariances.shape == (11, 3, 3)


# -- obstacles ----------------------------------------------------------------------------


def test_blocking_obstacle_is_avoided():
    # the straight plan would end 0.3 m from the obstacle center, inside the
    # 0.4 m contact distance; an obstacle much closer leaves no room to get
    # around within one horizon and the best plan is to stop short
    obstacles = [ObstacleForecast.static(Body.make([0.8, 0.0], 0.005 * np.eye(2), 0.2))]
    p = plan(belief(0.0, 0.0, 0.0), [3.0, 0.0], obstacles, 0.1, BOUNDS, COST, L=10, dt=0.1, R=NOISE.R, robot_radius=0.2)
    assert p.solver_status != INFEASIBLE_RELAXED
    assert p.margins.min() >= -1e-6
    assert np.abs(p.states[:, 1]).max() > 0.02


def test_blocking_obstacle_double_integrator():
    obstacles = [ObstacleForecast.static(Body.make([1.0, 0.0, 1.0], 0.005 * np.eye(3), 0.2))]
    b = BeliefState(np.array([0.0, 0.0, 1.0, 0.5, 0.0, 0.0]), 1e-4 * np.eye(6))
    p = plan(b, [3.0, 0.0, 1.0], obstacles, 0.1, ControlBounds.double_integrator(), PlannerSettings.for_model("double-integrator-3d").cost,
             L=20, dt=0.1, R=1e-4 * np.eye(6), robot_radius=0.2)
    assert p.margins.min() >= -1e-6
    assert np.abs(p.states[:, 1:3] - [0.0, 1.0]).max() > 0.02


def test_table1_geometry_cross_module_consistency():
    # robot covariance stays diag(0.04, 0.04) along the horizon: no process
    # noise and no heading uncertainty to couple into position
    sigma = np.diag([0.04, 0.04])
    obstacle = Body.make([0.0, 0.0], None, 0.2)
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(20):
        start = rng.uniform(-1.2, 1.2, 2)
        b = BeliefState([start[0], start[1], rng.uniform(-math.pi, math.pi)], np.diag([0.04, 0.04, 0.0]))
        eps = float(rng.uniform(0.05, 0.5))
        p = plan(b, rng.uniform(-1.5, 1.5, 2), [ObstacleForecast.static(obstacle)], eps, BOUNDS, COST, L=10, dt=0.1, robot_radius=0.2)
        for l in range(10):
            np.testing.assert_allclose(p.covariances[l + 1][:2, :2], sigma, atol=1e-15)
            q = CollisionQuery(Body.make(p.states[l + 1, :2], sigma, 0.2), obstacle)
            prob = bound_collision_probability(q).value
            if abs(prob - eps) > 1e-9 and abs(p.margins[l, 0]) > 1e-9:
                assert (p.margins[l, 0] >= 0.0) == (prob <= eps)
                checked += 1
    assert checked > 150


def test_infeasible_problem_returns_relaxed_plan():
    # robot already overlapping a near-certain obstacle: nothing is feasible
    obstacles = [ObstacleForecast.static(Body.make([0.05, 0.0], 1e-4 * np.eye(2), 0.3))]
    p = plan(belief(0.0, 0.0, 0.0), [2.0, 0.0], obstacles, 0.1, BOUNDS, COST, L=10, dt=0.1, robot_radius=0.2)
    assert p.solver_status == INFEASIBLE_RELAXED
    assert p.min_margin < 0.0
    assert not p.hold_feasible


def test_bounding_volume_method():
    ob = Body.make([0.8, 0.0], 0.01 * np.eye(2), 0.2)
    p = plan(belief(0.0, 0.0, 0.0), [3.0, 0.0], [ObstacleForecast.static(ob)], 0.1, BOUNDS, COST, L=10, dt=0.1,
             R=NOISE.R, robot_radius=0.2, method="bounding-volume")
    assert p.margins.min() >= -1e-6
    # the inflated-sphere test must hold at every planned step
    for l in range(1, 11):
        sr = math.sqrt(np.linalg.eigvalsh(p.covariances[l][:2, :2]).max())
        reach = 0.4 + 3.0 * (sr + 0.1)
        # margins were built from the seed's covariances; allow a small slack
        assert np.linalg.norm(p.states[l, :2] - ob.center.mean) >= reach - 0.02


def test_control_bounds_respected_exactly():
    rng = np.random.default_rng(1)
    for _ in range(30):
        bounds = ControlBounds.unicycle(v_max=float(rng.uniform(0.1, 1.0)), omega_max=float(rng.uniform(0.2, 2.0)))
        obstacles = [
            ObstacleForecast.static(Body.make(rng.uniform(-1.5, 1.5, 2), rng.uniform(0.001, 0.02) * np.eye(2), rng.uniform(0.05, 0.3)))
            for _ in range(int(rng.integers(0, 4)))
        ]
        p = plan(belief(*rng.uniform(-1, 1, 2), rng.uniform(-3, 3)), rng.uniform(-2, 2, 2), obstacles, 0.1, bounds, COST,
                 L=10, dt=0.1, R=NOISE.R, robot_radius=0.1)
        assert np.all(p.controls >= bounds.lower) and np.all(p.controls <= bounds.upper)
        assert p.solver_status in (CONVERGED, ITERATION_CAPPED, INFEASIBLE_RELAXED)


def test_accepted_iterates_never_increase_objective():
    obstacles = [ObstacleForecast.static(Body.make([0.6, 0.1], 0.005 * np.eye(2), 0.2))]
    p = plan(belief(0.0, 0.0, 0.0), [3.0, 0.0], obstacles, 0.1, BOUNDS, COST, L=10, dt=0.1, R=NOISE.R, robot_radius=0.2)
    assert p.trace
    for rho, before, after in p.trace:
        assert after <= before


def test_deterministic():
    obstacles = [ObstacleForecast.static(Body.make([0.6, 0.1], 0.005 * np.eye(2), 0.2))]
    args = (belief(0.0, 0.0, 0.0), [3.0, 0.0], obstacles, 0.1, BOUNDS, COST)
    warm = plan(*args, L=10, dt=0.1, R=NOISE.R)
    a = plan(*args, L=10, dt=0.1, R=NOISE.R, warm_start=warm)
    b = plan(*args, L=10, dt=0.1, R=NOISE.R, warm_start=warm)
    np.testing.assert_array_equal(a.controls, b.controls)
    np.testing.assert_array_equal(a.margins, b.margins)
    assert a.cost == b.cost


def test_input_validation():
    b = belief(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        plan(b, [1.0, 0.0], [], 0.1, BOUNDS, COST, L=0)
    with pytest.raises(ValueError):
        plan(b, [1.0, 0.0], [], 1.0, BOUNDS, COST)
    with pytest.raises(ValueError):
        plan(b, [1.0, 0.0, 0.0], [], 0.1, BOUNDS, COST)
    with pytest.raises(ValueError, match="malformed forecast"):
        ObstacleForecast(np.zeros((3, 2)), np.zeros((2, 2, 2)), 0.2)
    with pytest.raises(ValueError, match="malformed forecast"):
        ObstacleForecast(np.full((3, 2), np.nan), np.zeros((3, 2, 2)), 0.2)
    with pytest.raises(ValueError, match="malformed forecast"):
        plan(b, [1.0, 0.0], [ObstacleForecast(np.zeros((1, 3)), np.eye(3)[None], 0.2)], 0.1, BOUNDS, COST)
    with pytest.raises(ValueError):
        ControlBounds(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        CostSpec(0.0, 0.0, 0.0)


def test_short_forecast_holds_last_belief():
    f = ObstacleForecast(np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros((2, 2, 2)), 0.2)
    np.testing.assert_array_equal(f.at(5)[0], [1.0, 0.0])
    np.testing.assert_array_equal(f.at(0)[0], [0.0, 0.0])


# -- warm start ---------------------------------------------------------------------------


def _plan_from(controls, x0=(0.0, 0.0, 0.0)):
    controls = np.asarray(controls, dtype=float)
    states = UNI.rollout(np.array(x0), controls, 0.1)
    covs = np.repeat(np.eye(3)[None], len(controls) + 1, axis=0)
    return HorizonPlan(controls, states, covs, np.zeros((len(controls), 0)), 0.0, CONVERGED)


def test_shift_constant_controls_unchanged():
    prev = _plan_from(np.tile([0.3, 0.2], (10, 1)))
    seed = shift_warm_start(prev)
    np.testing.assert_array_equal(seed.controls, prev.controls)
    np.testing.assert_allclose(seed.states[0], prev.states[1])


def test_shift_single_step():
    prev = _plan_from([[0.3, -0.4]])
    np.testing.assert_array_equal(shift_warm_start(prev).controls, [[0.3, -0.4]])


def test_shift_moves_controls_and_rerolls():
    u = np.column_stack([np.linspace(0.1, 0.5, 10), np.linspace(-1, 1, 10)])
    prev = _plan_from(u)
    b = belief(0.5, 0.5, 0.2)
    seed = shift_warm_start(prev, b)
    np.testing.assert_array_equal(seed.controls[:-1], u[1:])
    np.testing.assert_array_equal(seed.controls[-1], u[-1])
    np.testing.assert_allclose(seed.states, UNI.rollout(b.mean, seed.controls, 0.1))


def test_shifted_seed_cost_on_two_robot_scenario():
    cfg = scenario_position_exchange(2)
    r1, r2 = cfg.robots
    other = ObstacleForecast.static(Body.make(r2.start[:2], 0.02 * np.eye(2), r2.radius))
    b = BeliefState(r1.start, np.diag([0.02, 0.02, 1e-3]))
    p = plan(b, r1.goal, [other], 0.1, BOUNDS, COST, L=10, dt=0.1, R=NOISE.R, robot_radius=r1.radius)
    nxt = BeliefState(p.states[1], b.cov)
    seed = shift_warm_start(p, nxt)
    assert evaluate_cost(seed, r1.goal, COST) <= 1.5 * p.cost


# -- cost ------------------------------------------------------------------------------


def test_cost_examples():
    at_goal = _plan_from(np.zeros((5, 2)), x0=(1.0, 2.0, 0.0))
    assert evaluate_cost(at_goal, [1.0, 2.0], CostSpec()) == 0.0
    one = _plan_from(np.zeros((1, 2)), x0=(1.0, 0.0, 0.0))
    assert evaluate_cost(one, [0.0, 0.0], CostSpec(position=1.0, control=0.0, terminal=0.0)) == 1.0


def test_cost_matches_independent_summation():
    rng = np.random.default_rng(2)
    for _ in range(100):
        L = int(rng.integers(1, 15))
        u = rng.uniform(-1, 1, (L, 2))
        p = _plan_from(u, x0=tuple(rng.normal(size=3)))
        goal = rng.normal(size=2)
        w = rng.uniform(0, 5, 3)
        spec = CostSpec(position=w[0], control=w[1], terminal=w[2])
        expected = cost_by_summation(p.states, u, goal, w[0], w[1], w[2], 2)
        assert evaluate_cost(p, goal, spec) == pytest.approx(expected, rel=1e-12)
    di_u = rng.uniform(-1, 1, (6, 3))
    states = DI.rollout(rng.normal(size=6), di_u, 0.1)
    p = HorizonPlan(di_u, states, np.zeros((7, 6, 6)), np.zeros((6, 0)), 0.0, CONVERGED)
    goal = rng.normal(size=3)
    assert evaluate_cost(p, goal, CostSpec()) == pytest.approx(cost_by_summation(states, di_u, goal, 1.0, 0.1, 5.0, 3), rel=1e-12)


def test_heading_term_zero_at_goal_and_when_facing_it():
    spec = CostSpec(position=0.0, control=0.0, terminal=0.0, heading=1.0)
    facing = _plan_from(np.zeros((1, 2)), x0=(0.0, 0.0, math.pi / 2))
    assert evaluate_cost(facing, [0.0, 2.0], spec) == pytest.approx(0.0, abs=1e-15)
    away = _plan_from(np.zeros((1, 2)), x0=(0.0, 0.0, -math.pi / 2))
    assert evaluate_cost(away, [0.0, 2.0], spec) == pytest.approx(4.0)
    assert evaluate_cost(away, [0.0, 0.0], spec) == 0.0
