"""Closed-loop multi-robot simulation.

Every tick each robot fuses a noisy pose measurement into its EKF, receives
the other robots' previous plans (pose and covariance per look-ahead step),
plans against them and the static obstacles, and applies its first control to
the ground truth with process noise.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .collision import Body
from .dynamics import MODELS, BeliefState, NoiseSpec, ekf_predict, ekf_update, propagate_horizon
from .planner import (
    INFEASIBLE_RELAXED,
    ControlBounds,
    CostSpec,
    HorizonPlan,
    ObstacleForecast,
    SolverOptions,
    plan,
    shift_warm_start,
)

MODEL_NAMES = tuple(MODELS)
ARRIVED = "arrived"
# filter measurement covariance floor, used when the noise scale is 0
Q_FLOOR = 1e-9


@dataclass(frozen=True)
class RobotSpec:
    id: str
    start: np.ndarray  # unicycle (x, y, theta[rad]); double integrator (x, y, z)
    goal: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        if not self.radius > 0.0:
            raise ValueError(f"robot {self.id}: radius must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    model: str
    robots: tuple[RobotSpec, ...]
    static_obstacles: tuple[Body, ...]
    eps: float
    measurement_noise: NoiseSpec
    noise_scale: float
    dt: float
    max_duration: float
    goal_tolerance: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "robots", tuple(self.robots))
        object.__setattr__(self, "static_obstacles", tuple(self.static_obstacles))
        self.validate()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODEL_NAMES}")
        if not self.robots:
            raise ValueError("scenario needs at least one robot")
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ValueError("robot ids must be distinct")
        m = MODELS[self.model]
        for r in self.robots:
            start_dim = 3 if self.model == "unicycle" else m.npos
            if r.start.size != start_dim or r.goal.size != m.npos:
                raise ValueError(f"robot {r.id}: start/goal dimensions do not match model {self.model}")
        for ob in self.static_obstacles:
            if ob.center.dim != m.npos:
                raise ValueError("static obstacle dimension does not match the model")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.max_duration > 0.0:
            raise ValueError("max_duration must be positive")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be nonnegative")
        if self.goal_tolerance < 0.0:
            raise ValueError("goal_tolerance must be nonnegative")
        noise = self.measurement_noise
        if noise.R.shape != (m.nx, m.nx) or noise.Q.shape != (m.measurement_matrix().shape[0],) * 2:
            raise ValueError("noise covariance shapes do not match the model")

    @property
    def motion_model(self):
        return MODELS[self.model]


@dataclass(frozen=True)
class PlannerSettings:
    horizon: int
    bounds: ControlBounds
    cost: CostSpec
    method: str = "bound"
    k_sigma: float = 3.0
    options: SolverOptions = SolverOptions()

    @classmethod
    def for_model(cls, model: str, method: str = "bound") -> "PlannerSettings":
        if model == "unicycle":
            return cls(10, ControlBounds.unicycle(), CostSpec(control=0.02, terminal=10.0, heading=5.0), method)
        return cls(20, ControlBounds.double_integrator(), CostSpec(velocity=2.0), method)


@dataclass(frozen=True)
class TrajectoryMessage:
    sender: str
    tick: int  # tick of the first entry
    means: np.ndarray  # (L + 1, nx)
    covs: np.ndarray  # (L + 1, nx, nx)

    def forecast(self, tick: int, radius: float, npos: int) -> ObstacleForecast:
        """Obstacle forecast whose step 0 is ``tick``."""
        offset = min(max(tick - self.tick, 0), self.means.shape[0] - 1)
        return ObstacleForecast(self.means[offset:, :npos], self.covs[offset:, :npos, :npos], radius)


@dataclass(frozen=True)
class TickRecord:
    tick: int
    robot: str
    truth: np.ndarray
    belief_mean: np.ndarray
    belief_cov: np.ndarray
    control: np.ndarray
    min_margin: float
    status: str


@dataclass
class RunLog:
    dt: float = 0.1
    records: list[TickRecord] = field(default_factory=list)
    messages_received: list[int] = field(default_factory=list)

    def append(self, rec: TickRecord) -> None:
        if self.records and rec.tick < self.records[-1].tick:
            raise ValueError("log ticks must be nondecreasing")
        self.records.append(rec)

    def robots(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.robot, None)
        return list(seen)

    def by_robot(self, robot: str) -> list[TickRecord]:
        return [r for r in self.records if r.robot == robot]


@dataclass
class RunMetrics:
    d: float  # minimum center distance over ticks and pairs, robots and obstacles
    d_robots: float
    d_obstacles: float
    l: dict[str, float]
    T: dict[str, float]
    reached: dict[str, bool]
    collisions: int
    success: bool
    plan_time_ms: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def mean_length(self) -> float:
        return float(np.mean(list(self.l.values())))

    @property
    def mean_duration(self) -> float:
        return float(np.mean(list(self.T.values())))

    @property
    def mean_plan_time_ms(self) -> float:
        if not self.plan_time_ms:
            return math.nan
        return float(np.mean([m for m, _ in self.plan_time_ms.values()]))


def compute_metrics(log: RunLog, cfg: ScenarioConfig) -> RunMetrics:
    """d, l, T and collision counts from the ground truth in ``log``."""
    npos = cfg.motion_model.npos
    radii = {r.id: r.radius for r in cfg.robots}
    goals = {r.id: r.goal for r in cfg.robots}
    ticks: dict[int, dict[str, np.ndarray]] = {}
    for rec in log.records:
        ticks.setdefault(rec.tick, {})[rec.robot] = rec.truth[:npos]
    ids = [r.id for r in cfg.robots]
    d_rob = d_obs = math.inf
    collisions = 0
    length = {i: 0.0 for i in ids}
    first_goal: dict[str, int | None] = {i: None for i in ids}
    prev: dict[str, np.ndarray] = {}
    for k in sorted(ticks):
        pos = ticks[k]
        for a_idx, a in enumerate(ids):
            if a not in pos:
                continue
            p = pos[a]
            if a in prev:
                length[a] += float(np.linalg.norm(p - prev[a]))
            prev[a] = p
            if first_goal[a] is None and float(np.linalg.norm(p - goals[a])) <= cfg.goal_tolerance:
                first_goal[a] = k
            for b in ids[a_idx + 1 :]:
                if b in pos:
                    dist = float(np.linalg.norm(p - pos[b]))
                    d_rob = min(d_rob, dist)
                    collisions += dist < radii[a] + radii[b]
            for ob in cfg.static_obstacles:
                dist = float(np.linalg.norm(p - ob.center.mean))
                d_obs = min(d_obs, dist)
                collisions += dist < radii[a] + ob.radius
    last = max(ticks) if ticks else 0
    duration = {i: (first_goal[i] if first_goal[i] is not None else last) * cfg.dt for i in ids}
    reached = {i: first_goal[i] is not None for i in ids}
    d = min(d_rob, d_obs)
    return RunMetrics(
        d=d,
        d_robots=d_rob,
        d_obstacles=d_obs,
        l=length,
        T=duration,
        reached=reached,
        collisions=collisions,
        success=all(reached.values()) and collisions == 0,
    )


def _initial_belief(spec: RobotSpec, cfg: ScenarioConfig, q: np.ndarray) -> BeliefState:
    model = cfg.motion_model
    if cfg.model == "unicycle":
        mean = spec.start.copy()
    else:
        mean = np.concatenate((spec.start, np.zeros(3)))
    h = model.measurement_matrix()
    cov = h.T @ q @ h + np.diag(np.diag(cfg.measurement_noise.R))
    return BeliefState(mean, cov)


def _brake(model_name: str, u: np.ndarray, belief: BeliefState, bounds: ControlBounds, dt: float) -> np.ndarray:
    u = u.copy()
    if model_name == "unicycle":
        u[0] = max(0.0, bounds.lower[0])
        return u
    return bounds.clip(-belief.mean[3:] / dt)


def _stationary_message(sender: str, tick: int, belief: BeliefState, L: int) -> TrajectoryMessage:
    means = np.repeat(belief.mean[None, :], L + 1, axis=0)
    covs = np.repeat(belief.cov[None, :, :], L + 1, axis=0)
    return TrajectoryMessage(sender, tick, means, covs)


def _braked_message(sender: str, tick: int, belief: BeliefState, planned: np.ndarray, model_name: str,
                    bounds: ControlBounds, L: int, dt: float, R: np.ndarray) -> tuple[np.ndarray, TrajectoryMessage]:
    """First braking control plus the trajectory others should expect while
    the robot keeps braking for the whole horizon. A braking unicycle keeps
    its planned turn rate so it can rotate in place."""
    model = MODELS[model_name]
    states = [belief.mean]
    controls = []
    for l in range(L):
        seed = planned if l == 0 else np.zeros(model.nu)
        u = _brake(model_name, seed, BeliefState(states[-1], belief.cov), bounds, dt)
        controls.append(u)
        states.append(model.wrap(model.step(states[-1], u, dt)))
    covs = np.array([b.cov for b in propagate_horizon(belief, np.array(controls), dt, R, model)])
    return controls[0], TrajectoryMessage(sender, tick, np.array(states), covs)


def run_scenario(
    cfg: ScenarioConfig, settings: PlannerSettings | None = None
) -> tuple[RunMetrics, RunLog]:
    """Simulate until every robot is within ``goal_tolerance`` of its goal or
    ``max_duration`` elapses. Deterministic given ``cfg.seed``."""
    cfg.validate()
    settings = settings or PlannerSettings.for_model(cfg.model)
    model = cfg.motion_model
    npos = model.npos
    h = model.measurement_matrix()
    q_true = cfg.noise_scale * np.asarray(cfg.measurement_noise.Q, dtype=float)
    q_filter = q_true + Q_FLOOR * np.eye(q_true.shape[0])
    R = np.asarray(cfg.measurement_noise.R, dtype=float)
    n = len(cfg.robots)
    streams = np.random.SeedSequence(cfg.seed).spawn(2 * n)
    meas_rng = [np.random.Generator(np.random.Philox(s)) for s in streams[:n]]
    proc_rng = [np.random.Generator(np.random.Philox(s)) for s in streams[n:]]
    q_root = np.linalg.cholesky(q_true + 1e-300 * np.eye(q_true.shape[0])) if cfg.noise_scale > 0 else None
    r_root = np.linalg.cholesky(R) if np.any(R) else None

    truth = [
        r.start.copy() if cfg.model == "unicycle" else np.concatenate((r.start, np.zeros(3))) for r in cfg.robots
    ]
    beliefs = [_initial_belief(r, cfg, q_filter) for r in cfg.robots]
    plans: list[HorizonPlan | None] = [None] * n
    published: list[TrajectoryMessage | None] = [None] * n
    statics = [ObstacleForecast.static(b) for b in cfg.static_obstacles]
    timings: list[list[float]] = [[] for _ in range(n)]
    log = RunLog(dt=cfg.dt)
    max_ticks = int(round(cfg.max_duration / cfg.dt))
    L = settings.horizon

    arrived = [False] * n
    for k in range(max_ticks + 1):
        for i, r in enumerate(cfg.robots):
            if not arrived[i] and float(np.linalg.norm(truth[i][:npos] - r.goal)) <= cfg.goal_tolerance:
                # parked for the rest of the run; others see a stationary obstacle
                arrived[i] = True
                if cfg.model != "unicycle":
                    truth[i][3:] = 0.0
                    beliefs[i] = BeliefState(np.concatenate((beliefs[i].mean[:3], np.zeros(3))), beliefs[i].cov)
                published[i] = _stationary_message(r.id, k, beliefs[i], L)
        if all(arrived) or k == max_ticks:
            for i, r in enumerate(cfg.robots):
                log.append(
                    TickRecord(k, r.id, truth[i].copy(), beliefs[i].mean, beliefs[i].cov, np.zeros(model.nu), math.nan, "final")
                )
            break

        for i in range(n):
            if arrived[i]:
                continue
            noise = q_root @ meas_rng[i].standard_normal(q_true.shape[0]) if q_root is not None else 0.0
            z = h @ truth[i] + noise
            beliefs[i] = ekf_update(beliefs[i], z, q_filter, model)
            if published[i] is None:
                published[i] = _stationary_message(cfg.robots[i].id, k, beliefs[i], L)
        messages = list(published)

        controls = []
        for i, r in enumerate(cfg.robots):
            inbox = [(messages[j], cfg.robots[j].radius) for j in range(n) if j != i and messages[j] is not None]
            log.messages_received.append(len(inbox))
            if arrived[i]:
                controls.append(np.zeros(model.nu))
                log.append(TickRecord(k, r.id, truth[i].copy(), beliefs[i].mean, beliefs[i].cov, controls[-1], math.nan, ARRIVED))
                continue
            forecasts = [m.forecast(k, radius, npos) for m, radius in inbox]
            warm = shift_warm_start(plans[i], beliefs[i], cfg.dt, model) if plans[i] is not None else None
            t0 = time.perf_counter()
            try:
                p = plan(
                    beliefs[i],
                    r.goal,
                    forecasts + statics,
                    cfg.eps,
                    settings.bounds,
                    settings.cost,
                    L,
                    cfg.dt,
                    warm,
                    model=model,
                    R=R,
                    robot_radius=r.radius,
                    method=settings.method,
                    k_sigma=settings.k_sigma,
                    options=settings.options,
                )
            except Exception as exc:
                raise RuntimeError(f"planner failed for robot {r.id} at tick {k}: {exc}") from exc
            timings[i].append((time.perf_counter() - t0) * 1e3)
            if p.solver_status == INFEASIBLE_RELAXED and p.hold_feasible:
                u, published[i] = _braked_message(r.id, k, beliefs[i], p.controls[0], cfg.model, settings.bounds, L, cfg.dt, R)
            else:
                u = p.controls[0]
                published[i] = TrajectoryMessage(r.id, k, p.states, p.covariances)
            controls.append(u)
            plans[i] = p
            log.append(
                TickRecord(k, r.id, truth[i].copy(), beliefs[i].mean, beliefs[i].cov, u.copy(), p.min_margin, p.solver_status)
            )

        for i in range(n):
            if arrived[i]:
                continue
            nxt = model.step(truth[i], controls[i], cfg.dt)
            if r_root is not None:
                nxt = nxt + r_root @ proc_rng[i].standard_normal(model.nx)
            truth[i] = model.wrap(nxt)
            beliefs[i] = ekf_predict(beliefs[i], controls[i], cfg.dt, R, model)

    metrics = compute_metrics(log, cfg)
    metrics.plan_time_ms = {
        r.id: (float(np.mean(t)), float(np.max(t))) if t else (0.0, 0.0) for r, t in zip(cfg.robots, timings)
    }
    return metrics, log


# -- scenario builders -----------------------------------------------------------------------


def default_noise(model: str) -> NoiseSpec:
    return NoiseSpec.unicycle() if model == "unicycle" else NoiseSpec.double_integrator()


def scenario_position_exchange(
    n_robots: int,
    radius: float = 0.1,
    eps: float = 0.1,
    seed: int = 0,
    *,
    three_d: bool = False,
    circle_radius: float = 2.0,
    altitude: float = 1.0,
    noise_scale: float = 1.0,
    max_duration: float = 40.0,
) -> ScenarioConfig:
    """Robots evenly spaced on a circle, each sent to the antipodal point."""
    allowed = (4, 6) if three_d else (2, 4)
    if n_robots not in allowed:
        raise ValueError(f"unsupported robot count {n_robots}; expected one of {allowed}")
    robots = []
    for i in range(n_robots):
        ang = math.pi + 2.0 * math.pi * i / n_robots
        p = circle_radius * np.array([math.cos(ang), math.sin(ang)])
        p = np.where(np.abs(p) < 1e-12, 0.0, p)
        if three_d:
            start = np.array([p[0], p[1], altitude])
            goal = np.array([-p[0], -p[1], altitude])
        else:
            start = np.array([p[0], p[1], wrap_heading(-p)])
            goal = -p
        robots.append(RobotSpec(f"R{i + 1}", start, goal, radius))
    model = "double-integrator-3d" if three_d else "unicycle"
    return ScenarioConfig(
        model=model,
        robots=tuple(robots),
        static_obstacles=(),
        eps=eps,
        measurement_noise=default_noise(model),
        noise_scale=noise_scale,
        dt=0.1,
        max_duration=max_duration,
        goal_tolerance=0.1,
        seed=seed,
    )


def wrap_heading(direction) -> float:
    return math.atan2(float(direction[1]), float(direction[0]))


def scenario_obstacle_pass(noise_scale: float = 1.0, seed: int = 0, eps: float = 0.1, radius: float = 0.2) -> ScenarioConfig:
    """One robot from (0, 0) to (3, 0) past a static obstacle of radius 0.2 m
    centered at (1.5, 0)."""
    return ScenarioConfig(
        model="unicycle",
        robots=(RobotSpec("R1", np.array([0.0, 0.0, 0.0]), np.array([3.0, 0.0]), radius),),
        static_obstacles=(Body.make([1.5, 0.0], None, 0.2),),
        eps=eps,
        measurement_noise=default_noise("unicycle"),
        noise_scale=noise_scale,
        dt=0.1,
        max_duration=40.0,
        goal_tolerance=0.1,
        seed=seed,
    )


PRESETS = {
    "exchange2": lambda eps, seed: scenario_position_exchange(2, eps=eps, seed=seed),
    "exchange4": lambda eps, seed: scenario_position_exchange(4, eps=eps, seed=seed),
    "exchange4-3d": lambda eps, seed: scenario_position_exchange(4, eps=eps, seed=seed, three_d=True),
    "exchange6-3d": lambda eps, seed: scenario_position_exchange(6, eps=eps, seed=seed, three_d=True),
    "obstacle-pass": lambda eps, seed: scenario_obstacle_pass(eps=eps, seed=seed),
}


# -- experiments --------------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseCell:
    method: str
    scale: float
    d: float
    l: float
    T: float
    success_rate: float
    collisions: int
    runs: int


def experiment_noise_scaling(
    base: ScenarioConfig,
    methods: Sequence[str] = ("bound", "bounding-volume"),
    scales: Sequence[float] = (1.0, 4.0, 16.0),
    seeds: int | Sequence[int] = 10,
) -> list[NoiseCell]:
    """Average d, l, T over seeds for every (method, noise scale) pair."""
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    cells = []
    for method in methods:
        settings = PlannerSettings.for_model(base.model, method)
        for scale in scales:
            runs = [run_scenario(replace(base, noise_scale=float(scale), seed=s), settings)[0] for s in seed_list]
            cells.append(
                NoiseCell(
                    method=method,
                    scale=float(scale),
                    d=float(np.mean([m.d for m in runs])),
                    l=float(np.mean([m.mean_length for m in runs])),
                    T=float(np.mean([m.mean_duration for m in runs])),
                    success_rate=float(np.mean([m.success for m in runs])),
                    collisions=int(sum(m.collisions for m in runs)),
                    runs=len(runs),
                )
            )
    return cells


def noise_trends(cells: Sequence[NoiseCell]) -> dict[str, bool]:
    """The qualitative orderings expected between the two methods."""
    ours = {c.scale: c for c in cells if c.method == "bound"}
    bv = {c.scale: c for c in cells if c.method == "bounding-volume"}
    scales = sorted(ours)
    out = {}
    out["our l nondecreasing in noise"] = all(ours[a].l <= ours[b].l for a, b in zip(scales, scales[1:]))
    high = [s for s in scales if s > 1.0]
    if bv:
        out["bounding-volume l >= our l at raised noise"] = all(bv[s].l >= ours[s].l for s in high if s in bv)
        top = max(scales)
        if top in bv:
            out["bounding-volume d >= our d at highest noise"] = bv[top].d >= ours[top].d
    return out
