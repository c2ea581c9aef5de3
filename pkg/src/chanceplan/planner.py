"""Receding-horizon planner with per-step chance constraints.

Single shooting over the control sequence. Constraints are handled by a
quadratic penalty whose weight doubles whenever the inner descent stalls on a
violating iterate; the inner solver is projected gradient descent
(Barzilai-Borwein trial step, Armijo backtracking) with controls clamped to
their bounds at every iterate.

Each obstacle constraint is the chance-constraint margin with its
linearization point at the current iterate's relative position, and the
robot's horizon covariance propagated along the previous loop's controls and
added to the obstacle's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .collision import Body
from .dynamics import MODELS, BeliefState, propagate_horizon, wrap_angle
from .gaussian import chi2_inv_cdf, inverse_max_eigenvalue, max_eigenvalue

CONVERGED = "converged"
ITERATION_CAPPED = "iteration-capped"
INFEASIBLE_RELAXED = "infeasible-relaxed"
SEED = "seed"

CONSTRAINT_METHODS = ("bound", "bounding-volume")


@dataclass(frozen=True)
class ControlBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("control bounds must form a nonempty box")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unicycle(cls, v_min: float = 0.0, v_max: float = 0.5, omega_max: float = 1.5) -> "ControlBounds":
        return cls(np.array([v_min, -omega_max]), np.array([v_max, omega_max]))

    @classmethod
    def double_integrator(cls, a_max: float = 1.0) -> "ControlBounds":
        return cls(-a_max * np.ones(3), a_max * np.ones(3))

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)


@dataclass(frozen=True)
class CostSpec:
    position: float = 1.0
    control: float = 0.1
    terminal: float = 5.0
    # terminal speed, double integrator only
    velocity: float = 0.0
    # terminal heading, unicycle only: |g - p| - (g - p).(cos th, sin th), the
    # extra distance owed for not facing the goal
    heading: float = 0.0

    def __post_init__(self):
        weights = (self.position, self.control, self.terminal, self.velocity, self.heading)
        if min(weights) < 0.0 or max(weights) <= 0.0:
            raise ValueError("cost weights must be nonnegative with at least one positive")


@dataclass(frozen=True)
class ObstacleForecast:
    """Obstacle center beliefs for look-ahead steps 0, 1, ...; steps past the
    end reuse the last belief."""

    means: np.ndarray
    covs: np.ndarray
    radius: float

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covs, dtype=float)
        if c.ndim == 2:
            c = np.broadcast_to(c, (m.shape[0],) + c.shape)
        if m.shape[0] == 0 or c.shape != (m.shape[0], m.shape[1], m.shape[1]):
            raise ValueError(f"malformed forecast: means {m.shape}, covs {c.shape}")
        if not self.radius > 0.0:
            raise ValueError("forecast radius must be positive")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c))):
            raise ValueError("malformed forecast: non-finite entries")
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", np.array(c))

    @classmethod
    def static(cls, body: Body) -> "ObstacleForecast":
        return cls(body.center.mean[None, :], body.center.cov[None, :, :], body.radius)

    def at(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        i = min(step, self.means.shape[0] - 1)
        return self.means[i], self.covs[i]


@dataclass(frozen=True)
class HorizonPlan:
    controls: np.ndarray  # (L, nu)
    states: np.ndarray  # (L + 1, nx)
    covariances: np.ndarray  # (L + 1, nx, nx) predicted along ``controls``
    margins: np.ndarray  # (L, n_obstacles), steps 1..L
    cost: float
    solver_status: str
    iterations: int = 0
    trace: list = field(default_factory=list, repr=False)
    # whether holding the current position satisfies every margin; braking
    # on an infeasible plan only helps when it does
    hold_feasible: bool = True

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins)) if self.margins.size else math.inf


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 200
    rho0: float = 1e4
    rho_max: float = 1e12
    # penalty targets margins >= tighten (m^2) so that iterates land feasible
    tighten: float = 1e-3
    tol: float = 1e-4
    armijo: float = 1e-4
    max_backtracks: int = 40
    # margins (m^2) under which an obstacle counts as shaping the plan
    active_band: float = 0.05
    # goal progress (m) over a horizon below which a plan counts as stalled
    stall_distance: float = 0.02


def _cost_terms(states, controls, goal, cost: CostSpec, npos: int):
    pos = states[:, :npos]
    diff = pos - goal
    d2 = np.einsum("ij,ij->i", diff, diff)
    j = cost.position * float(np.sum(d2[:-1])) + cost.terminal * float(d2[-1])
    j += cost.control * float(np.sum(controls * controls))
    grad = np.zeros_like(states)
    grad[:-1, :npos] = 2.0 * cost.position * diff[:-1]
    grad[-1, :npos] = 2.0 * cost.terminal * diff[-1]
    if cost.velocity and states.shape[1] >= 2 * npos:
        vel = states[-1, npos : 2 * npos]
        j += cost.velocity * float(vel @ vel)
        grad[-1, npos : 2 * npos] = 2.0 * cost.velocity * vel
    if cost.heading and states.shape[1] == npos + 1:
        gx, gy = -float(diff[-1, 0]), -float(diff[-1, 1])
        dist = math.hypot(gx, gy)
        if dist > 1e-9:
            c, s = math.cos(states[-1, 2]), math.sin(states[-1, 2])
            j += cost.heading * (dist - gx * c - gy * s)
            # d/dp of dist is -(g - p)/dist, of the projection +(c, s)
            grad[-1, 0] += cost.heading * (-gx / dist + c)
            grad[-1, 1] += cost.heading * (-gy / dist + s)
            grad[-1, 2] += cost.heading * (gx * s - gy * c)
    return j, grad


def evaluate_cost(plan: HorizonPlan, goal, cost: CostSpec) -> float:
    """Stage tracking plus control effort over steps 0..L-1, terminal
    tracking at step L (plus the optional terminal speed and heading terms)."""
    g = np.asarray(goal, dtype=float)
    return _cost_terms(plan.states, plan.controls, g, cost, g.size)[0]


class _Constraints:
    """Margins in m^2 for every (step, obstacle): ``|p_l - s_l|^2 - reach^2``.

    This is the chance-constraint margin with the linearization point placed
    at the iterate itself, divided by ``lambda_max`` so all obstacles share one
    scale; ``scales`` converts back to reported margins.
    """

    def __init__(self, centers, reach2, scales):
        self.centers = centers  # (L, K, npos)
        self.reach2 = reach2  # (L, K)
        self.scales = scales  # (L, K)

    def values(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rel = pos[1:, None, :] - self.centers
        return np.einsum("lkd,lkd->lk", rel, rel) - self.reach2, rel


def _build_constraints(robot_cov, robot_radius, obstacles, eps, method, k_sigma, npos) -> _Constraints:
    steps = robot_cov.shape[0] - 1
    k = len(obstacles)
    centers = np.zeros((steps, k, npos))
    reach2 = np.zeros((steps, k))
    scales = np.ones((steps, k))
    thr = chi2_inv_cdf(eps, npos) if method == "bound" else 0.0
    for i, ob in enumerate(obstacles):
        alpha = (robot_radius + ob.radius) ** 2
        for l in range(1, steps + 1):
            s_mean, s_cov = ob.at(l)
            if s_mean.size != npos:
                raise ValueError("malformed forecast: dimension does not match the robot")
            centers[l - 1, i] = s_mean
            r_cov = robot_cov[l]
            if method == "bound":
                lam = inverse_max_eigenvalue(r_cov + s_cov)
                reach2[l - 1, i] = alpha - thr / lam
                scales[l - 1, i] = lam
            else:
                grow = math.sqrt(max(0.0, max_eigenvalue(r_cov))) + math.sqrt(max(0.0, max_eigenvalue(s_cov)))
                reach2[l - 1, i] = (robot_radius + ob.radius + k_sigma * grow) ** 2
    return _Constraints(centers, reach2, scales)


def shift_warm_start(previous: HorizonPlan, belief: BeliefState | None = None, dt: float = 0.1, model=None) -> HorizonPlan:
    """Previous controls advanced one step (last one repeated), states rolled
    out again from ``belief`` (default: the previous plan's second state)."""
    model = model or _model_for(previous.states.shape[1])
    u = previous.controls
    if u.shape[0] == 0:
        shifted = u.copy()
    else:
        shifted = np.vstack((u[1:], u[-1:]))
    x0 = previous.states[min(1, previous.states.shape[0] - 1)] if belief is None else belief.mean
    states = model.rollout(x0, shifted, dt)
    c = previous.covariances
    covs = np.concatenate((c[1:], c[-1:])) if c.shape[0] > 1 else c.copy()
    return HorizonPlan(shifted, states, covs, np.zeros((shifted.shape[0], 0)), math.nan, SEED)


def _model_for(nx: int):
    for m in MODELS.values():
        if m.nx == nx:
            return m
    raise ValueError(f"no motion model with state dimension {nx}")


def _escape_seeds(model, x0, goal, bounds: ControlBounds, L: int) -> list[np.ndarray]:
    """Turn-left / turn-right starting points. A robot heading straight at an
    obstacle sits on a symmetric stationary point where the gradient has no
    sideways component; these seeds give descent a side to commit to."""
    if model.nu == 2:
        v = 0.5 * bounds.upper[0]
        return [bounds.clip(np.tile([v, sign * bounds.upper[1]], (L, 1))) for sign in (1.0, -1.0)]
    heading = goal[:2] - x0[:2]
    norm = float(np.linalg.norm(heading))
    side = np.array([-heading[1], heading[0], 0.0]) / norm if norm > 1e-9 else np.array([0.0, 1.0, 0.0])
    return [bounds.clip(np.tile(sign * bounds.upper * side, (L, 1))) for sign in (1.0, -1.0)]


def _pursuit_seed(model, x0, goal, bounds: ControlBounds, L: int, dt: float) -> np.ndarray:
    """Controls of a simple go-to-goal law: a unicycle turns toward the goal and
    drives once roughly facing it; the double integrator is PD-steered. Breaks
    the parked-and-facing-away stationary point, where position does not
    depend on turn rate at zero speed."""
    x = np.array(x0, dtype=float)
    out = np.empty((L, model.nu))
    for l in range(L):
        d = goal - x[: model.npos]
        if model.nu == 2:
            err = wrap_angle(math.atan2(d[1], d[0]) - x[2])
            u = np.array([bounds.upper[0] * max(0.0, math.cos(err)) ** 2, err / dt])
        else:
            u = d - 2.0 * x[3:]
        out[l] = bounds.clip(u)
        x = model.step(x, out[l], dt)
    return out


@dataclass
class _Eval:
    """One objective evaluation. ``aux`` holds whatever the problem needs to
    form the gradient or materialize states and margins later."""

    j: float
    pen: float  # sum of squared shortfalls below the tightened margin
    worst: float  # smallest margin, inf without obstacles
    violation: float  # sum of squared negative margins
    aux: object

    def f(self, rho: float) -> float:
        return self.j + rho * self.pen


class _Problem:
    """Generic numpy objective for any motion model with a batched rollout."""

    def __init__(self, model, x0, goal, cons: _Constraints, cost: CostSpec, bounds: ControlBounds, dt, options):
        self.model = model
        self.x0 = x0
        self.goal = goal
        self.cons = cons
        self.cost = cost
        self.bounds = bounds
        self.dt = dt
        self.opt = options
        self.npos = model.npos

    def evaluate(self, controls) -> _Eval:
        states = self.model.rollout(self.x0, controls, self.dt)
        j, gstate = _cost_terms(states, controls, self.goal, self.cost, self.npos)
        margins, rel = self.cons.values(states[:, : self.npos])
        short = np.maximum(0.0, self.opt.tighten - margins)
        if margins.size:
            worst = float(margins.min())
            violation = float((np.minimum(margins, 0.0) ** 2).sum())
        else:
            worst, violation = math.inf, 0.0
        return _Eval(j, float((short * short).sum()), worst, violation, (states, gstate, margins, short, rel))

    def gradient(self, controls, ev: _Eval, rho: float) -> np.ndarray:
        states, gstate, _, short, rel = ev.aux
        g = gstate
        if short.size:
            g = gstate.copy()
            g[1:, : self.npos] -= 4.0 * rho * np.einsum("lk,lkd->ld", short, rel)
        return self.model.rollout_vjp(self.x0, controls, self.dt, states, g) + 2.0 * self.cost.control * controls

    def materialize(self, controls, ev: _Eval) -> tuple[np.ndarray, np.ndarray]:
        states, _, margins, _, _ = ev.aux
        return self.model.wrap(states), margins


class _UnicycleProblem(_Problem):
    """The same objective as :class:`_Problem` for the unicycle, written as
    fused float loops. At L = 10 with a few obstacles numpy dispatch costs
    more than the arithmetic."""

    def __init__(self, *args):
        super().__init__(*args)
        cons = self.cons
        self.obs = [
            [(float(c[0]), float(c[1]), float(r2)) for c, r2 in zip(cons.centers[l], cons.reach2[l])]
            for l in range(cons.centers.shape[0])
        ]
        self.gx, self.gy = float(self.goal[0]), float(self.goal[1])

    def _rollout(self, u):
        dt = self.dt
        x, y, th = (float(c) for c in self.x0)
        xs, ys, ths, parts = [x], [y], [th], []
        for v, w in u:
            h = 0.5 * w * dt
            if abs(h) < 1e-3:
                s = 1.0 - h * h / 6.0 + h**4 / 120.0
                ds = -h / 3.0 + h**3 / 30.0
            else:
                s = math.sin(h) / h
                ds = (h * math.cos(h) - math.sin(h)) / (h * h)
            m = th + h
            cm, sm = math.cos(m), math.sin(m)
            x += v * dt * cm * s
            y += v * dt * sm * s
            th += w * dt
            xs.append(x)
            ys.append(y)
            ths.append(th)
            parts.append((v, cm, sm, s, ds))
        return xs, ys, ths, parts

    def evaluate(self, controls) -> _Eval:
        u = controls.tolist()
        xs, ys, ths, parts = self._rollout(u)
        c = self.cost
        gx, gy = self.gx, self.gy
        n = len(u)
        j = 0.0
        for l in range(n):
            dx, dy = xs[l] - gx, ys[l] - gy
            j += c.position * (dx * dx + dy * dy) + c.control * (u[l][0] ** 2 + u[l][1] ** 2)
        dx, dy = xs[n] - gx, ys[n] - gy
        j += c.terminal * (dx * dx + dy * dy)
        if c.heading:
            dist = math.hypot(dx, dy)
            if dist > 1e-9:
                j += c.heading * (dist + dx * math.cos(ths[n]) + dy * math.sin(ths[n]))
        tighten = self.opt.tighten
        pen = violation = 0.0
        worst = math.inf
        shorts = []
        for l, row in enumerate(self.obs, start=1):
            px, py = xs[l], ys[l]
            for cx, cy, r2 in row:
                rx, ry = px - cx, py - cy
                m = rx * rx + ry * ry - r2
                if m < worst:
                    worst = m
                if m < tighten:
                    sh = tighten - m
                    pen += sh * sh
                    shorts.append((l, sh, rx, ry))
                    if m < 0.0:
                        violation += m * m
        return _Eval(j, pen, worst, violation, (xs, ys, ths, parts, shorts))

    def gradient(self, controls, ev: _Eval, rho: float) -> np.ndarray:
        xs, ys, ths, parts, shorts = ev.aux
        c = self.cost
        n = len(parts)
        gx, gy = self.gx, self.gy
        ga = [2.0 * c.position * (xs[l] - gx) for l in range(n)]
        gb = [2.0 * c.position * (ys[l] - gy) for l in range(n)]
        gc = [0.0] * (n + 1)
        dx, dy = xs[n] - gx, ys[n] - gy
        ga.append(2.0 * c.terminal * dx)
        gb.append(2.0 * c.terminal * dy)
        if c.heading:
            dist = math.hypot(dx, dy)
            if dist > 1e-9:
                ct, st = math.cos(ths[n]), math.sin(ths[n])
                ga[n] += c.heading * (dx / dist + ct)
                gb[n] += c.heading * (dy / dist + st)
                gc[n] += c.heading * (dy * ct - dx * st)
        for l, sh, rx, ry in shorts:
            ga[l] -= 4.0 * rho * sh * rx
            gb[l] -= 4.0 * rho * sh * ry
        dt = self.dt
        half = 0.5 * dt * dt
        wu2 = 2.0 * c.control
        out = np.empty((n, 2))
        a = b = cc = later = 0.0
        for k in range(n - 1, -1, -1):
            a += ga[k + 1]
            b += gb[k + 1]
            cc += gc[k + 1]
            v, cm, sm, s, ds = parts[k]
            out[k, 0] = dt * s * (a * cm + b * sm)
            out[k, 1] = v * half * (a * (cm * ds - sm * s) + b * (cm * s + sm * ds)) + later + dt * cc
            later += dt * v * dt * s * (b * cm - a * sm)
        return out + wu2 * controls

    def materialize(self, controls, ev: _Eval) -> tuple[np.ndarray, np.ndarray]:
        xs, ys, ths, _, _ = ev.aux
        states = self.model.wrap(np.column_stack((xs, ys, ths)))
        return states, self.cons.values(states[:, :2])[0]


def _problem_for(model, *args) -> _Problem:
    return _UnicycleProblem(model, *args) if model.name == "unicycle" else _Problem(model, *args)


@dataclass
class _Solution:
    controls: np.ndarray
    states: np.ndarray
    margins: np.ndarray
    cost: float
    status: str
    iterations: int
    trace: list

    def better_than(self, other: "_Solution") -> bool:
        mine = self.status != INFEASIBLE_RELAXED
        theirs = other.status != INFEASIBLE_RELAXED
        if mine != theirs:
            return mine
        if mine:
            return self.cost < other.cost
        return float((np.minimum(self.margins, 0.0) ** 2).sum()) < float((np.minimum(other.margins, 0.0) ** 2).sum())


def _solve(problem: _Problem, u: np.ndarray) -> _Solution:
    """Projected gradient descent on the penalized objective; the penalty
    weight doubles whenever the inner descent stalls on an infeasible iterate."""
    opt = problem.opt
    bounds = problem.bounds
    rho = opt.rho0
    ev = problem.evaluate(u)
    f = ev.f(rho)
    best_feasible = None  # (cost, controls, eval)
    least_violating = None  # (violation, controls, eval)

    def consider(controls, ev):
        nonlocal best_feasible, least_violating
        if ev.worst >= 0.0:
            if best_feasible is None or ev.j < best_feasible[0]:
                best_feasible = (ev.j, controls, ev)
        elif least_violating is None or ev.violation < least_violating[0]:
            least_violating = (ev.violation, controls, ev)

    consider(u, ev)
    trace = []
    step_len = None
    prev_u = prev_g = None
    converged = False
    it = 0
    for it in range(1, opt.max_iter + 1):
        grad = problem.gradient(u, ev, rho)
        if prev_u is not None:
            s = (u - prev_u).ravel()
            y = (grad - prev_g).ravel()
            sy = float(s @ y)
            step_len = float(s @ s) / sy if sy > 1e-16 else None
        if step_len is None or not math.isfinite(step_len):
            gmax = float(np.abs(grad).max())
            step_len = 0.1 / gmax if gmax > 0 else 1.0
        t = min(max(step_len, 1e-10), 1e6)

        accepted = False
        delta = None
        for _ in range(opt.max_backtracks):
            cand = bounds.clip(u - t * grad)
            delta = cand - u
            decrease = float((grad * delta).sum())
            if decrease >= 0.0:
                break
            cand_ev = problem.evaluate(cand)
            cand_f = cand_ev.f(rho)
            if cand_f <= f + opt.armijo * decrease:
                accepted = True
                break
            t *= 0.5
        if accepted:
            trace.append((rho, f, cand_f))
            prev_u, prev_g = u, grad
            u, ev, f = cand, cand_ev, cand_f
            step_len = t
            consider(u, ev)

        stalled = not accepted or float(np.abs(delta).max(initial=0.0)) <= opt.tol
        if stalled:
            if ev.worst >= 0.0:
                converged = True
                break
            if rho >= opt.rho_max:
                break
            rho = min(2.0 * rho, opt.rho_max)
            f = ev.f(rho)
            prev_u = prev_g = None

    if best_feasible is not None:
        j_best, u_best, ev_best = best_feasible
        status = CONVERGED if converged else ITERATION_CAPPED
    else:
        _, u_best, ev_best = least_violating
        j_best = ev_best.j
        status = INFEASIBLE_RELAXED
    states, margins = problem.materialize(u_best, ev_best)
    return _Solution(u_best, states, margins, j_best, status, it, trace)


def plan(
    belief: BeliefState,
    goal,
    obstacles: Sequence[ObstacleForecast],
    eps: float,
    bounds: ControlBounds,
    cost: CostSpec,
    L: int = 10,
    dt: float = 0.1,
    warm_start: HorizonPlan | None = None,
    *,
    model=None,
    R=None,
    robot_radius: float = 0.2,
    method: str = "bound",
    k_sigma: float = 3.0,
    options: SolverOptions = SolverOptions(),
) -> HorizonPlan:
    """Solve one look-ahead problem from ``belief``.

    Robot covariances along the horizon are propagated once, along the warm
    start's controls, and held fixed. The returned plan is the cheapest iterate
    that satisfied every margin; if none did, the least-violating iterate
    flagged ``infeasible-relaxed``. When an obstacle constraint is active the
    problem is also solved from two escape seeds and the best result kept.
    """
    if L < 1:
        raise ValueError("horizon L must be >= 1")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps {eps} outside (0, 1)")
    if method not in CONSTRAINT_METHODS:
        raise ValueError(f"unknown constraint method {method!r}")
    model = model or _model_for(belief.mean.size)
    npos = model.npos
    goal = np.asarray(goal, dtype=float)
    if goal.size != npos:
        raise ValueError(f"goal must have {npos} components")
    R = np.zeros((model.nx, model.nx)) if R is None else np.asarray(R, dtype=float)
    x0 = belief.mean

    if warm_start is not None and warm_start.controls.shape[0] > 0:
        seed = np.asarray(warm_start.controls, dtype=float)
        if seed.shape[0] >= L:
            seed = seed[:L]
        else:
            seed = np.vstack((seed, np.repeat(seed[-1:], L - seed.shape[0], axis=0)))
    else:
        seed = np.zeros((L, model.nu))
    u0 = bounds.clip(seed)

    horizon = propagate_horizon(belief, u0, dt, R, model)
    robot_cov = np.array([b.cov[:npos, :npos] for b in horizon])
    cons = _build_constraints(robot_cov, robot_radius, list(obstacles), eps, method, k_sigma, npos)
    problem = _problem_for(model, x0, goal, cons, cost, bounds, dt, options)

    best = _solve(problem, u0)
    d0 = float(np.linalg.norm(goal - x0[:npos]))
    progress = d0 - float(np.linalg.norm(goal - best.states[-1, :npos]))
    stalled = d0 > options.stall_distance and progress < options.stall_distance
    if cons.reach2.size and (
        stalled or best.status == INFEASIBLE_RELAXED or float(best.margins.min()) < options.active_band
    ):
        seeds = [_pursuit_seed(model, x0, goal, bounds, L, dt)] + _escape_seeds(model, x0, goal, bounds, L)
        for alt in seeds:
            sol = _solve(problem, alt)
            if sol.better_than(best):
                best = sol

    covs = np.array([b.cov for b in propagate_horizon(belief, best.controls, dt, R, model)])
    hold = np.repeat(x0[None, :npos], L + 1, axis=0)
    hold_margins = cons.values(hold)[0]
    return HorizonPlan(
        controls=best.controls,
        states=best.states,
        covariances=covs,
        margins=best.margins * cons.scales,
        cost=best.cost,
        solver_status=best.status,
        iterations=best.iterations,
        trace=best.trace,
        hold_feasible=not hold_margins.size or float(hold_margins.min()) >= 0.0,
    )
