"""Independent reference computations used by the test suite."""

import math

import numpy as np
from scipy import integrate, special


def radial_collision_probability(mean_distance: float, sigma: float, contact: float, n: int) -> float:
    """P(|w| <= contact) for w ~ N(mu, sigma^2 I) with |mu| = mean_distance,
    by 1-D quadrature of the exact density of |w|."""
    m, s = float(mean_distance), float(sigma)

    if n == 2:

        def density(r):
            # Rice density, with the Bessel factor scaled to avoid overflow
            return r / s**2 * math.exp(-((r - m) ** 2) / (2 * s * s)) * special.i0e(r * m / s**2)

    elif n == 3:

        def density(r):
            if m == 0.0:
                return math.sqrt(2 / math.pi) * r * r / s**3 * math.exp(-r * r / (2 * s * s))
            a = math.exp(-((r - m) ** 2) / (2 * s * s))
            b = math.exp(-((r + m) ** 2) / (2 * s * s))
            return r / (m * s * math.sqrt(2 * math.pi)) * (a - b)

    else:
        raise ValueError(n)
    points = [m] if 0.0 < m < contact else None
    val, _ = integrate.quad(density, 0.0, contact, epsabs=1e-12, epsrel=1e-11, limit=400, points=points)
    return min(1.0, max(0.0, val))


def chi2_density(x: float, n: int) -> float:
    if x <= 0.0:
        return 0.0
    return x ** (n / 2 - 1) * math.exp(-x / 2) / (2 ** (n / 2) * math.gamma(n / 2))


def cost_by_summation(states, controls, goal, w_pos, w_ctrl, w_term, npos):
    """Stage tracking and effort over steps 0..L-1 plus terminal tracking,
    summed term by term."""
    total = 0.0
    L = len(controls)
    for l in range(L):
        d = [states[l][i] - goal[i] for i in range(npos)]
        total += w_pos * sum(x * x for x in d)
        total += w_ctrl * sum(float(c) ** 2 for c in controls[l])
    d = [states[L][i] - goal[i] for i in range(npos)]
    total += w_term * sum(x * x for x in d)
    return total


def min_center_distance(log, ids, npos, obstacles=()):
    """Minimum pairwise center distance over all ticks, recomputed by a plain
    scan of the log records."""
    best = math.inf
    by_tick = {}
    for rec in log.records:
        by_tick.setdefault(rec.tick, []).append(rec)
    for recs in by_tick.values():
        for i in range(len(recs)):
            p = np.asarray(recs[i].truth[:npos])
            for j in range(i + 1, len(recs)):
                q = np.asarray(recs[j].truth[:npos])
                best = min(best, math.dist(p, q))
            for ob in obstacles:
                best = min(best, math.dist(p, ob))
    return best


def constant_control_oracle(model, x0, goal, cost, bounds, L, dt, n=201):
    """Best constant control over an n-by-n grid of the control box.
    Returns (cost, states)."""
    from chanceplan.planner import CONVERGED, HorizonPlan, evaluate_cost

    best = (math.inf, None)
    for v in np.linspace(bounds.lower[0], bounds.upper[0], n):
        for w in np.linspace(bounds.lower[1], bounds.upper[1], n):
            u = np.tile([v, w], (L, 1))
            states = model.rollout(x0, u, dt)
            p = HorizonPlan(u, states, np.zeros((L + 1, 3, 3)), np.zeros((L, 0)), 0.0, CONVERGED)
            j = evaluate_cost(p, goal, cost)
            if j < best[0]:
                best = (j, states)
    return best
