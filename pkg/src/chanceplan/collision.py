"""Collision probability between two uncertain spheres.

``bound_collision_probability`` and ``constraint_margin`` are the chi-squared
bound and its planning-constraint form. The remaining estimators are the
comparison methods: Monte Carlo sampling of the indicator integral, a
single-sum density approximation, 3-sigma bounding volumes, maximum density
times volume, a linearized normal bound and a circumscribed box.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .gaussian import (
    DegenerateCovarianceError,
    GaussianBelief,
    as_symmetric,
    as_vector,
    chi2_cdf,
    chi2_inv_cdf,
    eigen_sym,
    inverse_max_eigenvalue,
    max_eigenvalue,
    normal_cdf,
    relative_belief,
)

MC_CHUNK = 16_384
WILSON_Z = 1.959963984540054


@dataclass(frozen=True)
class Body:
    center: GaussianBelief
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.center.dim not in (2, 3):
            raise ValueError(f"body dimension must be 2 or 3, got {self.center.dim}")

    @classmethod
    def make(cls, mean, cov=None, radius: float = 0.2) -> "Body":
        m = as_vector(mean)
        c = np.zeros((m.size, m.size)) if cov is None else as_symmetric(cov, m.size)
        return cls(GaussianBelief(m, c), float(radius))


@dataclass(frozen=True)
class CollisionQuery:
    robot: Body
    obstacle: Body
    alpha: float = field(init=False)
    w: GaussianBelief = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", (self.robot.radius + self.obstacle.radius) ** 2)
        object.__setattr__(self, "w", relative_belief(self.robot.center, self.obstacle.center))

    @property
    def dim(self) -> int:
        return self.w.dim

    @property
    def contact_distance(self) -> float:
        return self.robot.radius + self.obstacle.radius


@dataclass(frozen=True)
class ProbabilityEstimate:
    value: float
    half_width_95: float | None = None
    wall_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"probability {self.value} outside [0, 1]")
        if self.half_width_95 is not None and self.half_width_95 < 0.0:
            raise ValueError("negative confidence half-width")


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def ball_volume(radius: float, n: int) -> float:
    if n == 2:
        return math.pi * radius**2
    if n == 3:
        return 4.0 / 3.0 * math.pi * radius**3
    raise ValueError(f"unsupported dimension {n}")


def gaussian_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = x - mean
    n = d.size
    _, logdet = np.linalg.slogdet(cov)
    maha = float(d @ np.linalg.solve(cov, d))
    return math.exp(-0.5 * maha - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi))


def _timed(fn: Callable[[], tuple[float, float | None]]) -> ProbabilityEstimate:
    t0 = time.perf_counter()
    value, hw = fn()
    return ProbabilityEstimate(_clamp01(value), hw, time.perf_counter() - t0)


# -- the chi-squared bound ---------------------------------------------------------


def bound_argument(mu: np.ndarray, lam_max: float, alpha: float) -> float:
    return max(0.0, lam_max * (alpha - float(mu @ mu)))


def bound_collision_probability(q: CollisionQuery) -> ProbabilityEstimate:
    """Chi-squared cdf of ``lambda_max(Sigma_w^-1) * (alpha - |mu_w|^2)``."""

    def run():
        lam = inverse_max_eigenvalue(q.w.cov)
        return chi2_cdf(bound_argument(q.w.mean, lam, q.alpha), q.dim), None

    return _timed(run)


@dataclass(frozen=True)
class Margin:
    value: float
    gradient: np.ndarray  # d value / d x_rel
    lam_max: float
    threshold: float  # chi-squared quantile of eps


def constraint_margin_full(x_rel, mu, sigma, alpha: float, eps: float) -> Margin:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps {eps} outside (0, 1)")
    x = as_vector(x_rel)
    m = as_vector(mu)
    lam = inverse_max_eigenvalue(sigma)
    thr = chi2_inv_cdf(eps, m.size)
    g = thr - lam * (alpha - 2.0 * float(x @ m) + float(m @ m))
    return Margin(g, 2.0 * lam * m, lam, thr)


def constraint_margin(x_rel, mu, sigma, alpha: float, eps: float) -> float:
    """Slack of the chance constraint; the constraint holds iff the result is
    nonnegative. Affine in ``x_rel`` with gradient ``2 * lambda_max * mu``."""
    return constraint_margin_full(x_rel, mu, sigma, alpha, eps).value


# -- comparison estimators ---------------------------------------------------------------


def _chunk_sizes(n_samples: int) -> list[int]:
    full, rest = divmod(n_samples, MC_CHUNK)
    return [MC_CHUNK] * full + ([rest] if rest else [])


def _sample_gaussian(rng: np.random.Generator, b: GaussianBelief, n: int) -> np.ndarray:
    if not np.any(b.cov):
        return np.broadcast_to(b.mean, (n, b.dim))
    lam, qm = eigen_sym(b.cov)
    root = qm * np.sqrt(np.clip(lam, 0.0, None))
    return b.mean + rng.standard_normal((n, b.dim)) @ root.T


def _mc_chunk(q: CollisionQuery, seq: np.random.SeedSequence, n: int) -> int:
    rng = np.random.Generator(np.random.Philox(seq))
    xs = _sample_gaussian(rng, q.robot.center, n)
    ss = _sample_gaussian(rng, q.obstacle.center, n)
    d2 = np.einsum("ij,ij->i", xs - ss, xs - ss)
    return int(np.count_nonzero(d2 <= q.alpha))


def wilson_half_width(hits: int, n: int, z: float = WILSON_Z) -> float:
    p = hits / n
    denom = 1.0 + z * z / n
    return z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom


def mc_collision_probability(
    q: CollisionQuery, n_samples: int = 1_000_000, seed: int = 0, workers: int = 1
) -> ProbabilityEstimate:
    """Fraction of sampled center pairs whose spheres touch or overlap.

    Samples are drawn in fixed-size chunks, each from its own Philox stream
    spawned from ``seed``, so the result does not depend on ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")

    def run():
        sizes = _chunk_sizes(n_samples)
        seqs = np.random.SeedSequence(seed).spawn(len(sizes))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                hits = sum(pool.map(lambda a: _mc_chunk(q, *a), zip(seqs, sizes)))
        else:
            hits = sum(_mc_chunk(q, s, n) for s, n in zip(seqs, sizes))
        return hits / n_samples, wilson_half_width(hits, n_samples)

    return _timed(run)


def lambert_single_sum(q: CollisionQuery, n_samples: int = 1_000_000, seed: int = 0) -> ProbabilityEstimate:
    """Average over robot-center samples of obstacle density times the
    collision-ball volume."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    obs = q.obstacle.center
    try:
        inverse_max_eigenvalue(obs.cov)
    except DegenerateCovarianceError:
        raise ValueError("method requires obstacle uncertainty") from None

    def run():
        vol = ball_volume(q.contact_distance, q.dim)
        prec = np.linalg.inv(obs.cov)
        _, logdet = np.linalg.slogdet(obs.cov)
        log_norm = -0.5 * logdet - 0.5 * q.dim * math.log(2.0 * math.pi)
        total = 0.0
        sizes = _chunk_sizes(n_samples)
        for seq, n in zip(np.random.SeedSequence(seed).spawn(len(sizes)), sizes):
            rng = np.random.Generator(np.random.Philox(seq))
            d = _sample_gaussian(rng, q.robot.center, n) - obs.mean
            maha = np.einsum("ij,jk,ik->i", d, prec, d)
            total += float(np.sum(np.exp(log_norm - 0.5 * maha)))
        return vol * total / n_samples, None

    return _timed(run)


def bounding_volume_check(q: CollisionQuery, k_sigma: float = 3.0) -> ProbabilityEstimate:
    """1 if the bodies overlap after inflating each by ``k_sigma`` standard
    deviations along its widest axis, else 0."""

    def run():
        grow = 0.0
        for b in (q.robot.center, q.obstacle.center):
            grow += math.sqrt(max(0.0, max_eigenvalue(b.cov)))
        reach = q.contact_distance + k_sigma * grow
        dist = float(np.linalg.norm(q.w.mean))
        return (1.0 if dist <= reach else 0.0), None

    return _timed(run)


def closest_point_in_ball(mu: np.ndarray, cov: np.ndarray, radius: float) -> np.ndarray:
    """Point of the closed ball ``|x| <= radius`` with the smallest Mahalanobis
    distance to ``mu`` under ``cov``."""
    if float(mu @ mu) <= radius * radius:
        return mu.copy()
    lam, qm = eigen_sym(cov)
    if lam[0] - lam[-1] <= 1e-12 * lam[0]:
        return mu * (radius / float(np.linalg.norm(mu)))
    # stationarity: (P + t I) x = P mu with P = cov^-1, |x(t)| decreasing in t
    prec = 1.0 / lam
    b = qm.T @ mu

    def norm_excess(t: float) -> float:
        return float(np.linalg.norm(prec * b / (prec + t))) - radius

    hi = 1.0
    while norm_excess(hi) > 0.0:
        hi *= 2.0
    t = brentq(norm_excess, 0.0, hi, xtol=1e-15, rtol=1e-14)
    return qm @ (prec * b / (prec + t))


def max_density_approximation(q: CollisionQuery) -> ProbabilityEstimate:
    """Collision-ball volume times the largest density of ``w`` in the ball."""

    def run():
        inverse_max_eigenvalue(q.w.cov)
        peak = closest_point_in_ball(q.w.mean, q.w.cov, q.contact_distance)
        dens = gaussian_density(peak, q.w.mean, q.w.cov)
        return ball_volume(q.contact_distance, q.dim) * dens, None

    return _timed(run)


def linearized_chance_constraint(q: CollisionQuery) -> ProbabilityEstimate:
    """Normal cdf bound from projecting ``w`` onto the line between means."""
    dist = float(np.linalg.norm(q.w.mean))
    if dist == 0.0:
        raise ValueError("linearization undefined at coincident means")

    def run():
        inverse_max_eigenvalue(q.w.cov)
        a = q.w.mean / dist
        sd = math.sqrt(float(a @ q.w.cov @ a))
        return normal_cdf((q.contact_distance - dist) / sd), None

    return _timed(run)


def rectangular_box_probability(q: CollisionQuery) -> ProbabilityEstimate:
    """Probability that ``w`` falls in the box circumscribing the collision
    ball, axes aligned with the eigenbasis of its covariance."""

    def run():
        lam, qm = eigen_sym(q.w.cov)
        m = qm.T @ q.w.mean
        b = q.contact_distance
        scale = max(float(np.trace(q.w.cov)), 1e-300)
        p = 1.0
        for mi, var in zip(m, lam):
            if var <= 1e-12 * scale:
                p *= 1.0 if -b <= mi <= b else 0.0
            else:
                sd = math.sqrt(var)
                p *= normal_cdf((b - mi) / sd) - normal_cdf((-b - mi) / sd)
        return p, None

    return _timed(run)


METHODS: dict[str, Callable[..., ProbabilityEstimate]] = {
    "bound": bound_collision_probability,
    "mc": mc_collision_probability,
    "lambert": lambert_single_sum,
    "bounding-volume": bounding_volume_check,
    "max-density": max_density_approximation,
    "chance-linear": linearized_chance_constraint,
    "rect-box": rectangular_box_probability,
}
SAMPLED_METHODS = ("mc", "lambert")


def estimate(method: str, q: CollisionQuery, n_samples: int = 1_000_000, seed: int = 0) -> ProbabilityEstimate:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method id {method!r}; expected one of {sorted(METHODS)}") from None
    if method in SAMPLED_METHODS:
        return fn(q, n_samples=n_samples, seed=seed)
    return fn(q)


@dataclass(frozen=True)
class TimingStats:
    method: str
    repetitions: int
    mean_ms: float
    std_ms: float


def benchmark_method(
    method: str, q: CollisionQuery, repetitions: int = 100, n_samples: int = 100_000, seed: int = 0
) -> TimingStats:
    """Wall time per call over ``repetitions`` calls after one warm-up call."""
    if repetitions < 2:
        raise ValueError("repetitions must be >= 2")
    if method not in METHODS:
        raise ValueError(f"unknown method id {method!r}")
    estimate(method, q, n_samples, seed)
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        estimate(method, q, n_samples, seed)
        times.append((time.perf_counter() - t0) * 1e3)
    return TimingStats(method, repetitions, statistics.fmean(times), statistics.stdev(times))
