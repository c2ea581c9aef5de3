"""Robot motion models and EKF belief propagation.

Two models share one interface: the unicycle ``(x, y, theta)`` driven by
``(v, omega)``, and a 3-D double integrator ``(p, v)`` driven by acceleration
(a stand-in for quadrotor dynamics). Both provide single steps, Jacobians,
and a batched rollout with a vector-Jacobian product used by the planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

OMEGA_EPS = 1e-6
# below this |h| the sinc derivative uses its Taylor series
_SINC_SERIES = 1e-3


def wrap_angle(a):
    """Wrap to (-pi, pi]; angles already in range are returned unchanged."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w == -math.pi, math.pi, w)
    w = np.where((a > -math.pi) & (a <= math.pi), a, w)
    return float(w) if np.ndim(w) == 0 else w


def _sinc(h):
    h = np.asarray(h, dtype=float)
    return np.sinc(h / math.pi)


def _dsinc(h):
    h = np.asarray(h, dtype=float)
    small = np.abs(h) < _SINC_SERIES
    hs = np.where(small, 1.0, h)
    exact = (hs * np.cos(hs) - np.sin(hs)) / (hs * hs)
    series = -h / 3.0 + h**3 / 30.0
    return np.where(small, series, exact)


def unicycle_step(x, u, dt: float) -> np.ndarray:
    """Exact arc integration of the unicycle over ``dt``; straight-line Taylor
    form when ``|omega| < 1e-6``."""
    px, py, th = (float(c) for c in x)
    v, w = float(u[0]), float(u[1])
    if abs(w) >= OMEGA_EPS:
        # (v/w)(sin(th + w dt) - sin th) rewritten as a product, which avoids
        # the cancellation of the difference form when w is small
        h = 0.5 * w * dt
        chord = v * dt * math.sin(h) / h
        nx = px + chord * math.cos(th + h)
        ny = py + chord * math.sin(th + h)
    else:
        c, s = math.cos(th), math.sin(th)
        nx = px + v * dt * c - 0.5 * v * w * dt * dt * s
        ny = py + v * dt * s + 0.5 * v * w * dt * dt * c
    return np.array([nx, ny, wrap_angle(th + w * dt)])


def unicycle_jacobians(x, u, dt: float) -> tuple[np.ndarray, np.ndarray]:
    th = float(x[2])
    v, w = float(u[0]), float(u[1])
    h = 0.5 * w * dt
    m = th + h
    s, ds = float(_sinc(h)), float(_dsinc(h))
    cm, sm = math.cos(m), math.sin(m)
    dx = v * dt * cm * s
    dy = v * dt * sm * s
    f = np.array([[1.0, 0.0, -dy], [0.0, 1.0, dx], [0.0, 0.0, 1.0]])
    g = np.array(
        [
            [dt * cm * s, v * dt * 0.5 * dt * (-sm * s + cm * ds)],
            [dt * sm * s, v * dt * 0.5 * dt * (cm * s + sm * ds)],
            [0.0, dt],
        ]
    )
    return f, g


@dataclass(frozen=True)
class Unicycle:
    name: str = "unicycle"
    nx: int = 3
    nu: int = 2
    npos: int = 2

    def step(self, x, u, dt):
        return unicycle_step(x, u, dt)

    def jacobians(self, x, u, dt):
        return unicycle_jacobians(x, u, dt)

    def measurement_matrix(self) -> np.ndarray:
        return np.eye(3)

    def angle_mask(self) -> np.ndarray:
        return np.array([False, False, True])

    def position(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., :2]

    def wrap(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        x[..., 2] = wrap_angle(x[..., 2])
        return x

    def rollout(self, x0, controls, dt: float) -> np.ndarray:
        """States for steps 0..L in the sinc form of the arc update, which is
        branch-free and differentiates cleanly. Plain float loops: horizons
        are short and numpy call overhead dominates at this size."""
        x, y, th = (float(c) for c in x0)
        out = [(x, y, th)]
        for v, w in np.asarray(controls, dtype=float).reshape(-1, 2).tolist():
            h = 0.5 * w * dt
            s = math.sin(h) / h if h != 0.0 else 1.0
            m = th + h
            x += v * dt * math.cos(m) * s
            y += v * dt * math.sin(m) * s
            th += w * dt
            out.append((x, y, th))
        states = np.array(out)
        states[:, 2] = wrap_angle(states[:, 2])
        return states

    def rollout_vjp(self, x0, controls, dt: float, states: np.ndarray, grad_states: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. controls of ``sum(grad_states * states)``."""
        u = np.asarray(controls, dtype=float).reshape(-1, 2).tolist()
        g = np.asarray(grad_states, dtype=float).tolist()
        n = len(u)
        th = float(x0[2])
        parts = []
        for v, w in u:
            h = 0.5 * w * dt
            if abs(h) < _SINC_SERIES:
                s = 1.0 - h * h / 6.0 + h**4 / 120.0 if h != 0.0 else 1.0
                ds = -h / 3.0 + h**3 / 30.0
            else:
                s = math.sin(h) / h
                ds = (h * math.cos(h) - math.sin(h)) / (h * h)
            m = th + h
            parts.append((v, math.cos(m), math.sin(m), s, ds))
            th += w * dt
        out = np.empty((n, 2))
        a = b = c = 0.0  # sums of state gradients after step j
        later = 0.0  # sum over j > i of heading sensitivities
        half = 0.5 * dt * dt
        for j in range(n - 1, -1, -1):
            a += g[j + 1][0]
            b += g[j + 1][1]
            c += g[j + 1][2]
            v, cm, sm, s, ds = parts[j]
            out[j, 0] = dt * s * (a * cm + b * sm)
            out[j, 1] = v * half * (a * (cm * ds - sm * s) + b * (cm * s + sm * ds)) + later + dt * c
            later += dt * v * dt * s * (b * cm - a * sm)
        return out


@dataclass(frozen=True)
class DoubleIntegrator3D:
    name: str = "double-integrator-3d"
    nx: int = 6
    nu: int = 3
    npos: int = 3

    def step(self, x, u, dt):
        x = np.asarray(x, dtype=float)
        a = np.asarray(u, dtype=float)
        p, v = x[:3], x[3:]
        return np.concatenate((p + v * dt + 0.5 * a * dt * dt, v + a * dt))

    def jacobians(self, x, u, dt):
        f = np.eye(6)
        f[:3, 3:] = dt * np.eye(3)
        g = np.vstack((0.5 * dt * dt * np.eye(3), dt * np.eye(3)))
        return f, g

    def measurement_matrix(self) -> np.ndarray:
        return np.hstack((np.eye(3), np.zeros((3, 3))))

    def angle_mask(self) -> np.ndarray:
        return np.zeros(3, dtype=bool)

    def position(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., :3]

    def wrap(self, x) -> np.ndarray:
        return np.array(x, dtype=float)

    @staticmethod
    def _weights(n: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(n + 1)[:, None]
        j = np.arange(n)[None, :]
        later = j < k
        pos = np.where(later, dt * dt * (k - j - 0.5), 0.0)
        vel = np.where(later, dt, 0.0)
        return pos, vel

    def rollout(self, x0, controls, dt: float) -> np.ndarray:
        a = np.asarray(controls, dtype=float).reshape(-1, 3)
        n = a.shape[0]
        x0 = np.asarray(x0, dtype=float)
        pos_w, vel_w = self._weights(n, dt)
        t = dt * np.arange(n + 1)[:, None]
        out = np.empty((n + 1, 6))
        out[:, :3] = x0[:3] + t * x0[3:] + pos_w @ a
        out[:, 3:] = x0[3:] + vel_w @ a
        return out

    def rollout_vjp(self, x0, controls, dt: float, states: np.ndarray, grad_states: np.ndarray) -> np.ndarray:
        n = np.asarray(controls).reshape(-1, 3).shape[0]
        pos_w, vel_w = self._weights(n, dt)
        return pos_w.T @ grad_states[:, :3] + vel_w.T @ grad_states[:, 3:]


MODELS = {"unicycle": Unicycle(), "double-integrator-3d": DoubleIntegrator3D()}


def motion_jacobians(x, u, dt: float, model=None) -> tuple[np.ndarray, np.ndarray]:
    """``(df/dx, df/du)`` of one motion step."""
    model = model or MODELS["unicycle"]
    return model.jacobians(x, u, dt)


# -- EKF ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class BeliefState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).copy())
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).copy())


@dataclass(frozen=True)
class NoiseSpec:
    R: np.ndarray  # process noise per step
    Q: np.ndarray  # measurement noise

    @staticmethod
    def unicycle(process=(1e-4, 1e-4, 1e-4), measurement=(0.02, 0.02, 1.2 * (math.pi / 180.0) ** 2)):
        return NoiseSpec(np.diag(process), np.diag(measurement))

    @staticmethod
    def double_integrator(process=(1e-4,) * 6, measurement=(0.02, 0.02, 0.02)):
        return NoiseSpec(np.diag(process), np.diag(measurement))


def _symmetrize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + c.T)


def ekf_predict(b: BeliefState, u, dt: float, R, model=None) -> BeliefState:
    model = model or MODELS["unicycle"]
    f, _ = model.jacobians(b.mean, u, dt)
    cov = _symmetrize(f @ b.cov @ f.T + np.asarray(R, dtype=float))
    return BeliefState(model.step(b.mean, u, dt), cov)


def ekf_update(b: BeliefState, z, Q, model=None) -> BeliefState:
    """Kalman update with a linear pose measurement and Joseph-form covariance."""
    model = model or MODELS["unicycle"]
    h = model.measurement_matrix()
    q = np.asarray(Q, dtype=float)
    innov = np.asarray(z, dtype=float) - h @ b.mean
    mask = model.angle_mask()
    if mask.any():
        innov[mask] = wrap_angle(innov[mask])
    s = h @ b.cov @ h.T + q
    k = np.linalg.solve(s, h @ b.cov).T
    mean = model.wrap(b.mean + k @ innov)
    ikh = np.eye(b.mean.size) - k @ h
    cov = _symmetrize(ikh @ b.cov @ ikh.T + k @ q @ k.T)
    lam_min = float(np.min(np.linalg.eigvalsh(cov)))
    if not np.all(np.isfinite(cov)) or lam_min < -1e-10 * max(float(np.trace(cov)), 1e-300):
        raise FloatingPointError("filter divergence")
    return BeliefState(mean, cov)


def propagate_horizon(b: BeliefState, controls, dt: float, R, model=None) -> list[BeliefState]:
    """Predicted beliefs along a fixed control sequence (the previous loop's
    solution); the planner treats these covariances as constants."""
    out = [b]
    for u in np.asarray(controls, dtype=float).reshape(len(controls), -1) if len(controls) else []:
        out.append(ekf_predict(out[-1], u, dt, R, model))
    return out
