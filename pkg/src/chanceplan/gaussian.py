"""Small symmetric linear algebra, Gaussian beliefs and the special functions
used by every probability computation (positions are 2-D or 3-D)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUPPORTED_DOF = (2, 3)
SYMMETRY_RTOL = 1e-12
# relative gap under which the 3x3 closed form hands over to Jacobi
DEGENERATE_GAP = 1e-9
DEGENERATE_COV = 1e-12


class DegenerateCovarianceError(ValueError):
    pass


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_symmetric(m, dim: int | None = None) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 0 and dim is not None:
        a = np.eye(dim) * float(a)
    elif a.ndim == 1:
        a = np.diag(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ValueError(f"expected a {dim}x{dim} matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(a))), 1.0)
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    return a


@dataclass(frozen=True)
class GaussianBelief:
    """Normal distribution over a 2-D or 3-D position."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean)
        cov = as_symmetric(self.cov, mean.size)
        tr = float(np.trace(cov))
        if mean.size > 1 and np.min(np.linalg.eigvalsh(cov)) < -1e-10 * max(tr, 1e-300):
            raise ValueError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def point(cls, mean) -> "GaussianBelief":
        m = as_vector(mean)
        return cls(m, np.zeros((m.size, m.size)))


def relative_belief(a: GaussianBelief, b: GaussianBelief) -> GaussianBelief:
    """Distribution of ``a - b`` for independent ``a`` and ``b``."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return GaussianBelief(a.mean - b.mean, a.cov + b.cov)


# -- eigen decomposition -------------------------------------------------------


def _eigen_2x2(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, d = m[0, 0], m[0, 1], m[1, 1]
    half_tr = 0.5 * (a + d)
    half_diff = 0.5 * (a - d)
    rad = math.hypot(half_diff, b)
    lam = np.array([half_tr + rad, half_tr - rad])
    if b == 0.0:
        if a >= d:
            q = np.eye(2)
        else:
            q = np.array([[0.0, 1.0], [1.0, 0.0]])
        return lam, q
    # rotation angle of the principal axis, stable for all sign patterns
    phi = 0.5 * math.atan2(2.0 * b, a - d)
    c, s = math.cos(phi), math.sin(phi)
    q = np.array([[c, -s], [s, c]])
    return lam, q


def _jacobi(m: np.ndarray, sweeps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    a = m.copy()
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= 1e-300 or off <= 1e-17 * np.linalg.norm(a):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(a[p, q]) < 1e-18 * abs(diff):
                    t = a[p, q] / diff
                else:
                    theta = diff / (2.0 * a[p, q])
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return lam[order], v[:, order]


def _eigvec_3x3(m: np.ndarray, lam: float) -> np.ndarray:
    r = m - lam * np.eye(3)
    crosses = (np.cross(r[0], r[1]), np.cross(r[0], r[2]), np.cross(r[1], r[2]))
    best = max(crosses, key=lambda c: float(c @ c))
    return best / math.sqrt(float(best @ best))


def _eigen_3x3(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    q = float(np.trace(m)) / 3.0
    p2 = (m[0, 0] - q) ** 2 + (m[1, 1] - q) ** 2 + (m[2, 2] - q) ** 2 + 2.0 * p1
    scale = max(float(np.max(np.abs(m))), 1e-300)
    if p2 <= (DEGENERATE_GAP * scale) ** 2:
        return _jacobi(m)
    p = math.sqrt(p2 / 6.0)
    b = (m - q * np.eye(3)) / p
    r = min(1.0, max(-1.0, float(np.linalg.det(b)) / 2.0))
    phi = math.acos(r) / 3.0
    l1 = q + 2.0 * p * math.cos(phi)
    l3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    l2 = 3.0 * q - l1 - l3
    lam = np.array([l1, l2, l3])
    gaps = (l1 - l2, l2 - l3)
    if min(gaps) <= DEGENERATE_GAP * max(abs(l1), abs(l3), scale):
        return _jacobi(m)
    v1 = _eigvec_3x3(m, l1)
    v3 = _eigvec_3x3(m, l3)
    v3 = v3 - (v3 @ v1) * v1
    v3 /= np.linalg.norm(v3)
    v2 = np.cross(v3, v1)
    qmat = np.column_stack([v1, v2, v3])
    # closed-form vectors lose accuracy for close eigenvalues; verify and fall back
    resid = np.max(np.abs(qmat @ np.diag(lam) @ qmat.T - m))
    if not resid <= 1e-13 * scale:
        return _jacobi(m)
    return lam, qmat


def eigen_sym(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvector columns of a
    symmetric 2x2 or 3x3 matrix."""
    a = as_symmetric(m)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return np.array([a[0, 0]]), np.ones((1, 1))
    if n not in (2, 3):
        raise ValueError(f"unsupported matrix size {n}")
    # work on unit-scale entries so tiny or huge matrices neither under- nor overflow
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return np.zeros(n), np.eye(n)
    lam, vec = (_eigen_2x2 if n == 2 else _eigen_3x3)(a / scale)
    return lam * scale, vec


def max_eigenvalue(m) -> float:
    return float(eigen_sym(m)[0][0])


def min_eigenvalue(m) -> float:
    return float(eigen_sym(m)[0][-1])


def inverse_max_eigenvalue(cov) -> float:
    """Largest eigenvalue of ``cov^-1``, computed as ``1 / lambda_min(cov)``."""
    c = as_symmetric(cov)
    lam_min = min_eigenvalue(c)
    tr = float(np.trace(c))
    if tr <= 0.0 or lam_min <= DEGENERATE_COV * tr:
        raise DegenerateCovarianceError("degenerate covariance")
    return 1.0 / lam_min


# -- special functions -----------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _check_dof(n: int) -> None:
    if n not in SUPPORTED_DOF:
        raise ValueError(f"unsupported degrees of freedom {n}; expected 2 or 3")


def chi2_cdf(x: float, n: int) -> float:
    _check_dof(n)
    if not x > 0.0:
        return 0.0
    if n == 2:
        return -math.expm1(-0.5 * x)
    val = math.erf(math.sqrt(0.5 * x)) - _SQRT_2_OVER_PI * math.sqrt(x) * math.exp(-0.5 * x)
    return min(1.0, max(0.0, val))


def chi2_pdf(x: float, n: int) -> float:
    _check_dof(n)
    if x <= 0.0:
        return 0.0
    if n == 2:
        return 0.5 * math.exp(-0.5 * x)
    return math.sqrt(x) * math.exp(-0.5 * x) / (_SQRT2 * math.sqrt(math.pi))


def chi2_inv_cdf(eps: float, n: int) -> float:
    """Quantile of the chi-squared distribution by bracketed bisection with
    Newton refinement."""
    _check_dof(n)
    if not 0.0 <= eps < 1.0:
        raise ValueError(f"probability {eps} outside [0, 1)")
    if eps == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while chi2_cdf(hi, n) < eps:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(x, n) - eps
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 1e-12:
            return 0.5 * (lo + hi)
        d = chi2_pdf(x, n)
        newton = x - f / d if d > 0.0 else math.nan
        if lo < newton < hi:
            if abs(newton - x) <= 1e-15 * max(x, 1.0):
                return newton
            x = newton
        else:
            x = 0.5 * (lo + hi)
    return x


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)
