"""Hyperboloid, Poincaré ball, sphere and Euclidean geometry.

All functions operate on float64 numpy arrays and broadcast over leading axes;
the last axis holds coordinates. Curvature ``k`` is negative for the
hyperbolic models and positive for the sphere. Hyperboloid points live in
R^{d,1} with the time-like coordinate stored LAST.

Inverse trig/hyperbolic arguments are clamped to their closed domain when they
overshoot by less than a tolerance, and raise :class:`DomainError` otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CurvatureMismatchError,
    DimensionError,
    DomainError,
    TangencyError,
)

CLAMP_TOL = 1e-12
HYPERBOLOID_TOL = 1e-9
MOBIUS_MIN_DENOM = 1e-15
BALL_MARGIN = 1e-12


def _as_array(x):
    return np.asarray(x, dtype=np.float64)


def _sqrt_neg(k):
    if not k < 0:
        raise DomainError(f"hyperbolic curvature must be negative, got k={k}")
    return np.sqrt(-k)


def _clamp(values, lo, hi, tol, what):
    values = _as_array(values)
    if np.any(values < lo - tol) or np.any(values > hi + tol) or np.any(np.isnan(values)):
        bad = values[(values < lo - tol) | (values > hi + tol) | np.isnan(values)]
        raise DomainError(f"{what} argument {bad.ravel()[0]!r} outside [{lo}, {hi}]")
    return np.clip(values, lo, hi)


def _acosh1p(t):
    """acosh(1 + t) for t >= 0 without cancellation near t = 0."""
    return np.log1p(t + np.sqrt(t * (t + 2.0)))


def _sqnorm(x):
    return np.sum(x * x, axis=-1)


# --------------------------------------------------------------------------
# Typed values
# --------------------------------------------------------------------------


class SpaceKind(enum.Enum):
    EUCLIDEAN_SQUARED = "euclidean"
    POINCARE_BALL = "poincare"
    FIXED_RADIUS_SPHERE = "sphere"


@dataclass(frozen=True)
class CurvatureSpace:
    """Metric space used for prototypical classification.

    For the sphere ``k`` is the positive curvature and the radius is
    ``1/sqrt(k)``; for the ball ``epsilon`` is the boundary margin.
    """

    kind: SpaceKind
    k: float = 0.0
    epsilon: float = 1e-3

    def __post_init__(self):
        if self.kind is SpaceKind.POINCARE_BALL:
            if not self.k < 0:
                raise DomainError(f"Poincaré ball needs k < 0, got {self.k}")
            if not 0.0 < self.epsilon < 1.0:
                raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        elif self.kind is SpaceKind.FIXED_RADIUS_SPHERE:
            if not self.k > 0:
                raise DomainError(f"sphere needs k > 0, got {self.k}")

    @classmethod
    def euclidean(cls):
        return cls(SpaceKind.EUCLIDEAN_SQUARED)

    @classmethod
    def poincare(cls, k, epsilon=1e-3):
        return cls(SpaceKind.POINCARE_BALL, float(k), float(epsilon))

    @classmethod
    def sphere(cls, r):
        if not r > 0:
            raise DomainError(f"sphere radius must be positive, got {r}")
        return cls(SpaceKind.FIXED_RADIUS_SPHERE, 1.0 / float(r) ** 2)

    @property
    def radius(self):
        """Sphere radius, or the (uncapped) ball radius."""
        if self.kind is SpaceKind.FIXED_RADIUS_SPHERE:
            return 1.0 / np.sqrt(self.k)
        if self.kind is SpaceKind.POINCARE_BALL:
            return 1.0 / np.sqrt(-self.k)
        return np.inf

    @property
    def effective_radius(self):
        if self.kind is not SpaceKind.POINCARE_BALL:
            raise DomainError("effective radius is only defined for the Poincaré ball")
        return effective_radius(self.epsilon, self.k)

    def describe(self):
        if self.kind is SpaceKind.POINCARE_BALL:
            return f"poincare(k={self.k:g})"
        if self.kind is SpaceKind.FIXED_RADIUS_SPHERE:
            return f"sphere(r={self.radius:.6g})"
        return "euclidean"


def _check_same_k(a, b):
    if a.k != b.k:
        raise CurvatureMismatchError(f"curvature mismatch: {a.k} vs {b.k}")
    if a.coords.shape != b.coords.shape:
        raise DimensionError(f"dimension mismatch: {a.coords.shape} vs {b.coords.shape}")


@dataclass(frozen=True, eq=False)
class PoincarePoint:
    coords: np.ndarray
    k: float

    def __post_init__(self):
        coords = _as_array(self.coords).copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        _sqrt_neg(self.k)
        if coords.ndim != 1:
            raise DimensionError("PoincarePoint coords must be a vector")
        if _sqnorm(coords) >= -1.0 / self.k:
            raise DomainError("point lies outside the Poincaré ball")

    def distance(self, other):
        _check_same_k(self, other)
        return float(poincare_distance(self.coords, other.coords, self.k))

    def __add__(self, other):
        _check_same_k(self, other)
        return PoincarePoint(mobius_add(self.coords, other.coords, self.k), self.k)

    def __neg__(self):
        return PoincarePoint(-self.coords, self.k)

    def to_hyperboloid(self):
        return HyperboloidPoint(inverse_stereographic(self.coords, self.k), self.k)


@dataclass(frozen=True, eq=False)
class HyperboloidPoint:
    coords: np.ndarray
    k: float

    def __post_init__(self):
        coords = _as_array(self.coords).copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        _sqrt_neg(self.k)
        if coords.ndim != 1 or coords.shape[0] < 2:
            raise DimensionError("HyperboloidPoint coords must be a vector of length >= 2")
        form = lorentz_inner(coords, coords)
        if abs(form - 1.0 / self.k) > HYPERBOLOID_TOL * max(1.0, coords[-1] ** 2):
            raise DomainError(f"<x,x>_L = {form} differs from 1/k = {1.0 / self.k}")
        if coords[-1] <= 0:
            raise DomainError("point is not on the upper sheet")

    def distance(self, other):
        _check_same_k(self, other)
        return float(hyperboloid_distance(self.coords, other.coords, self.k))

    def exp(self, tangent):
        return HyperboloidPoint(hyperboloid_exp(self.coords, tangent, self.k), self.k)

    def to_poincare(self):
        return PoincarePoint(stereographic(self.coords, self.k), self.k)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Tangent vector; ``base`` of None means the origin of the ball."""

    coords: np.ndarray
    base: HyperboloidPoint | None = field(default=None)

    def __post_init__(self):
        coords = _as_array(self.coords)
        object.__setattr__(self, "coords", coords)
        if self.base is not None:
            _check_tangent(self.base.coords, coords)


# --------------------------------------------------------------------------
# Hyperboloid model
# --------------------------------------------------------------------------


def lorentz_inner(x, y):
    """Lorentz pseudometric: sum_{i<=d} x_i y_i - x_{d+1} y_{d+1}."""
    x, y = _as_array(x), _as_array(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.shape[-1] < 2:
        raise DimensionError("Minkowski vectors need length >= 2")
    prod = x * y
    return np.sum(prod[..., :-1], axis=-1) - prod[..., -1]


def hyperboloid_distance(x, y, k):
    """Geodesic distance on the upper sheet of ``<x,x>_L = 1/k``.

    Evaluates acosh(k<x,y>_L) as acosh(1 + t) with ``t = -k/2 <x-y,x-y>_L``,
    which equals ``k<x,y>_L - 1`` on the hyperboloid but avoids cancellation
    for nearby points.
    """
    x, y = _as_array(x), _as_array(y)
    s = _sqrt_neg(k)
    diff = x - y
    t = -0.5 * k * lorentz_inner(diff, diff)
    scale = np.maximum(1.0, -k * np.abs(x[..., -1] * y[..., -1]))
    if np.any(t < -HYPERBOLOID_TOL * scale):
        raise DomainError("acosh argument below 1: points are not on one hyperboloid sheet")
    return _acosh1p(np.maximum(t, 0.0)) / s


def _check_tangent(base, v):
    form = lorentz_inner(base, v)
    if np.any(np.abs(form) > HYPERBOLOID_TOL * np.maximum(1.0, np.abs(base[..., -1]) * np.max(np.abs(v)))):
        raise TangencyError(f"<base, v>_L = {form} is not zero")


def hyperboloid_exp(base, v, k):
    """Exponential map on the hyperboloid at ``base``."""
    base = _as_array(base)
    v = _as_array(v.coords if isinstance(v, TangentVector) else v)
    s = _sqrt_neg(k)
    _check_tangent(base, v)
    vv = lorentz_inner(v, v)
    if np.any(vv < -HYPERBOLOID_TOL):
        raise TangencyError("tangent vector has negative Lorentz norm")
    theta = (np.sqrt(np.maximum(vv, 0.0)) * s)[..., None]
    # sinh(theta)/theta -> 1 as theta -> 0
    safe = np.where(theta > 0, theta, 1.0)
    ratio = np.where(theta > 0, np.sinh(safe) / safe, 1.0)
    return np.cosh(theta) * base + ratio * v


def inclusion(u, k):
    """Local coordinates -> hyperboloid: (u, sqrt(|u|^2 - 1/k))."""
    u = _as_array(u)
    _sqrt_neg(k)
    last = np.sqrt(_sqnorm(u) - 1.0 / k)
    return np.concatenate([u, last[..., None]], axis=-1)


def stereographic(x, k):
    """Projection of the hyperboloid onto the Poincaré ball."""
    x = _as_array(x)
    s = _sqrt_neg(k)
    return x[..., :-1] / (1.0 + s * x[..., -1:])


def conformal_factor(u, k):
    """lambda(u) = 2 / (1 + k |u|^2)."""
    u = _as_array(u)
    return 2.0 / (1.0 + k * _sqnorm(u))


def _check_in_ball(u, k):
    if np.any(_sqnorm(u) * -k >= 1.0):
        raise DomainError("point lies on or outside the Poincaré ball boundary")


def inverse_stereographic(u, k):
    u = _as_array(u)
    s = _sqrt_neg(k)
    _check_in_ball(u, k)
    lam = conformal_factor(u, k)
    return np.concatenate([lam[..., None] * u, ((lam - 1.0) / s)[..., None]], axis=-1)


# --------------------------------------------------------------------------
# Poincaré ball
# --------------------------------------------------------------------------


def poincare_exp0(v, k):
    """Exponential map at the origin of the ball."""
    v = _as_array(v)
    s = _sqrt_neg(k)
    n = s * np.sqrt(_sqnorm(v))[..., None]
    safe = np.where(n > 0, n, 1.0)
    return np.where(n > 0, np.tanh(safe) / safe, 1.0) * v


def mobius_add(x, y, k):
    """Möbius addition x ⊕ y in the ball of curvature k."""
    x, y = _as_array(x), _as_array(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    s = _sqrt_neg(k)
    xy = np.sum(x * y, axis=-1)
    xx = _sqnorm(x)
    yy = _sqnorm(y)
    num = (1.0 - 2.0 * k * xy - k * yy)[..., None] * x + (1.0 + k * xx)[..., None] * y
    den = 1.0 - 2.0 * k * xy + k * k * xx * yy
    if np.any(np.abs(den) < MOBIUS_MIN_DENOM):
        raise DomainError("Möbius addition denominator vanishes")
    out = num / den[..., None]
    limit = (1.0 - BALL_MARGIN) / s
    norm = np.sqrt(_sqnorm(out))[..., None]
    return np.where(norm > limit, out * (limit / np.where(norm > 0, norm, 1.0)), out)


def _mobius_diff_norm_terms(x, y, k):
    """Return (s*|−x⊕y|, 1 − (s*|−x⊕y|)^2) computed without cancellation."""
    xx = _sqnorm(x)
    yy = _sqnorm(y)
    xy = np.sum(x * y, axis=-1)
    dd = _sqnorm(x - y)
    # |−x⊕y|^2 = |x−y|^2 / D, and 1 + k|−x⊕y|^2 = (1+k|x|^2)(1+k|y|^2) / D
    den = 1.0 + 2.0 * k * xy + k * k * xx * yy
    if np.any(np.abs(den) < MOBIUS_MIN_DENOM):
        raise DomainError("Möbius addition denominator vanishes")
    arg = np.sqrt(-k * dd / den)
    one_minus_sq = (1.0 + k * xx) * (1.0 + k * yy) / den
    return arg, one_minus_sq


def poincare_distance(x, y, k):
    """Geodesic distance (2/sqrt(-k)) atanh(sqrt(-k) |−x ⊕ y|).

    atanh(a) is evaluated as log(1 + a) - log(1 - a^2)/2 where 1 - a^2 comes
    from the exact factorisation ``(1+k|x|^2)(1+k|y|^2)/D``.
    """
    x, y = _as_array(x), _as_array(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    s = _sqrt_neg(k)
    arg, one_minus_sq = _mobius_diff_norm_terms(x, y, k)
    arg = _clamp(arg, 0.0, 1.0, CLAMP_TOL, "atanh")
    if np.any(one_minus_sq <= 0):
        raise DomainError("atanh argument reaches 1: point on or beyond the boundary")
    return (2.0 / s) * (np.log1p(arg) - 0.5 * np.log(one_minus_sq))


def fixed_radius_hyperbolic_distance(r, alpha, k):
    """Distance between two ball points of equal norm ``r`` at angle ``alpha``.

    acosh(a + b cos(alpha)) with a + b = 1 is evaluated as
    acosh(1 - 2 b sin^2(alpha/2)).
    """
    r = _as_array(r)
    alpha = _as_array(alpha)
    s = _sqrt_neg(k)
    if np.any(r < 0) or np.any(r * s >= 1.0):
        raise DomainError("r must lie in [0, 1/sqrt(-k))")
    if np.any(alpha < -CLAMP_TOL) or np.any(alpha > np.pi + CLAMP_TOL):
        raise DomainError("alpha must lie in [0, pi]")
    kr2 = k * r * r
    b = 4.0 * kr2 / (1.0 + kr2) ** 2
    t = -2.0 * b * np.sin(0.5 * alpha) ** 2
    t = _clamp(t, 0.0, np.inf, CLAMP_TOL, "acosh")
    return _acosh1p(t) / s


def effective_radius(epsilon, k):
    """Capped ball radius (1 - epsilon)/sqrt(-k)."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon}")
    return (1.0 - epsilon) / _sqrt_neg(k)


def clipped_radius(c, k):
    """Largest embedding norm reachable from features clipped at norm ``c``."""
    if not c > 0:
        raise DomainError(f"clip value must be positive, got {c}")
    s = _sqrt_neg(k)
    return np.tanh(s * c) / s


def project_to_ball(z, k, epsilon):
    """Rescale rows of ``z`` whose norm exceeds the effective radius."""
    z = _as_array(z)
    cap = effective_radius(epsilon, k)
    norm = np.sqrt(_sqnorm(z))[..., None]
    return np.where(norm > cap, z * (cap / np.where(norm > 0, norm, 1.0)), z)


def hyperbolic_radius_of(r_euclidean, k):
    """Hyperbolic distance from the origin of a ball point with Euclidean norm r."""
    r = _as_array(r_euclidean)
    s = _sqrt_neg(k)
    big_r = 1.0 / s
    if np.any(r < 0) or np.any(r >= big_r):
        raise DomainError("Euclidean radius must lie in [0, 1/sqrt(-k))")
    return np.log((big_r + r) / (big_r - r)) / s


def isometric_sphere_radius(hyperbolic_radius, k):
    """Radius of the Euclidean sphere isometric to a hyperbolic sphere."""
    rho = _as_array(hyperbolic_radius)
    if np.any(rho < 0):
        raise DomainError("hyperbolic radius must be nonnegative")
    s = _sqrt_neg(k)
    return np.sinh(rho * s) / s


def boundary_sphere_radius(r_euclidean, k):
    """Isometric Euclidean radius of the sphere of ball points at norm r.

    Composition of :func:`hyperbolic_radius_of` and
    :func:`isometric_sphere_radius`, simplified to ``2r / (1 + k r^2)``.
    """
    r = _as_array(r_euclidean)
    if np.any(r < 0) or np.any(r * _sqrt_neg(k) >= 1.0):
        raise DomainError("Euclidean radius must lie in [0, 1/sqrt(-k))")
    return 2.0 * r / (1.0 + k * r * r)


# --------------------------------------------------------------------------
# Sphere and Euclidean
# --------------------------------------------------------------------------


def spherical_distance(x, y, k):
    """Great-circle distance on the sphere of radius 1/sqrt(k)."""
    x, y = _as_array(x), _as_array(y)
    if not k > 0:
        raise DomainError(f"spherical curvature must be positive, got {k}")
    r2 = 1.0 / k
    for p in (x, y):
        if np.any(np.abs(_sqnorm(p) - r2) > HYPERBOLOID_TOL * max(1.0, r2)):
            raise DomainError("point is not on the sphere of radius 1/sqrt(k)")
    cos = _clamp(k * np.sum(x * y, axis=-1), -1.0, 1.0, CLAMP_TOL, "acos")
    return np.arccos(cos) / np.sqrt(k)


def chordal_distance(x, y):
    """Plain Euclidean distance |x - y|."""
    x, y = _as_array(x), _as_array(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return np.sqrt(_sqnorm(x - y))
