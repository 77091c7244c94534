"""Volume, area and volume/area ratio of hyperbolic balls.

The ratio V/A is integrated directly as
``int_0^r (sinh(sqrt(-k) t) / sinh(sqrt(-k) r))^(d-1) dt`` so that no huge
prefactors ever meet. For large ``d`` the integrand is a sharp spike at
``t = r``; we integrate in ``s = r - t`` on panels whose widths grow
geometrically away from ``s = 0``.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, QuadratureError

log = logging.getLogger(__name__)

RTOL = 1e-10
HARD_RTOL = 1e-6
MAX_SUBDIVISIONS = 2000

# 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1] (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes (x2, x4, x6, 0, ...).
_GAUSS_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
GAUSS_WEIGHTS = np.concatenate([_WG[:-1], _WG[::-1]])


def gauss_kronrod(f, a, b):
    """One G7/K15 panel on [a, b]; returns (kronrod estimate, |K - G|)."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    fx = f(mid + half * KRONROD_NODES)
    kron = half * np.dot(KRONROD_WEIGHTS, fx)
    gauss = half * np.dot(GAUSS_WEIGHTS, fx[_GAUSS_IDX])
    return kron, abs(kron - gauss)


def adaptive_integrate(f, breakpoints, rtol=RTOL, atol=0.0, hard_rtol=HARD_RTOL,
                       max_subdivisions=MAX_SUBDIVISIONS):
    """Globally adaptive Gauss–Kronrod quadrature.

    ``f`` must accept a numpy array of abscissae. ``breakpoints`` is an
    increasing sequence defining the initial panels; the panel with the
    largest error estimate is bisected until the summed estimate drops below
    ``max(atol, rtol * |I|)``. Returns ``(integral, error_estimate)``.
    """
    pts = np.asarray(breakpoints, dtype=np.float64)
    if pts.ndim != 1 or pts.size < 2 or np.any(np.diff(pts) <= 0):
        raise ValueError("breakpoints must be a strictly increasing sequence of length >= 2")
    heap = []
    total = 0.0
    err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, e = gauss_kronrod(f, a, b)
        heap.append((-e, a, b, val))
        total += val
        err += e
    heapq.heapify(heap)
    n_split = 0
    while err > max(atol, rtol * abs(total)) and n_split < max_subdivisions:
        neg_e, a, b, val = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not a < m < b:
            heapq.heappush(heap, (neg_e, a, b, val))
            break
        v1, e1 = gauss_kronrod(f, a, m)
        v2, e2 = gauss_kronrod(f, m, b)
        total += v1 + v2 - val
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, a, m, v1))
        heapq.heappush(heap, (-e2, m, b, v2))
        n_split += 1
    # re-sum to shed accumulated rounding from the running updates
    total = math.fsum(item[3] for item in heap)
    err = math.fsum(-item[0] for item in heap)
    if not np.isfinite(total) or err > max(atol, hard_rtol * abs(total)):
        raise QuadratureError(
            f"quadrature did not converge: estimate={total!r}, error={err!r}, "
            f"panels={len(heap)}",
            estimate=total, error=err, intervals=len(heap),
        )
    if err > max(atol, rtol * abs(total)):
        log.warning("quadrature reached only rel. error %.3g (target %.3g)",
                    err / abs(total) if total else err, rtol)
    return total, err


# --------------------------------------------------------------------------
# Gamma function at half-integers
# --------------------------------------------------------------------------


def log_gamma_half_integer(n):
    """log Γ(n/2) for integer n >= 1."""
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    if n / 2 > 170:
        return math.lgamma(n / 2)
    return math.log(gamma_half_integer(n))


def gamma_half_integer(n):
    """Γ(n/2) via Γ(z+1) = zΓ(z) from Γ(1) = 1 or Γ(1/2) = sqrt(pi)."""
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    if n / 2 > 170:
        return math.exp(math.lgamma(n / 2))
    if n % 2 == 0:
        return float(math.factorial(n // 2 - 1))
    value = math.sqrt(math.pi)
    z = 0.5
    while z < n / 2:
        value *= z
        z += 1.0
    return value


def log_sphere_prefactor(d):
    """log(2 pi^(d/2) / Γ(d/2)), the area of the unit (d-1)-sphere."""
    return math.log(2.0) + 0.5 * d * math.log(math.pi) - log_gamma_half_integer(d)


# --------------------------------------------------------------------------
# Ball quantities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BallSpec:
    d: int
    k: float
    r: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if not self.k < 0:
            raise DomainError(f"curvature must be negative, got {self.k}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise DomainError(f"radius must be finite and positive, got {self.r}")


def _log_sinh(x):
    # log sinh x = x + log(1 - e^{-2x}) - log 2, stable for tiny and large x
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return x + np.log(-np.expm1(-2.0 * x)) - math.log(2.0)


def _ratio_integrand(spec):
    c = math.sqrt(-spec.k)
    p = spec.d - 1
    log_top = float(_log_sinh(c * spec.r))

    def g(s):
        t = spec.r - s
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.exp(p * (_log_sinh(c * t) - log_top))
        return np.where(t > 0, out, 0.0)

    return g


def _panels(spec):
    """Breakpoints in s = r - t, geometric near s = 0."""
    r = spec.r
    if spec.d <= 2:
        return np.array([0.0, r])
    c = math.sqrt(-spec.k)
    scale = math.tanh(c * r) / ((spec.d - 1) * c)
    pts = [0.0]
    s = scale / 8.0
    while s < r:
        pts.append(s)
        s *= 2.0
    pts.append(r)
    return np.array(pts)


def volume_area_ratio(spec):
    """V_k(r) / A_k(r) by direct quadrature of the normalised integrand."""
    if spec.d == 1:
        return float(spec.r)
    value, _ = adaptive_integrate(_ratio_integrand(spec), _panels(spec))
    return value


def log_sphere_area(spec):
    c = math.sqrt(-spec.k)
    return log_sphere_prefactor(spec.d) + (spec.d - 1) * (float(_log_sinh(c * spec.r)) - math.log(c))


def sphere_area(spec):
    """A_k(r); may overflow to inf for very large d, see :func:`log_sphere_area`."""
    return math.exp(log_sphere_area(spec))


def log_ball_volume(spec):
    return log_sphere_area(spec) + math.log(volume_area_ratio(spec))


def ball_volume(spec):
    """V_k(r) = A_k(r) * (V/A), with the ratio integrated adaptively.

    For large d use :func:`log_ball_volume`; this returns ``exp`` of it and
    overflows to ``inf`` (or underflows to 0) when the value is unrepresentable.
    """
    try:
        return math.exp(log_ball_volume(spec))
    except OverflowError:
        return math.inf


class ConcentrationRow(NamedTuple):
    d: int
    ratio: float
    bound: float


def concentration_sweep(d_list, k, r):
    """Rows (d, V/A, r/d) for each distinct d, sorted by d."""
    ds = sorted({int(d) for d in d_list})
    if not ds:
        raise DomainError("d_list must be nonempty")
    return [ConcentrationRow(d, volume_area_ratio(BallSpec(d, k, r)), r / d) for d in ds]
