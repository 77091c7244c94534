"""Prototypical classification: distances, probabilities, loss and gradients.

Gradients are written out by hand for every operation (no autodiff tape).
Each ``*_vjp`` function takes the upstream gradient with respect to its
output and returns the gradient with respect to its input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, DomainError, SingularGradientError
from .geometry import (
    CurvatureSpace,
    SpaceKind,
    conformal_factor,
    poincare_distance,
)

RADIUS_TOL = 1e-9
SINGULAR_TOL = 1e-300


class GradientMode(enum.Enum):
    EUCLIDEAN_BACKPROP = "euclidean"
    RIEMANNIAN_SCALED = "riemannian"


@dataclass(frozen=True)
class ClipConfig:
    """Maximum Euclidean feature norm before the exponential map (None = off)."""

    c: float | None = None

    def __post_init__(self):
        if self.c is not None and not (0 < self.c < np.inf):
            raise DomainError(f"clip value must be finite and positive, got {self.c}")


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    """Class centroids in ``space``.

    ``on_sphere=False`` admits sphere centroids that were not renormalised to
    the radius (their norm is then below r).
    """

    centroids: np.ndarray
    space: CurvatureSpace
    on_sphere: bool = True

    def __post_init__(self):
        w = np.asarray(self.centroids, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError("centroids must be a (classes, dim) array")
        if self.on_sphere or self.space.kind is not SpaceKind.FIXED_RADIUS_SPHERE:
            check_points(self.space, w)
        elif not np.all(np.isfinite(w)):
            raise DomainError("nonfinite coordinates")
        object.__setattr__(self, "centroids", w)

    def __len__(self):
        return self.centroids.shape[0]


def check_points(space, x):
    """Raise DomainError unless every row of ``x`` is a valid point of ``space``."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("nonfinite coordinates")
    sq = np.sum(x * x, axis=-1)
    if space.kind is SpaceKind.POINCARE_BALL:
        if np.any(sq * -space.k >= 1.0):
            raise DomainError("point outside the Poincaré ball")
    elif space.kind is SpaceKind.FIXED_RADIUS_SPHERE:
        r = space.radius
        if np.any(np.abs(np.sqrt(sq) - r) > RADIUS_TOL * max(1.0, r)):
            raise DomainError(f"point not on the sphere of radius {r:g}")


# --------------------------------------------------------------------------
# Distances and their gradients
# --------------------------------------------------------------------------


def space_distance(space, x, y):
    """Distance used by the prototypical loss; broadcasts over leading axes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_points(space, x)
    check_points(space, y)
    return _raw_distance(space, x, y)


def _raw_distance(space, x, y):
    diff = x - y
    if space.kind is SpaceKind.EUCLIDEAN_SQUARED:
        return np.sum(diff * diff, axis=-1)
    if space.kind is SpaceKind.POINCARE_BALL:
        return poincare_distance(x, y, space.k)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def pairwise_distances(space, queries, centroids):
    """(n_queries, n_classes) matrix of distances."""
    return space_distance(space, np.asarray(queries)[:, None, :], np.asarray(centroids)[None, :, :])


def _prototype_distances(space, prototypes, queries):
    # centroids were validated when the PrototypeSet was built
    queries = np.asarray(queries, dtype=np.float64)
    check_points(space, queries)
    return _raw_distance(space, queries[:, None, :], prototypes.centroids[None, :, :])


def distance_grad(space, x, w):
    """Gradients of d(w, x) with respect to x and to w (same shapes as inputs).

    Raises SingularGradientError for coincident points in the Poincaré and
    sphere geometries, where the distance is not differentiable.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    diff = x - w
    dd = np.sum(diff * diff, axis=-1, keepdims=True)
    if space.kind is SpaceKind.EUCLIDEAN_SQUARED:
        return 2.0 * diff, -2.0 * diff
    if np.any(dd <= SINGULAR_TOL):
        raise SingularGradientError("distance gradient is singular at coincident points")
    if space.kind is SpaceKind.FIXED_RADIUS_SPHERE:
        unit = diff / np.sqrt(dd)
        return unit, -unit
    # d = acosh(z)/sqrt(c), z = 1 + 2c|x-w|^2 / (alpha beta), c = -k
    c = -space.k
    alpha = 1.0 - c * np.sum(x * x, axis=-1, keepdims=True)
    beta = 1.0 - c * np.sum(w * w, axis=-1, keepdims=True)
    zm1 = 2.0 * c * dd / (alpha * beta)
    # 1/sqrt(z^2 - 1) * 4c/(alpha beta), with z^2 - 1 = zm1 (zm1 + 2)
    pref = 4.0 * c / (alpha * beta * np.sqrt(zm1 * (zm1 + 2.0)) * np.sqrt(c))
    gx = pref * (diff + (c * dd / alpha) * x)
    gw = pref * (-diff + (c * dd / beta) * w)
    return gx, gw


# --------------------------------------------------------------------------
# Probabilities and loss
# --------------------------------------------------------------------------


def _log_softmax(logits):
    shift = logits - np.max(logits, axis=-1, keepdims=True)
    return shift - np.log(np.sum(np.exp(shift), axis=-1, keepdims=True))


def softmax_neg(distances):
    """softmax(-distances) along the last axis with max subtraction."""
    return np.exp(_log_softmax(-np.asarray(distances, dtype=np.float64)))


def class_probabilities(space, prototypes, z):
    """p(c | z) for each prototype; ``z`` may be a single vector or a batch."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    dist = _prototype_distances(space, prototypes, np.atleast_2d(z))
    p = softmax_neg(dist)
    return p[0] if single else p


def _check_labels(labels, n_classes, n_queries):
    labels = np.asarray(labels)
    if labels.shape != (n_queries,):
        raise DimensionError("need exactly one label per query")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise DomainError("label does not index a prototype")
    return labels.astype(np.intp)


def prototypical_loss(space, prototypes, queries, labels):
    """Sum over queries of d(w_c, x) + log sum_k exp(-d(w_k, x))."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    labels = _check_labels(labels, len(prototypes), queries.shape[0])
    dist = _prototype_distances(space, prototypes, queries)
    logp = _log_softmax(-dist)
    return float(-np.sum(logp[np.arange(len(labels)), labels]))


class LossGradients(NamedTuple):
    loss: float
    queries: np.ndarray
    prototypes: np.ndarray


def loss_and_gradients(space, prototypes, queries, labels, mode=GradientMode.EUCLIDEAN_BACKPROP):
    """Loss plus its gradients with respect to every query and every prototype.

    dL/dd_ij = [j == c_i] - p_ij, chained through :func:`distance_grad`.
    Under RIEMANNIAN_SCALED each gradient is multiplied by lambda(.)^-2 at the
    point it is taken at.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    w = prototypes.centroids
    labels = _check_labels(labels, len(prototypes), queries.shape[0])
    if mode is GradientMode.RIEMANNIAN_SCALED and space.kind is not SpaceKind.POINCARE_BALL:
        raise DomainError("Riemannian scaling requires the Poincaré ball")
    dist = _prototype_distances(space, prototypes, queries)
    logp = _log_softmax(-dist)
    rows = np.arange(len(labels))
    loss = float(-np.sum(logp[rows, labels]))
    coef = -np.exp(logp)
    coef[rows, labels] += 1.0
    gx, gw = distance_grad(space, queries[:, None, :], w[None, :, :])
    grad_q = np.einsum("ij,ijd->id", coef, gx)
    grad_w = np.einsum("ij,ijd->jd", coef, gw)
    if mode is GradientMode.RIEMANNIAN_SCALED:
        grad_q = grad_q * conformal_factor(queries, space.k)[:, None] ** -2
        grad_w = grad_w * conformal_factor(w, space.k)[:, None] ** -2
    return LossGradients(loss, grad_q, grad_w)


def loss_gradient(space, prototypes, queries, labels, mode=GradientMode.EUCLIDEAN_BACKPROP):
    """dL/dx_i for every query embedding."""
    return loss_and_gradients(space, prototypes, queries, labels, mode).queries


# --------------------------------------------------------------------------
# Centroids
# --------------------------------------------------------------------------


def euclidean_centroid(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("need a nonempty (n, dim) array of points")
    return points.mean(axis=0)


def sphere_centroid(points, r):
    """Euclidean mean rescaled back onto the sphere of radius r."""
    return fixed_radius_rescale(euclidean_centroid(points), r)


def _klein_terms(points, k):
    c = -k
    nn = np.sum(points * points, axis=-1, keepdims=True)
    # gamma_i * klein_i = 2u/(1 - c|u|^2) and gamma_i = (1 + c|u|^2)/(1 - c|u|^2)
    return c, nn, 2.0 * points / (1.0 - c * nn), (1.0 + c * nn) / (1.0 - c * nn)


def einstein_midpoint(points, k):
    """Lorentz-factor-weighted average taken in the Klein model.

    Each ball point u maps to the Klein point 2u/(1 + c|u|^2) (c = -k, both
    balls of radius 1/sqrt(c)) with Lorentz factor 1/sqrt(1 - c|kappa|^2);
    the weighted mean is mapped back by m / (1 + sqrt(1 - c|m|^2)).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("need a nonempty (n, dim) array of points")
    if not k < 0:
        raise DomainError("curvature must be negative")
    if np.any(np.sum(points * points, axis=-1) * -k >= 1.0):
        raise DomainError("point outside the Poincaré ball")
    c, _, weighted, gamma = _klein_terms(points, k)
    m = weighted.sum(axis=0) / gamma.sum()
    return m / (1.0 + np.sqrt(np.maximum(1.0 - c * (m @ m), 0.0)))


def einstein_midpoint_vjp(points, k, grad_out):
    """Gradient of <grad_out, einstein_midpoint(points)> w.r.t. each point."""
    points = np.asarray(points, dtype=np.float64)
    c, nn, weighted, gamma = _klein_terms(points, k)
    total_w = gamma.sum()
    m = weighted.sum(axis=0) / total_w
    s = np.sqrt(np.maximum(1.0 - c * (m @ m), 0.0))
    h = 1.0 / (1.0 + s)
    dh = c / (2.0 * s * (1.0 + s) ** 2)
    g_m = h * grad_out + 2.0 * dh * (m @ grad_out) * m
    g_num = g_m / total_w
    g_den = -(g_m @ m) / total_w
    one_minus = 1.0 - c * nn
    return (2.0 * g_num / one_minus
            + 4.0 * c * (points @ g_num)[:, None] * points / one_minus ** 2
            + g_den * 4.0 * c * points / one_minus ** 2)


def sphere_centroid_vjp(points, r, grad_out):
    points = np.asarray(points, dtype=np.float64)
    m = points.mean(axis=0)
    return np.broadcast_to(rescale_vjp(m, r, grad_out) / points.shape[0], points.shape).copy()


# --------------------------------------------------------------------------
# Encoder output maps
# --------------------------------------------------------------------------


def clip_features(v, cfg):
    """Scale rows with norm above ``cfg.c`` down to norm ``cfg.c``."""
    v = np.asarray(v, dtype=np.float64)
    if cfg is None or cfg.c is None:
        return v
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.where(n > cfg.c, v * (cfg.c / np.where(n > 0, n, 1.0)), v)


def _radial_projection_vjp(v, target, grad_out):
    # y = target * v/|v|  =>  dy^T g = target/|v| (g - vhat (vhat . g))
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    unit = v / n
    return target / n * (grad_out - unit * np.sum(unit * grad_out, axis=-1, keepdims=True))


def clip_features_vjp(v, cfg, grad_out):
    v = np.asarray(v, dtype=np.float64)
    if cfg is None or cfg.c is None:
        return grad_out
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    active = n > cfg.c
    if not np.any(active):
        return grad_out
    proj = _radial_projection_vjp(np.where(active, v, 1.0), cfg.c, grad_out)
    return np.where(active, proj, grad_out)


def fixed_radius_rescale(v, r, norm_eps=0.0):
    """r * v / (|v| + norm_eps). A zero vector is an error whatever ``norm_eps`` is."""
    v = np.asarray(v, dtype=np.float64)
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise DomainError("cannot rescale a zero vector: direction undefined")
    return r * v / (n + norm_eps)


def rescale_vjp(v, r, grad_out, norm_eps=0.0):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise DomainError("cannot rescale a zero vector: direction undefined")
    if norm_eps == 0.0:
        return _radial_projection_vjp(v, r, grad_out)
    # y = r v/(n + e): dy^T g = r/(n+e) g - r (v.g) v / (n (n+e)^2)
    ne = n + norm_eps
    vg = np.sum(v * grad_out, axis=-1, keepdims=True)
    return r / ne * grad_out - r * vg * v / (n * ne ** 2)


def exp0_vjp(v, k, grad_out):
    """Backward pass of the ball exponential map at the origin."""
    v = np.asarray(v, dtype=np.float64)
    s = np.sqrt(-k)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    a = s * n
    safe = np.where(a > 1e-8, a, 1.0)
    f = np.where(a > 1e-8, np.tanh(safe) / safe, 1.0)
    # df/da = (a sech^2 a - tanh a) / a^2 ~ -2a/3 near 0
    dfda = np.where(a > 1e-8, (safe / np.cosh(safe) ** 2 - np.tanh(safe)) / safe ** 2, -2.0 * a / 3.0)
    vg = np.sum(v * grad_out, axis=-1, keepdims=True)
    # dy^T g = f g + f'(n) (v.g) v/n, f'(n) = s df/da, and s*v/n = s^2 v / a
    radial = np.where(a > 1e-8, dfda * s * s / safe, -2.0 * s * s / 3.0)
    return f * grad_out + radial * vg * v


def project_vjp(z, k, epsilon, grad_out):
    """Backward pass of :func:`geometry.project_to_ball`."""
    z = np.asarray(z, dtype=np.float64)
    cap = (1.0 - epsilon) / np.sqrt(-k)
    n = np.linalg.norm(z, axis=-1, keepdims=True)
    active = n > cap
    if not np.any(active):
        return grad_out
    proj = _radial_projection_vjp(np.where(active, z, 1.0), cap, grad_out)
    return np.where(active, proj, grad_out)


def predict(space, prototypes, queries):
    """Nearest-prototype labels; ties go to the lowest class index."""
    dist = _prototype_distances(space, prototypes, np.atleast_2d(queries))
    return np.argmin(dist, axis=-1)
