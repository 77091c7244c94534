"""Randomised invariant suites run by ``hypfew verify``.

Each suite draws its own cases from a fixed stream and returns a
:class:`SuiteResult`. Tolerances are multiplied by ``tolerance_scale`` so a
test can force failures by passing 0.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .concentration import BallSpec, volume_area_ratio
from .geometry import (
    CurvatureSpace,
    conformal_factor,
    fixed_radius_hyperbolic_distance,
    hyperboloid_distance,
    hyperboloid_exp,
    inclusion,
    inverse_stereographic,
    mobius_add,
    poincare_distance,
    poincare_exp0,
    stereographic,
)
from .protoloss import (
    GradientMode,
    PrototypeSet,
    einstein_midpoint,
    fixed_radius_rescale,
    loss_and_gradients,
    _log_softmax,
    _raw_distance,
)

CURVATURES = (-0.005, -0.05, -1.0)


class SuiteResult(NamedTuple):
    name: str
    passed: int
    total: int
    failures: list

    @property
    def ok(self):
        return self.passed == self.total


def _rng(seed, tag):
    return np.random.default_rng(np.random.SeedSequence([seed, 7, tag]))


def random_ball_points(rng, n, d, k, max_frac=0.95):
    """Points spread over the ball of curvature k, norms up to ``max_frac`` of the radius."""
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = max_frac * rng.uniform(0.0, 1.0, size=(n, 1)) / math.sqrt(-k)
    return direction * radius


def _collect(name, cases, check):
    passed, failures = 0, []
    for case in cases:
        err = check(case)
        if err is None:
            passed += 1
        else:
            failures.append(err)
    return SuiteResult(name, passed, len(cases), failures)


def suite_isometry(seed=0, n=200, tolerance_scale=1.0):
    rng = _rng(seed, 1)
    cases = []
    for d in (1, 2, 8):
        for k in CURVATURES:
            for _ in range(n // 9 + 1):
                u = rng.standard_normal((2, d)) * 2.0 / math.sqrt(-k)
                cases.append((u[0], u[1], k))
    tol = 1e-8 * tolerance_scale

    def check(case):
        a, b, k = case
        x, y = inclusion(a, k), inclusion(b, k)
        dh = hyperboloid_distance(x, y, k)
        dp = poincare_distance(stereographic(x, k), stereographic(y, k), k)
        if not abs(dh - dp) <= tol:
            return f"u={a}, v={b}, k={k}: d_H={dh!r} d_P={dp!r}"
        return None

    return _collect("isometry", cases, check)


def suite_round_trip(seed=0, n=200, tolerance_scale=1.0):
    rng = _rng(seed, 2)
    cases = [(random_ball_points(rng, 1, 4, k)[0], k) for k in CURVATURES for _ in range(n // 3)]
    tol = 1e-9 * tolerance_scale

    def check(case):
        u, k = case
        back = stereographic(inverse_stereographic(u, k), k)
        err = np.max(np.abs(back - u)) * math.sqrt(-k)
        return None if err <= tol else f"u={u}, k={k}: error {err:.3g}"

    return _collect("round_trip", cases, check)


def suite_fixed_radius(seed=0, n=200, tolerance_scale=1.0):
    rng = _rng(seed, 3)
    cases = []
    for k in CURVATURES:
        for _ in range(n // 3):
            p = random_ball_points(rng, 1, 3, k)[0]
            q = rng.standard_normal(3)
            q *= np.linalg.norm(p) / np.linalg.norm(q)
            cases.append((p, q, k))
    tol = 1e-8 * tolerance_scale

    def check(case):
        p, q, k = case
        r = np.linalg.norm(p)
        cos = np.clip(p @ q / (r * r), -1.0, 1.0) if r > 0 else 1.0
        a = fixed_radius_hyperbolic_distance(r, math.acos(cos), k)
        b = poincare_distance(p, q, k)
        return None if abs(a - b) <= tol * max(1.0, b) else f"p={p}, q={q}, k={k}: {a!r} vs {b!r}"

    return _collect("fixed_radius", cases, check)


def suite_exp_map_norm(seed=0, n=200, tolerance_scale=1.0):
    """d(0, exp0 v) = lambda(0)|v| = 2|v|, and exp0 v is the stereographic image of
    the hyperboloid exponential map applied to 2v (the projection halves lengths at 0)."""
    rng = _rng(seed, 4)
    cases = [(rng.standard_normal(5) * rng.uniform(0.01, 3.0), k) for k in CURVATURES for _ in range(n // 3)]
    tol = 1e-8 * tolerance_scale

    def check(case):
        v, k = case
        z = poincare_exp0(v, k)
        dist = poincare_distance(np.zeros_like(v), z, k)
        base = inclusion(np.zeros_like(v), k)
        x = hyperboloid_exp(base, np.append(2.0 * v, 0.0), k)
        via = stereographic(x, k)
        bad = abs(dist - 2.0 * np.linalg.norm(v)) > tol * max(1.0, dist) or np.max(np.abs(via - z)) > tol
        return f"v={v}, k={k}: d(0,exp0 v)={dist!r}" if bad else None

    return _collect("exp_map_norm", cases, check)


def suite_mobius_laws(seed=0, n=200, tolerance_scale=1.0):
    """Left cancellation -x ⊕ (x ⊕ y) = y and left-translation invariance of the distance."""
    rng = _rng(seed, 5)
    cases = []
    for k in CURVATURES:
        for _ in range(n // 3):
            pts = random_ball_points(rng, 3, 3, k, max_frac=0.8)
            cases.append((pts, k))
    tol = 1e-8 * tolerance_scale

    def check(case):
        (a, x, y), k = case
        back = mobius_add(-x, mobius_add(x, y, k), k)
        err = np.max(np.abs(back - y)) * math.sqrt(-k)
        d0 = poincare_distance(x, y, k)
        d1 = poincare_distance(mobius_add(a, x, k), mobius_add(a, y, k), k)
        if err > tol or abs(d0 - d1) > tol * max(1.0, d0) * 1e2:
            return f"x={x}, y={y}, a={a}, k={k}: cancel {err:.3g}, translate {abs(d0 - d1):.3g}"
        return None

    return _collect("mobius_laws", cases, check)


def suite_triangle(seed=0, n=200, tolerance_scale=1.0):
    rng = _rng(seed, 6)
    cases = [(random_ball_points(rng, 3, 4, k), k) for k in CURVATURES for _ in range(n // 3)]
    tol = 1e-10 * tolerance_scale

    def check(case):
        (x, y, z), k = case
        lhs = poincare_distance(x, z, k)
        rhs = poincare_distance(x, y, k) + poincare_distance(y, z, k)
        return None if lhs <= rhs + tol * max(1.0, rhs) else f"x={x}, y={y}, z={z}, k={k}"

    return _collect("triangle", cases, check)


def _fd_check(space, protos, queries, labels, rel_tol, h=1e-6):
    """Central differences of the loss vs the analytic gradient; returns relative error."""
    rows = np.arange(len(labels))

    def loss_at(w, q):
        # ambient loss without point validation, so sphere steps may leave the sphere
        dist = _raw_distance(space, q[:, None, :], w[None, :, :])
        return -np.sum(_log_softmax(-dist)[rows, labels])

    grads = loss_and_gradients(space, PrototypeSet(protos, space), queries, labels)
    worst = 0.0
    for array, analytic, is_proto in ((queries, grads.queries, False), (protos, grads.prototypes, True)):
        numeric = np.zeros_like(array)
        for idx in np.ndindex(array.shape):
            plus, minus = array.copy(), array.copy()
            plus[idx] += h
            minus[idx] -= h
            if is_proto:
                numeric[idx] = (loss_at(plus, queries) - loss_at(minus, queries)) / (2 * h)
            else:
                numeric[idx] = (loss_at(protos, plus) - loss_at(protos, minus)) / (2 * h)
        scale = max(np.max(np.abs(numeric)), 1e-8)
        worst = max(worst, np.max(np.abs(numeric - analytic)) / scale)
    return worst


def _gradient_suite(name, space_fn, point_fn, rel_tol, seed, n, tolerance_scale, tag):
    rng = _rng(seed, tag)
    cases = []
    for _ in range(n):
        space = space_fn(rng)
        protos = point_fn(rng, space, 3)
        queries = point_fn(rng, space, 4)
        labels = rng.integers(0, 3, size=4)
        cases.append((space, protos, queries, labels))
    tol = rel_tol * tolerance_scale

    def check(case):
        space, protos, queries, labels = case
        err = _fd_check(space, protos, queries, labels, tol)
        return None if err <= tol else f"{space.describe()}: relative error {err:.3g}"

    return _collect(name, cases, check)


def _ball_points(rng, space, m):
    return random_ball_points(rng, m, 3, space.k, max_frac=0.9)


def _sphere_points(rng, space, m):
    return fixed_radius_rescale(rng.standard_normal((m, 3)), space.radius)


def _euclid_points(rng, space, m):
    return rng.standard_normal((m, 3))


def suite_gradient_poincare(seed=0, n=40, tolerance_scale=1.0):
    return _gradient_suite("gradient_poincare", lambda rng: CurvatureSpace.poincare(CURVATURES[rng.integers(3)]),
                           _ball_points, 1e-4, seed, n, tolerance_scale, 7)


def suite_gradient_sphere(seed=0, n=40, tolerance_scale=1.0):
    return _gradient_suite("gradient_sphere", lambda rng: CurvatureSpace.sphere(rng.uniform(0.5, 3.0)),
                           _sphere_points, 1e-4, seed, n, tolerance_scale, 8)


def suite_gradient_euclidean(seed=0, n=40, tolerance_scale=1.0):
    return _gradient_suite("gradient_euclidean", lambda rng: CurvatureSpace.euclidean(),
                           _euclid_points, 1e-5, seed, n, tolerance_scale, 9)


def suite_riemannian_scaling(seed=0, n=100, tolerance_scale=1.0):
    rng = _rng(seed, 10)
    cases = []
    for _ in range(n):
        space = CurvatureSpace.poincare(CURVATURES[rng.integers(3)])
        cases.append((space, _ball_points(rng, space, 3), _ball_points(rng, space, 4), rng.integers(0, 3, 4)))
    tol = 1e-15 * tolerance_scale

    def check(case):
        space, protos, queries, labels = case
        ps = PrototypeSet(protos, space)
        e = loss_and_gradients(space, ps, queries, labels, GradientMode.EUCLIDEAN_BACKPROP)
        r = loss_and_gradients(space, ps, queries, labels, GradientMode.RIEMANNIAN_SCALED)
        lq = conformal_factor(queries, space.k)[:, None]
        lw = conformal_factor(protos, space.k)[:, None]
        err = max(np.max(np.abs(r.queries - e.queries / lq ** 2)),
                  np.max(np.abs(r.prototypes - e.prototypes / lw ** 2)))
        return None if err <= tol * max(1.0, np.max(np.abs(e.queries))) else f"{space.describe()}: {err:.3g}"

    return _collect("riemannian_scaling", cases, check)


def suite_concentration_bound(seed=0, n=None, tolerance_scale=1.0):
    cases = [(d, k, r) for d in (1, 2, 4, 16, 64, 256, 1024) for k in CURVATURES for r in (0.5, 1.0, 2.0, 5.0)]
    tol = 1e-12 * tolerance_scale

    def check(case):
        d, k, r = case
        ratio = volume_area_ratio(BallSpec(d, k, r))
        return None if ratio <= r / d * (1 + tol) else f"d={d}, k={k}, r={r}: {ratio!r} > {r / d!r}"

    return _collect("concentration_bound", cases, check)


def suite_einstein_betweenness(seed=0, n=200, tolerance_scale=1.0):
    rng = _rng(seed, 11)
    cases = [(random_ball_points(rng, 2, 4, k, max_frac=0.9), k) for k in CURVATURES for _ in range(n // 3)]
    tol = 1e-6 * tolerance_scale

    def check(case):
        pts, k = case
        m = einstein_midpoint(pts, k)
        gap = poincare_distance(pts[0], m, k) + poincare_distance(m, pts[1], k) - poincare_distance(pts[0], pts[1], k)
        return None if abs(gap) <= tol else f"x={pts[0]}, y={pts[1]}, k={k}: gap {gap:.3g}"

    return _collect("einstein_betweenness", cases, check)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "isometry": suite_isometry,
    "round_trip": suite_round_trip,
    "fixed_radius": suite_fixed_radius,
    "exp_map_norm": suite_exp_map_norm,
    "mobius_laws": suite_mobius_laws,
    "triangle": suite_triangle,
    "gradient_poincare": suite_gradient_poincare,
    "gradient_sphere": suite_gradient_sphere,
    "gradient_euclidean": suite_gradient_euclidean,
    "riemannian_scaling": suite_riemannian_scaling,
    "concentration_bound": suite_concentration_bound,
    "einstein_betweenness": suite_einstein_betweenness,
}


def run_all(seed=0, tolerance_scale=1.0):
    return [fn(seed=seed, tolerance_scale=tolerance_scale) for fn in SUITES.values()]
