import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypfew.errors import CurvatureMismatchError, DimensionError, DomainError, TangencyError
from hypfew.geometry import (
    CurvatureSpace,
    HyperboloidPoint,
    PoincarePoint,
    SpaceKind,
    boundary_sphere_radius,
    chordal_distance,
    clipped_radius,
    conformal_factor,
    effective_radius,
    fixed_radius_hyperbolic_distance,
    hyperbolic_radius_of,
    hyperboloid_distance,
    hyperboloid_exp,
    inclusion,
    inverse_stereographic,
    isometric_sphere_radius,
    lorentz_inner,
    mobius_add,
    poincare_distance,
    poincare_exp0,
    project_to_ball,
    spherical_distance,
    stereographic,
)

CURVATURES = (-0.005, -0.05, -1.0)
# acosh(1 + 2|x-y|^2 / ((1-|x|^2)(1-|y|^2))) for x=(.5,0), y=(0,.5): acosh(25/9)
D_HALF_PAIR = math.acosh(25.0 / 9.0)


def ball_points(rng, n, d, k, frac=0.95):
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * frac * rng.uniform(0, 1, (n, 1)) / math.sqrt(-k)


# -- curvature space ---------------------------------------------------------


def test_space_constructors():
    assert CurvatureSpace.euclidean().kind is SpaceKind.EUCLIDEAN_SQUARED
    ball = CurvatureSpace.poincare(-0.05, 1e-3)
    assert ball.radius == pytest.approx(1 / math.sqrt(0.05))
    assert ball.effective_radius == pytest.approx(0.999 / math.sqrt(0.05))
    sphere = CurvatureSpace.sphere(2.0)
    assert sphere.k == pytest.approx(0.25)
    assert sphere.radius == pytest.approx(2.0)


@pytest.mark.parametrize("bad", [lambda: CurvatureSpace.poincare(0.1),
                                 lambda: CurvatureSpace.poincare(-1, 0.0),
                                 lambda: CurvatureSpace.poincare(-1, 1.0),
                                 lambda: CurvatureSpace.sphere(-1.0)])
def test_space_invariants(bad):
    with pytest.raises(DomainError):
        bad()


def test_point_types_validate_and_mix_curvature():
    with pytest.raises(DomainError):
        PoincarePoint(np.array([1.0, 0.0]), -1.0)
    with pytest.raises(DomainError):
        HyperboloidPoint(np.array([0.0, 2.0]), -1.0)
    a = PoincarePoint(np.array([0.1, 0.0]), -1.0)
    b = PoincarePoint(np.array([0.0, 0.1]), -0.5)
    with pytest.raises(CurvatureMismatchError):
        a.distance(b)


# -- Lorentz form and hyperboloid ---------------------------------------------


def test_lorentz_inner_examples():
    assert lorentz_inner([0, 1], [0, 1]) == -1.0
    assert lorentz_inner([1, 0], [0, 1]) == 0.0
    assert lorentz_inner([math.sinh(1), math.cosh(1)], [0, 1]) == pytest.approx(-math.cosh(1), abs=1e-15)
    with pytest.raises(DimensionError):
        lorentz_inner([1, 2], [1, 2, 3])


@pytest.mark.parametrize("t", [0.0, 1.0, 2.0, 1e-7])
def test_hyperboloid_distance_geodesic(t):
    # (sinh t, cosh t) is the unit-speed geodesic of H^1 at k=-1
    y = [math.sinh(t), math.cosh(t)]
    assert hyperboloid_distance([0, 1], y, -1.0) == pytest.approx(t, rel=1e-12, abs=1e-15)


def test_hyperboloid_distance_small_separation_is_accurate():
    # the naive acosh(k<x,y>) loses everything below ~1e-8
    x = inclusion(np.array([0.3, 0.4]), -1.0)
    y = inclusion(np.array([0.3, 0.4 + 1e-10]), -1.0)
    d = hyperboloid_distance(x, y, -1.0)
    assert d > 0
    assert d == pytest.approx(poincare_distance(stereographic(x, -1.0), stereographic(y, -1.0), -1.0), rel=1e-6)


def test_hyperboloid_exp_examples():
    x = hyperboloid_exp([0.0, 1.0], [1.0, 0.0], -1.0)
    np.testing.assert_allclose(x, [math.sinh(1), math.cosh(1)], rtol=1e-14)
    np.testing.assert_array_equal(hyperboloid_exp([0.0, 1.0], [0.0, 0.0], -1.0), [0.0, 1.0])
    for t in (0.5, 2.0):
        y = hyperboloid_exp([0.0, 1.0], [t, 0.0], -1.0)
        assert hyperboloid_distance([0.0, 1.0], y, -1.0) == pytest.approx(t, rel=1e-12)
    with pytest.raises(TangencyError):
        hyperboloid_exp([0.0, 1.0], [0.0, 1.0], -1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.sampled_from(CURVATURES))
def test_hyperboloid_exp_unit_speed(u, w, k):
    s = math.sqrt(-k)
    base = inclusion(np.array(u) / s, k)
    w = np.append(np.array(w), 0.0)
    # project onto the tangent space using <base, base>_L = 1/k
    v = w - k * lorentz_inner(base, w) * base
    norm = math.sqrt(max(lorentz_inner(v, v), 0.0))
    y = hyperboloid_exp(base, v, k)
    # y = cosh(theta) base + sinh(theta)/theta v can cancel heavily, so rounding
    # error scales with the size of the two summands, not with y
    theta = s * norm
    terms = math.cosh(theta) * np.linalg.norm(base) + np.linalg.norm(v) * (math.sinh(theta) / theta if theta else 1.0)
    assert abs(lorentz_inner(y, y) - 1 / k) <= 1e-14 * terms ** 2
    assert hyperboloid_distance(base, y, k) == pytest.approx(norm, rel=1e-8, abs=1e-10)


def test_inclusion_examples():
    np.testing.assert_array_equal(inclusion(np.zeros(3), -1.0), [0, 0, 0, 1])
    x = inclusion(np.array([3.0, 4.0]), -1.0)
    np.testing.assert_allclose(x, [3, 4, math.sqrt(26)])
    assert lorentz_inner(x, x) == pytest.approx(-1.0, rel=1e-12)
    np.testing.assert_allclose(inclusion(np.zeros(2), -0.25), [0, 0, 2])


# -- stereographic projection ---------------------------------------------------


def test_stereographic_examples():
    np.testing.assert_array_equal(stereographic([0.0, 0.0, 2.0], -0.25), [0.0, 0.0])
    assert stereographic([math.sinh(1), math.cosh(1)], -1.0)[0] == pytest.approx(math.tanh(0.5), rel=1e-14)
    np.testing.assert_allclose(inverse_stereographic(np.zeros(2), -0.25), [0, 0, 2])
    np.testing.assert_allclose(inverse_stereographic(np.array([math.tanh(0.5)]), -1.0),
                               [math.sinh(1), math.cosh(1)], rtol=1e-14)
    with pytest.raises(DomainError):
        inverse_stereographic(np.array([1.0, 0.0]), -1.0)


@pytest.mark.parametrize("k", CURVATURES)
def test_round_trips(k):
    rng = np.random.default_rng(1)
    u = ball_points(rng, 500, 5, k)
    x = inverse_stereographic(u, k)
    np.testing.assert_allclose(lorentz_inner(x, x), 1 / k, rtol=1e-9)
    np.testing.assert_allclose(stereographic(x, k), u, atol=1e-10 / math.sqrt(-k))
    h = inclusion(rng.standard_normal((500, 5)), k)
    np.testing.assert_allclose(inverse_stereographic(stereographic(h, k), k), h, rtol=1e-10, atol=1e-10)


def test_conformal_factor_examples():
    assert conformal_factor(np.zeros(3), -1.0) == 2.0
    assert conformal_factor(np.array([0.5, 0.0]), -1.0) == pytest.approx(2 / 0.75)
    assert conformal_factor(np.array([0.99]), -1.0) == pytest.approx(2 / (1 - 0.9801), rel=1e-12)


# -- exp map, Möbius addition, distance ---------------------------------------------


def test_exp0_examples():
    np.testing.assert_array_equal(poincare_exp0(np.zeros(4), -1.0), np.zeros(4))
    v = np.array([0.6, 0.8])
    z = poincare_exp0(v, -1.0)
    assert np.linalg.norm(z) == pytest.approx(math.tanh(1.0), rel=1e-15)
    assert np.all(z * v >= 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4), st.sampled_from(CURVATURES))
def test_exp0_norm_law(v, k):
    v = np.array(v)
    z = poincare_exp0(v, k)
    s = math.sqrt(-k)
    n = np.linalg.norm(v)
    assert np.linalg.norm(z) * s <= 1.0 + 1e-15  # tanh saturates to 1 for large |v|
    assert np.linalg.norm(z) == pytest.approx(math.tanh(s * n) / s, rel=1e-12, abs=1e-300)
    if 0 < s * n < 8:  # beyond that 1 - s|z| keeps too few digits
        assert hyperbolic_radius_of(np.linalg.norm(z), k) == pytest.approx(2 * n, rel=1e-8)


def _mobius_exact(x, y, k):
    """Rational evaluation of x ⊕ y (k rational)."""
    x = [Fraction(t) for t in x]
    y = [Fraction(t) for t in y]
    k = Fraction(k)
    xy = sum(a * b for a, b in zip(x, y))
    xx = sum(a * a for a in x)
    yy = sum(b * b for b in y)
    num_x = 1 - 2 * k * xy - k * yy
    num_y = 1 + k * xx
    den = 1 - 2 * k * xy + k * k * xx * yy
    return [(num_x * a + num_y * b) / den for a, b in zip(x, y)]


def test_mobius_example_exact():
    got = mobius_add(np.array([-0.5, 0.0]), np.array([0.0, 0.5]), -1.0)
    exact = _mobius_exact([-0.5, 0], [0, 0.5], -1)
    assert exact == [Fraction(-10, 17), Fraction(6, 17)]
    np.testing.assert_allclose(got, [float(t) for t in exact], rtol=1e-15)
    np.testing.assert_allclose(got, [-0.58824, 0.35294], atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-0.7, 0.7), min_size=3, max_size=3),
       st.lists(st.floats(-0.7, 0.7), min_size=3, max_size=3),
       st.sampled_from(CURVATURES))
def test_mobius_laws(a, b, k):
    s = math.sqrt(-k)
    x, y = (np.array(t) / max(1.0, np.linalg.norm(t) / 0.9) / s for t in (a, b))
    np.testing.assert_array_equal(mobius_add(x, np.zeros(3), k), x)
    np.testing.assert_allclose(mobius_add(-x, x, k), 0.0, atol=1e-12 / s)
    assert np.linalg.norm(mobius_add(x, y, k)) * s < 1.0
    exact = _mobius_exact(x.tolist(), y.tolist(), Fraction(k))
    np.testing.assert_allclose(mobius_add(x, y, k), [float(t) for t in exact], rtol=1e-9, atol=1e-12 / s)


def test_mobius_is_not_commutative():
    x, y = np.array([0.5, 0.0]), np.array([0.0, 0.5])
    assert not np.allclose(mobius_add(x, y, -1.0), mobius_add(y, x, -1.0))


def test_poincare_distance_examples():
    x, y = np.array([0.5, 0.0]), np.array([0.0, 0.5])
    assert poincare_distance(x, x, -1.0) == 0.0
    assert poincare_distance(x, y, -1.0) == pytest.approx(D_HALF_PAIR, rel=1e-14)
    # oracle through the hyperboloid
    hx, hy = inverse_stereographic(x, -1.0), inverse_stereographic(y, -1.0)
    assert poincare_distance(x, y, -1.0) == pytest.approx(hyperboloid_distance(hx, hy, -1.0), rel=1e-13)
    assert poincare_distance(np.zeros(2), np.array([math.tanh(0.5), 0]), -1.0) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("k", CURVATURES)
def test_isometry(k):
    rng = np.random.default_rng(2)
    for d in (1, 2, 8, 64):
        u = rng.standard_normal((2, 2000, d)) * 3 / math.sqrt(-k)
        x, y = inclusion(u[0], k), inclusion(u[1], k)
        dh = hyperboloid_distance(x, y, k)
        dp = poincare_distance(stereographic(x, k), stereographic(y, k), k)
        assert np.max(np.abs(dh - dp)) <= 1e-8


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(CURVATURES))
def test_distance_metric_axioms(seed, k):
    rng = np.random.default_rng(seed)
    x, y, z = ball_points(rng, 3, 4, k)
    dxy = poincare_distance(x, y, k)
    assert dxy >= 0
    assert dxy == pytest.approx(poincare_distance(y, x, k), rel=1e-12, abs=1e-14)
    assert poincare_distance(x, x, k) <= 1e-10
    assert poincare_distance(x, z, k) <= dxy + poincare_distance(y, z, k) + 1e-9


def test_distance_tiny_separation():
    x = np.array([0.3, 0.2])
    y = x + np.array([1e-12, 0.0])
    d = poincare_distance(x, y, -1.0)
    # local metric: lambda(x) |dx|
    assert d == pytest.approx(conformal_factor(x, -1.0) * 1e-12, rel=1e-6)


def test_distance_near_boundary_finite():
    r = (1 - 1e-10)
    d = poincare_distance(np.array([r, 0.0]), np.array([-r, 0.0]), -1.0)
    assert d == pytest.approx(4 * math.atanh(r), rel=1e-6)


# -- equal-norm formula and radii ---------------------------------------------------


def test_fixed_radius_examples():
    assert fixed_radius_hyperbolic_distance(0.5, 0.0, -1.0) == 0.0
    assert fixed_radius_hyperbolic_distance(0.5, math.pi / 2, -1.0) == pytest.approx(D_HALF_PAIR, rel=1e-13)
    assert fixed_radius_hyperbolic_distance(0.5, math.pi, -1.0) == pytest.approx(4 * math.atanh(0.5), rel=1e-13)


@pytest.mark.parametrize("k", CURVATURES)
def test_fixed_radius_matches_distance(k):
    rng = np.random.default_rng(3)
    p = ball_points(rng, 10_000, 6, k)
    q = rng.standard_normal(p.shape)
    r = np.linalg.norm(p, axis=1)
    q *= (r / np.linalg.norm(q, axis=1))[:, None]
    alpha = np.arccos(np.clip(np.sum(p * q, axis=1) / r ** 2, -1, 1))
    got = fixed_radius_hyperbolic_distance(r, alpha, k)
    assert np.max(np.abs(got - poincare_distance(p, q, k))) <= 1e-8


def test_fixed_radius_monotone_in_angle():
    alphas = np.linspace(0, math.pi, 50)
    d = fixed_radius_hyperbolic_distance(3.0, alphas, -0.05)
    assert np.all(np.diff(d) > 0)


def test_effective_and_clipped_radius():
    assert effective_radius(0.0, -1.0) == 1.0
    assert effective_radius(1e-3, -0.05) == pytest.approx(4.46766, abs=5e-6)
    assert effective_radius(0.01, -0.01) == pytest.approx(9.9)
    # the reported 2.618 is 2.61852 truncated; all three agree within 1e-3
    for c, want in ((2, 1.877), (3, 2.618), (4, 3.191)):
        assert abs(clipped_radius(c, -0.05) - want) <= 1e-3
    assert clipped_radius(3, -0.05) == pytest.approx(math.tanh(3 * math.sqrt(0.05)) / math.sqrt(0.05), rel=1e-15)
    assert clipped_radius(1e6, -0.05) == pytest.approx(1 / math.sqrt(0.05))
    v = np.array([1.2, -1.6])  # norm 2
    assert np.linalg.norm(poincare_exp0(v, -0.05)) == pytest.approx(clipped_radius(2.0, -0.05), rel=1e-14)


def test_project_to_ball_caps_norm():
    z = np.array([[100.0, 0.0], [0.1, 0.0]])
    out = project_to_ball(z, -1.0, 1e-3)
    assert np.linalg.norm(out[0]) == pytest.approx(0.999)
    np.testing.assert_array_equal(out[1], z[1])


def test_hyperbolic_radius_examples():
    assert hyperbolic_radius_of(0.0, -1.0) == 0.0
    assert hyperbolic_radius_of(math.tanh(0.5), -1.0) == pytest.approx(1.0, rel=1e-14)
    rng = np.random.default_rng(4)
    for k in CURVATURES:
        s = math.sqrt(-k)
        r = rng.uniform(0, 0.99, 100) / s
        np.testing.assert_allclose(hyperbolic_radius_of(r, k), 2 * np.arctanh(s * r) / s, rtol=1e-12)
        x = ball_points(rng, 100, 3, k)
        np.testing.assert_allclose(hyperbolic_radius_of(np.linalg.norm(x, axis=1), k),
                                   poincare_distance(np.zeros(3), x, k), rtol=1e-10, atol=1e-12)
    with pytest.raises(DomainError):
        hyperbolic_radius_of(1.0, -1.0)


def test_isometric_sphere_radius():
    assert isometric_sphere_radius(0.0, -1.0) == 0.0
    assert isometric_sphere_radius(hyperbolic_radius_of(0.5, -1.0), -1.0) == pytest.approx(4 / 3, rel=1e-13)
    assert boundary_sphere_radius(0.5, -1.0) == pytest.approx(4 / 3, rel=1e-15)
    assert boundary_sphere_radius(9.9, -0.01) == pytest.approx(994.97, abs=5e-3)
    composed = isometric_sphere_radius(hyperbolic_radius_of(9.9, -0.01), -0.01)
    assert composed == pytest.approx(2 * 9.9 / (1 - 0.01 * 98.01), rel=1e-9)


def test_sphere_distances():
    assert spherical_distance([1, 0], [1, 0], 1.0) == 0.0
    assert spherical_distance([1, 0], [0, 1], 1.0) == pytest.approx(math.pi / 2)
    assert spherical_distance([1, 0], [-1, 0], 1.0) == pytest.approx(math.pi)
    assert chordal_distance([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    rng = np.random.default_rng(5)
    x, y = rng.standard_normal((2, 200, 5))
    r = 3.0
    x *= r / np.linalg.norm(x, axis=1, keepdims=True)
    y *= r / np.linalg.norm(y, axis=1, keepdims=True)
    cos = np.sum(x * y, axis=1) / r ** 2
    np.testing.assert_allclose(chordal_distance(x, y) ** 2, 2 * r ** 2 * (1 - cos), rtol=1e-10, atol=1e-12)
