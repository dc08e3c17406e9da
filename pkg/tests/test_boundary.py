import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gamma

from genbvp import boundary as bd
from genbvp import funcspace as fs
from genbvp.errors import DimensionMismatch, InvalidPartition, OrderOutOfRange, PointOutOfInterval

from _factories import UNIT, random_canonical, random_polynomial_solution

SCALAR1 = fs.SobolevIndex(0, 1, 1, 2.0)
SCALAR2 = fs.SobolevIndex(0, 2, 1, 2.0)
ONE_PLUS_ONE = fs.SobolevIndex(1, 1, 1, 2.0)


def _derivs(y, upto):
    return [y.derivative(s) for s in range(upto + 1)]


def _poly(coeffs, interval=UNIT):
    return fs.polynomial(coeffs, interval)


# -- canonical --------------------------------------------------------------


def test_canonical_point_value():
    B = bd.CanonicalBoundaryOperator(0.0, ([[1.0]],), fs.zeros((1, 1), UNIT), SCALAR1)
    assert bd.apply_canonical(B, _poly([0, 1]))[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_canonical_integral_of_derivative():
    B = bd.CanonicalBoundaryOperator(0.0, ([[0.0]],), fs.constant(1.0, UNIT), SCALAR1)
    assert bd.apply_canonical(B, _poly([0, 1]))[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_dirichlet_on_sine_vanishes():
    J = fs.Interval(0.0, math.pi)
    B = bd.point_conditions(SCALAR2, J, [[(0, 0.0, [1.0])], [(0, math.pi, [1.0])]])
    y = fs.from_callable(np.sin, J)
    assert np.allclose(bd.apply_canonical(B, y).ravel(), 0.0, atol=1e-12)


def test_point_conditions_reproduce_interior_evaluations():
    index = fs.SobolevIndex(1, 2, 1, 2.0)
    B = bd.point_conditions(index, UNIT, [[(1, 0.7, [2.0])], [(0, 0.3, [1.0]), (0, 0.9, [-1.0])]])
    y = fs.from_callable(np.exp, UNIT)
    expected = [2 * math.exp(0.7), math.exp(0.3) - math.exp(0.9)]
    assert np.allclose(bd.apply_canonical(B, y).ravel(), expected, atol=1e-12)


def test_canonical_shape_checks():
    with pytest.raises(DimensionMismatch):
        bd.CanonicalBoundaryOperator(0.0, ([[1.0]],), fs.zeros((2, 1), UNIT), SCALAR1)
    with pytest.raises(DimensionMismatch):
        bd.CanonicalBoundaryOperator(0.0, ([[1.0]], [[1.0]]), fs.zeros((1, 1), UNIT), SCALAR1)
    with pytest.raises(PointOutOfInterval):
        bd.CanonicalBoundaryOperator(2.0, ([[1.0]],), fs.zeros((1, 1), UNIT), SCALAR1)
    B = bd.CanonicalBoundaryOperator(0.0, ([[1.0]],), fs.zeros((1, 1), UNIT), SCALAR1)
    two_rows = fs.from_callable(lambda t: np.stack([t, t], -1)[..., None], UNIT)
    with pytest.raises(DimensionMismatch):
        bd.apply_canonical(B, two_rows)


# -- multipoint -------------------------------------------------------------


def test_multipoint_single_point_term():
    B = bd.MultipointBoundaryOperator(0.0, ([[0.0]], [[0.0]]), [1.0], [[[1.0]]], ONE_PLUS_ONE, UNIT)
    # y = t^2, y'(1) = 2
    assert bd.apply_multipoint(B, _poly([0, 0, 1]))[0, 0] == pytest.approx(2.0, abs=1e-13)


def test_multipoint_two_point_dirichlet():
    alphas = (np.array([[1.0], [1.0]]), np.array([[0.0], [1.0]]))
    B = bd.MultipointBoundaryOperator(0.0, alphas, [], np.zeros((0, 2, 1)), SCALAR2, UNIT)
    # y(0) and y(0) + y'(0) = y(1) for y = t
    assert np.allclose(bd.apply_multipoint(B, _poly([0, 1])).ravel(), [0.0, 1.0], atol=1e-14)


def test_multipoint_rejects_points_outside():
    with pytest.raises(PointOutOfInterval):
        bd.MultipointBoundaryOperator(0.0, ([[0.0]],), [1.5], [[[1.0]]], SCALAR1, UNIT)
    with pytest.raises(DimensionMismatch):
        bd.MultipointBoundaryOperator(0.0, ([[0.0]],), [0.5, 1.0], [[[1.0]]], SCALAR1, UNIT)


def test_multipoint_to_canonical_is_exact(rng):
    index = fs.SobolevIndex(1, 1, 2, 2.0)
    points = np.array([0.0, 0.25, 0.6, 1.0])
    betas = rng.standard_normal((4, 2, 2))
    alphas = tuple(rng.standard_normal((2, 2)) for _ in range(2))
    B = bd.MultipointBoundaryOperator(0.4, alphas, points, betas, index, UNIT)
    C = bd.to_canonical(B)
    derivs = random_polynomial_solution(rng, index, 6)
    assert np.allclose(B.apply(derivs), C.apply(derivs), atol=1e-12)


# -- fractional -------------------------------------------------------------


def _fractional(orders, weights, index=ONE_PLUS_ONE):
    terms = tuple(bd.FractionalTerm(l, fs.constant(w, UNIT)) for l, w in zip(orders, weights))
    return bd.FractionalBoundaryOperator(terms, index)


def test_fractional_integer_order():
    B = _fractional([1.0], [1.0])
    assert bd.apply_fractional(B, _poly([0, 1]))[0, 0] == pytest.approx(1.0, abs=1e-13)


def test_fractional_half_order_of_identity():
    B = _fractional([0.5], [1.0])
    assert bd.apply_fractional(B, _poly([0, 1]))[0, 0] == pytest.approx(4 / (3 * math.sqrt(math.pi)), abs=1e-8)


def test_fractional_of_constant_vanishes():
    B = _fractional([0.5], [1.0])
    assert abs(bd.apply_fractional(B, _poly([1.0]))[0, 0]) <= 1e-14


def test_fractional_order_bound():
    with pytest.raises(OrderOutOfRange):
        _fractional([1.6], [1.0])  # 2 - 1/2 = 1.5
    B = _fractional([1.2], [1.0])
    with pytest.raises(OrderOutOfRange):
        bd.apply_fractional(B, _poly([0, 0, 1]), p=1.0)  # bound 1.0 at p=1
    with pytest.raises(OrderOutOfRange):
        _fractional([0.5, 0.25], [1.0, 1.0])


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@pytest.mark.parametrize("order", [0.25, 0.5, 1.5])
def test_caputo_monomials(k, order):
    y = _poly([0] * k + [1])
    t = np.linspace(0.05, 1, 17)
    got = bd.caputo_derivative(_derivs(y, 4), order, t)[:, 0, 0]
    if k < math.ceil(order):
        expected = 0 * t
    else:
        expected = gamma(k + 1) / gamma(k + 1 - order) * t ** (k - order)
    assert np.max(np.abs(got - expected)) <= 1e-7


def test_fractional_to_canonical_agrees():
    index = fs.SobolevIndex(0, 2, 1, 2.0)
    w1 = fs.from_callable(lambda t: np.stack([1 + t, 0 * t], -1)[..., None], UNIT)
    w2 = fs.from_callable(lambda t: np.stack([0 * t + 0.5, np.cos(t)], -1)[..., None], UNIT)
    B = bd.FractionalBoundaryOperator((bd.FractionalTerm(0.5, w1), bd.FractionalTerm(1.25, w2)), index)
    C = bd.to_canonical(B)
    y = fs.from_callable(np.exp, UNIT)
    assert np.allclose(B.apply(_derivs(y, 2)), C.apply(_derivs(y, 2)), atol=1e-9)


# -- Stieltjes --------------------------------------------------------------


@pytest.mark.parametrize("cells", [1, 3, 10])
def test_stieltjes_constant_kernel_telescopes(cells):
    Phi = fs.constant(2.5, UNIT)
    points, betas = bd.stieltjes_multipoint(Phi, np.linspace(0, 1, cells + 1))
    u = np.exp(points)
    assert np.einsum("p,p->", betas[:, 0, 0], u) == pytest.approx(2.5 * (math.e - 1), abs=1e-13)


@pytest.mark.parametrize("cells, bound", [(10, 5e-3), (100, 5e-5)])
def test_stieltjes_linear_kernel(cells, bound):
    # y^(N) = 1 so y^(N-1)(t) = t; exact value 1/2
    points, betas = bd.stieltjes_multipoint(_poly([0, 1]), np.linspace(0, 1, cells + 1))
    assert abs(np.dot(betas[:, 0, 0], points) - 0.5) <= bound


def test_stieltjes_single_cell():
    Phi = _poly([0, 1])
    points, betas = bd.stieltjes_multipoint(Phi, [0.0, 1.0])
    assert points.tolist() == [0.0, 1.0]
    assert betas[:, 0, 0].tolist() == [-0.5, 0.5]


def test_stieltjes_converges_for_smooth_data():
    index = fs.SobolevIndex(0, 1, 1, 2.0)
    Phi = fs.from_callable(np.cos, UNIT)
    B = bd.CanonicalBoundaryOperator(0.0, ([[1.0]],), Phi, index)
    y = fs.from_callable(lambda t: np.sin(3 * t), UNIT)
    exact = B.apply(_derivs(y, 1))[0, 0]
    errs = [abs(bd.multipoint_from_canonical(B, bd.dyadic_partition(UNIT, 2**j)).apply(_derivs(y, 1))[0, 0] - exact) for j in (3, 5, 7)]
    assert errs[0] > errs[1] > errs[2]
    assert math.log(errs[0] / errs[2], 16) >= 1.0


def test_invalid_partitions():
    Phi = fs.constant(1.0, UNIT)
    for part in ([0.0], [0.0, 0.5, 0.5, 1.0], [0.1, 1.0], [0.0, 0.9]):
        with pytest.raises(InvalidPartition):
            bd.stieltjes_multipoint(Phi, part)


# -- properties -------------------------------------------------------------


indices = st.builds(
    fs.SobolevIndex,
    st.integers(0, 2),
    st.integers(1, 2),
    st.integers(1, 2),
    st.sampled_from([1.0, 2.0, math.inf]),
)


@given(indices, st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_apply_is_linear(index, seed, lam, mu):
    rng = np.random.default_rng(seed)
    B = random_canonical(rng, index)
    u = random_polynomial_solution(rng, index, 5)
    v = random_polynomial_solution(rng, index, 5)
    combo = [a * lam + b * mu for a, b in zip(u, v)]
    lhs = B.apply(combo)
    rhs = lam * B.apply(u) + mu * B.apply(v)
    scale = (1 + abs(lam) + abs(mu)) * (1 + np.abs(B.apply(u)).max() + np.abs(B.apply(v)).max())
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


@given(indices, st.integers(0, 10_000))
def test_bound_constant(index, seed):
    rng = np.random.default_rng(seed)
    B = random_canonical(rng, index)
    derivs = random_polynomial_solution(rng, index, 6)
    lhs = np.linalg.norm(B.apply(derivs))
    assert lhs <= B.bound_constant() * fs.sobolev_norm(derivs, index.order, index.p) * (1 + 1e-9)


@given(st.integers(0, 10_000), st.sampled_from([0.25, 0.5, 1.25]))
def test_multipoint_image_matches_kernel_integral(seed, order):
    rng = np.random.default_rng(seed)
    index = fs.SobolevIndex(0, 2, 1, 2.0)
    derivs = random_polynomial_solution(rng, index, 5)
    Phi = fs.from_callable(lambda t: np.stack([np.cos(order * t), t**2], -1)[..., None], UNIT)
    part = bd.dyadic_partition(UNIT, 8)
    points, betas = bd.stieltjes_multipoint(Phi, part)
    step = bd.stieltjes_kernel(Phi, part)
    lhs = np.einsum("pim,pmq->iq", betas, derivs[1](points))
    assert np.allclose(lhs, fs.integrate_product(step, derivs[2]), atol=1e-12)
