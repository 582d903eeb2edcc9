import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biwave.errors import BelowInjectivityThreshold, UnsupportedOrder
from biwave.geometry import TargetManifold, nearest_point, projector, projector_derivative
from biwave.oracle import fd_projector_jet

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)


@st.composite
def admissible(draw, lo=0.8, hi=1.2):
    d = draw(vec3)
    if np.linalg.norm(d) < 1e-3:
        d = np.array([1.0, 0.0, 0.0])
    return d / np.linalg.norm(d) * draw(st.floats(lo, hi))


def unit(v):
    n = np.linalg.norm(v)
    return v / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])


# -- nearest point -------------------------------------------------------------


def test_nearest_point_examples(sphere):
    np.testing.assert_array_equal(nearest_point(sphere, [2.0, 0, 0]), [1.0, 0, 0])
    np.testing.assert_allclose(nearest_point(sphere, [0.6, 0.8, 0]), [0.6, 0.8, 0], atol=1e-16)
    with pytest.raises(BelowInjectivityThreshold):
        nearest_point(sphere, [0.1, 0, 0])


def test_flat_nearest_point_is_identity(flat):
    p = np.array([0.0, 1e-9, -4.0])
    np.testing.assert_array_equal(nearest_point(flat, p), p)


def test_injectivity_threshold_is_half_radius():
    assert TargetManifold.sphere(3, 2.0).injectivity_threshold == 1.0
    assert TargetManifold.sphere(4).injectivity_threshold == 0.5


@given(vec3)
def test_pi_defined_iff_outside_threshold(p):
    s = TargetManifold.sphere(3)
    if np.linalg.norm(p) >= 0.5:
        q = s.nearest_point(p)
        assert abs(np.linalg.norm(q) - 1) < 1e-15
    else:
        with pytest.raises(BelowInjectivityThreshold):
            s.nearest_point(p)


@given(admissible(0.6, 3.0), st.floats(0.5, 2.0))
def test_nearest_point_minimizes_distance(p, r):
    s = TargetManifold.sphere(3, r)
    q = s.nearest_point(p * r)
    rng = np.random.default_rng(0)
    others = rng.normal(size=(3, 50))
    others = r * others / np.linalg.norm(others, axis=0)
    assert np.linalg.norm(q - p * r) <= np.min(np.linalg.norm(others - (p * r)[:, None], axis=0)) + 1e-12


# -- projector ------------------------------------------------------------------


def test_projector_examples(sphere):
    P = projector(sphere, [1.0, 0, 0])
    np.testing.assert_array_equal(P @ [0, 1.0, 0], [0, 1, 0])
    np.testing.assert_array_equal(P @ [1.0, 0, 0], [0, 0, 0])
    np.testing.assert_array_equal(projector(sphere, [0, 2.0, 0]) @ [1.0, 1.0, 0], [1, 0, 0])


def test_projector_below_threshold_raises(sphere):
    with pytest.raises(BelowInjectivityThreshold):
        projector(sphere, [0.2, 0.2, 0])


@given(admissible())
def test_projector_idempotent_and_symmetric(p):
    P = TargetManifold.sphere(3).projector(p)
    assert np.max(np.abs(P @ P - P)) <= 1e-14
    np.testing.assert_array_equal(P, P.T)


def test_idempotence_on_ten_thousand_points(sphere):
    rng = np.random.default_rng(1)
    p = rng.normal(size=(3, 10_000))
    p *= rng.uniform(0.5, 3.0, size=10_000) / np.linalg.norm(p, axis=0)
    P = sphere.projector(p)
    PP = np.einsum("ij...,jk...->ik...", P, P)
    assert np.max(np.abs(PP - P)) <= 1e-14


@given(st.floats(0.5, 2.0), vec3, vec3)
def test_projection_on_N_is_orthogonal_to_normal(r, d, v):
    s = TargetManifold.sphere(3, r)
    q = r * unit(d)
    assert abs(np.dot(s.project(q, v), q)) <= 1e-13 * (1 + np.linalg.norm(v))


@given(st.integers(2, 6))
def test_projector_range_has_codimension_one(L):
    s = TargetManifold.sphere(L)
    p = np.arange(1.0, L + 1)
    assert np.linalg.matrix_rank(s.projector(p / np.linalg.norm(p))) == L - 1


def test_flat_projector_is_identity(flat):
    np.testing.assert_array_equal(flat.projector([3.0, -1, 2]), np.eye(3))


# -- projector jets -------------------------------------------------------------


def test_first_jet_example(sphere):
    # d/ds P_{(1, s, 0)} applied to e_2, read off from the nested-difference oracle
    oracle = fd_projector_jet(sphere, [1.0, 0, 0], 1, [[0, 1.0, 0]]) @ [0, 1.0, 0]
    np.testing.assert_allclose(oracle, [-1, 0, 0], atol=1e-9)
    value = projector_derivative(sphere, [1.0, 0, 0], 1, [[0, 1.0, 0]]) @ [0, 1.0, 0]
    np.testing.assert_allclose(value, [-1, 0, 0], atol=1e-15)


def test_first_jet_along_normal_matches_oracle(sphere):
    w = [[1.0, 0, 0]]
    exact = projector_derivative(sphere, [1.0, 0, 0], 1, w) @ [0, 1.0, 0]
    oracle = fd_projector_jet(sphere, [1.0, 0, 0], 1, w) @ [0, 1.0, 0]
    assert np.max(np.abs(exact - oracle)) <= 1e-8


def test_flat_jets_vanish(flat):
    for order in (1, 2, 3):
        dirs = [np.ones(3)] * order
        np.testing.assert_array_equal(projector_derivative(flat, [1.0, 2, 3], order, dirs), 0)


def test_unsupported_orders(sphere):
    with pytest.raises(UnsupportedOrder):
        projector_derivative(sphere, [1.0, 0, 0], 4, [np.ones(3)] * 4)
    with pytest.raises(UnsupportedOrder):
        projector_derivative(sphere, [1.0, 0, 0], 0, [])


def test_jet_below_threshold_raises(sphere):
    with pytest.raises(BelowInjectivityThreshold):
        projector_derivative(sphere, [0.1, 0, 0], 1, [np.ones(3)])


def test_order_zero_jet_is_the_projector(sphere):
    p = np.array([0.3, -0.9, 0.5])
    P = np.eye(3) - np.outer(p, p) / p.dot(p)
    v = np.array([1.0, 2.0, -1.0])
    np.testing.assert_allclose(sphere.jet(p, [], v), P @ v, atol=1e-15)


@pytest.mark.parametrize("order", [1, 2, 3])
@given(p=admissible(), data=st.data())
def test_jets_match_nested_differences(order, p, data):
    dirs = [unit(data.draw(vec3)) for _ in range(order)]
    exact = projector_derivative(TargetManifold.sphere(3), p, order, dirs)
    approx = fd_projector_jet(TargetManifold.sphere(3), p, order, dirs, h=1e-3)
    # jets along the normal vanish (P is 0-homogeneous); the floor covers difference roundoff
    assert np.max(np.abs(exact - approx)) <= 1e-6 * max(np.max(np.abs(exact)), 1e-3)


@pytest.mark.parametrize("order", [2, 3])
@given(p=admissible(), data=st.data())
def test_jets_symmetric_in_derivative_slots(order, p, data):
    s = TargetManifold.sphere(3)
    dirs = [data.draw(vec3) for _ in range(order)]
    perm = data.draw(st.permutations(range(order)))
    a = projector_derivative(s, p, order, dirs)
    b = projector_derivative(s, p, order, [dirs[i] for i in perm])
    assert np.max(np.abs(a - b)) <= 1e-12 * (1 + np.max(np.abs(a)))


@given(vec3, vec3, vec3)
def test_dP_on_tangent_pairs(d, w, v):
    s = TargetManifold.sphere(3)
    p = unit(d)
    w, v = s.project(p, w), s.project(p, v)
    lhs = s.jet(p, [w], v) + np.dot(w, v) * p
    assert np.max(np.abs(lhs)) <= 1e-14 * (1 + np.linalg.norm(w) * np.linalg.norm(v))


def test_jets_vectorize_over_grid_points(sphere):
    rng = np.random.default_rng(2)
    p = rng.normal(size=(3, 7)) + np.array([[0], [0], [3.0]])
    w = rng.normal(size=(3, 7))
    v = rng.normal(size=(3, 7))
    field = sphere.jet(p, [w, w], v)
    for i in range(7):
        np.testing.assert_allclose(field[:, i], projector_derivative(sphere, p[:, i], 2, [w[:, i]] * 2) @ v[:, i],
                                   rtol=1e-13, atol=1e-15)
