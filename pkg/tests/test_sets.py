import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcbf.errors import InvalidParameter, UnboundedSet, UnsupportedStrategy
from mcbf.sets import Ball, Box, Intersection, Polytope, ProductSet, input_set_from_dict


def test_box_basics():
    b = Box([-1, -2], [1, 2])
    assert b.contains([0.5, -2.0]) and not b.contains([1.1, 0])
    np.testing.assert_allclose(b.center(), [0, 0])
    assert b.sup_norm() == pytest.approx(np.sqrt(5))
    assert len(b.vertices()) == 4
    np.testing.assert_allclose(b.argmin_linear([1.0, -1.0]), [-1, 2])
    np.testing.assert_allclose(b.argmin_linear([0.0, 0.0]), b.center())


def test_box_validation():
    with pytest.raises(InvalidParameter):
        Box([1.0], [0.0])
    with pytest.raises(UnboundedSet):
        Box([-np.inf], [0.0])


def test_ball_support_and_vertices():
    b = Ball([1.0, 0.0], 0.5)
    np.testing.assert_allclose(b.argmin_linear([1.0, 0.0]), [0.5, 0.0])
    assert b.sup_norm() == 1.5
    with pytest.raises(UnsupportedStrategy):
        b.vertices()
    with pytest.raises(InvalidParameter):
        Ball([0.0], 0.0)


def test_polytope_triangle():
    P = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    V = P.vertices()
    assert len(V) == 3
    assert P.sup_norm() == pytest.approx(1.0)
    np.testing.assert_allclose(P.argmin_linear([-1.0, -2.0]), [0, 1])


def test_polytope_unbounded_and_empty():
    with pytest.raises(UnboundedSet):
        Polytope([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0])
    with pytest.raises(InvalidParameter):
        Polytope([[1.0], [-1.0]], [-1.0, -1.0])


def test_intersection_box_ball():
    I = Intersection([Box([-1, -1], [1, 1]), Ball([0.0, 0.0], 1.2)])
    assert not I.is_linear
    assert I.contains([0.8, 0.8])
    assert not I.contains([1.0, 1.0])
    u = I.argmin_linear(np.array([1.0, 1.0]))
    assert I.contains(u, tol=1e-6)
    assert u.sum() == pytest.approx(-1.2 * np.sqrt(2), abs=1e-5)
    with pytest.raises(UnsupportedStrategy):
        I.vertices()


def test_intersection_linear_is_polytope():
    I = Intersection([Box([-1, -1], [1, 1]), Polytope([[1, 1], [-1, 0], [0, -1]], [0.5, 2, 2])])
    assert I.is_linear
    assert I.sup_norm() == pytest.approx(np.sqrt(2))
    assert np.all(I.vertices() @ np.array([1, 1]) <= 0.5 + 1e-9)


def test_product_set():
    P = ProductSet([Box([-1], [1]), Ball([0.0, 0.0], 2.0)])
    assert P.dim == 3
    C, d = P.linear_constraints()
    assert C.shape == (2, 3)
    (idx, c, r), = P.ball_blocks()
    np.testing.assert_array_equal(idx, [1, 2])
    assert P.sup_norm() == pytest.approx(np.sqrt(1 + 4))
    assert P.contains([0.5, 1.0, 1.0]) and not P.contains([0.5, 2.0, 1.0])
    np.testing.assert_allclose(P.argmin_linear([1.0, 0.0, -1.0]), [-1, 0, 2])


def test_roundtrip_dict():
    for s in [Box([-1], [2]), Ball([0.0], 1.0), Polytope([[1.0], [-1.0]], [1.0, 1.0]),
              Intersection([Box([-1, -1], [1, 1]), Ball([0, 0], 1.0)]),
              ProductSet([Box([-1], [1]), Ball([0.0, 0.0], 2.0)])]:
        t = input_set_from_dict(s.to_dict())
        assert t.to_dict() == s.to_dict()
    with pytest.raises(InvalidParameter):
        input_set_from_dict({"kind": "cone"})


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(0.01, 3), min_size=2, max_size=2),
       st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_box_argmin_is_a_minimum(lo, width, c):
    b = Box(lo, np.add(lo, width))
    u = b.argmin_linear(np.array(c))
    assert b.contains(u)
    assert np.dot(c, u) <= min(b.vertices() @ np.array(c)) + 1e-12
