import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bkaudit import coords
from bkaudit.coords import Box
from bkaudit.errors import DimensionMismatch, DomainError, SingularJacobian

# (factory, box to sample interior points from)
CASES = {
    "identity": (lambda: coords.identity(2), Box([-3, -3], [3, 3])),
    "reciprocal": (lambda: coords.reciprocal(2), Box([0.2, 0.2], [5, 5])),
    "tan_axis0": (lambda: coords.tan_axis0(3, center=0.0), Box([-1.4, -2, -2], [1.4, 2, 2])),
    "tan_axis0_shifted": (lambda: coords.tan_axis0(3, center=1.5), Box([1.7, -2, -2], [2.8, 2, 2])),
    "square_axis0": (lambda: coords.square_axis0(3), Box([0.1, -2, -2], [3, 2, 2])),
    "cubic": (lambda: coords.cubic(2), Box([0.2, 0.2], [2, 2])),
    "affine": (lambda: coords.affine([[2.0, 1.0], [0.5, 3.0]], [1.0, -1.0]), Box([-2, -2], [2, 2])),
    "cart_to_spherical": (coords.cart_to_spherical, Box([0.2, 0.1, -2], [3, 3, 2])),
    "spherical_to_cart": (coords.spherical_to_cart, Box([0.5, 0.2, -3.0], [3, 2.9, 3.0])),
    "hyperbolic_Trho": (coords.hyperbolic_Trho, Box([0.1, 0.1], [6, 6])),
}

unit = st.floats(0.0, 1.0, allow_nan=False)


def _point(box, u):
    return box.lo + np.asarray(u) * box.widths


@pytest.mark.parametrize("name", sorted(CASES))
@given(data=st.data())
def test_round_trip(name, data):
    factory, box = CASES[name]
    d = factory()
    x = _point(box, data.draw(st.lists(unit, min_size=d.dim, max_size=d.dim)))
    y = d(x)
    np.testing.assert_allclose(d.inverse_map(y), x, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("name", sorted(CASES))
@given(data=st.data())
def test_analytic_jacobian_matches_finite_differences(name, data):
    factory, box = CASES[name]
    d = factory()
    x = _point(box, data.draw(st.lists(st.floats(0.05, 0.95), min_size=d.dim, max_size=d.dim)))
    analytic = coords.jac_det_abs(d, x)
    fd = coords.jac_det_abs(d, x, use_fd=True)
    np.testing.assert_allclose(analytic, fd, rtol=1e-6)


@pytest.mark.parametrize("name", sorted(CASES))
def test_inverse_jacobian_is_reciprocal(name):
    factory, box = CASES[name]
    d = factory()
    x = _point(box, np.full(d.dim, 0.37))
    inv = d.inverse()
    np.testing.assert_allclose(inv.jac_det(d.forward_map(x)) * d.jac_det(x), 1.0, rtol=1e-12)


def test_registry_lookup():
    assert "hyperbolic_Trho" in coords.registry_names()
    d = coords.get("tan_axis0", dim=2, center=0.0)
    assert d.dim == 2
    with pytest.raises(KeyError):
        coords.get("nosuch")


def test_box_boundaries_count_as_inside():
    b = Box([0, 0], [1, 2])
    assert b.contains(np.array([1.0, 2.0]))
    assert not b.contains(np.array([1.0 + 1e-12, 0.5]))
    assert b.volume == 2.0
    assert b.corners().shape == (4, 2)


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])


def test_spherical_volume_element():
    # r^2 sin(theta) at r = 2, theta = pi/2
    assert coords.spherical_to_cart().jac_det(np.array([2.0, np.pi / 2, 0.3])) == pytest.approx(4.0)
    x = coords.spherical_to_cart()(np.array([2.0, np.pi / 2, 0.3]))
    assert coords.cart_to_spherical().jac_det(x) == pytest.approx(0.25)


def test_spherical_branch_cut_is_outside_domain():
    d = coords.cart_to_spherical()
    with pytest.raises(DomainError):
        d(np.array([-1.0, 0.0, 0.5]))


def test_reciprocal_values():
    d = coords.reciprocal(2)
    np.testing.assert_allclose(d(np.array([2.0, 4.0])), [0.5, 0.25])
    assert d.jac_det(np.array([2.0, 4.0])) == pytest.approx(1 / 64)


def test_tan_image_box_rejects_pole_crossing():
    d = coords.tan_axis0(3, center=1.5)
    with pytest.raises(DomainError):
        d.image_box(Box([1.0, 0, 0], [2.0, 1, 1]))
    b = d.image_box(Box([0.1, 0, 0], [1.0, 1, 1]))
    assert b.lo[0] == pytest.approx(np.tan(0.1))


def test_tan_branch_inverse_stays_in_branch():
    d = coords.tan_axis0(3, center=1.5)
    x = np.array([[1.7, 0, 0], [1.2, 0, 0], [2.9, 0, 0]])
    np.testing.assert_allclose(d.inverse_map(d.forward_map(x)), x, atol=1e-12)


def test_cubic_singular_jacobian_at_origin():
    with pytest.raises(SingularJacobian):
        coords.jac_det_abs(coords.cubic(1), np.array([0.0]))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        coords.identity(2)(np.zeros(3))
    with pytest.raises(DimensionMismatch):
        coords.compose(coords.identity(2), coords.identity(3))


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_compose_multiplies_jacobians(a, b):
    outer, inner = coords.hyperbolic_Trho(), coords.affine([[2.0, 0.0], [1.0, 1.0]])
    t = coords.compose(outer, inner)
    x = np.array([a, b])
    expect = outer.jac_det(inner(x)) * inner.jac_det(x)
    assert t.jac_det(x) == pytest.approx(expect, rel=1e-12)
    np.testing.assert_allclose(t.inverse_map(t.forward_map(x)), x, rtol=1e-12)


def test_hyperbolic_values():
    d = coords.hyperbolic_Trho()
    np.testing.assert_allclose(d(np.array([np.e, 1.0])), [0.5, np.sqrt(np.e)])
    assert d.jac_det(np.array([4.0, 1.0])) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        d.image_box(Box([0.0, 0.1], [1, 1]))


def test_fd_jacobian_of_linear_map():
    A = np.array([[1.0, 2.0], [3.0, -1.0]])
    J = coords.fd_jacobian(lambda x: x @ A.T, [0.3, -0.7])
    np.testing.assert_allclose(J, A, rtol=1e-8)
