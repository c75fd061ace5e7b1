import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bkaudit import transdim
from bkaudit.errors import EmptyIntersection
from bkaudit.quad import QuadratureSpec, polygon_area
from bkaudit.transdim import TransdimCase

CASE = TransdimCase()


def test_parallelogram_area_and_segment():
    assert abs(polygon_area(transdim.feasible_region_k2())) == pytest.approx(0.16)
    assert transdim.feasible_segment_k1() == pytest.approx((1.35, 1.5))


def test_cartesian_k1_exact():
    assert transdim.evidence_cartesian(1).value == pytest.approx(0.146484375, abs=1e-12)


def test_cartesian_k2_polytope_values():
    assert transdim.evidence_cartesian(2, geometry="parallelogram").value == pytest.approx(0.078125, abs=1e-12)
    assert transdim.stated_cartesian_k2() == pytest.approx(0.3125)
    assert transdim.evidence_cartesian(2, geometry="consistent").value == pytest.approx(0.2975 / 0.512 / 4, rel=1e-10)


def test_consistent_polygon_satisfies_data_box():
    verts = transdim.feasible_polygon_k2()
    d = verts @ CASE.G.T
    assert np.all(np.abs(d - np.asarray(CASE.d_obs)) <= CASE.sigma + 1e-12)
    assert abs(polygon_area(verts)) == pytest.approx(0.2975, rel=1e-10)


def test_empty_segment_raises():
    with pytest.raises(EmptyIntersection):
        transdim.feasible_segment_k1(TransdimCase(d_obs=(3.1, 9.0, 1.1)))


def test_unknown_geometry():
    with pytest.raises(ValueError):
        transdim.evidence_cartesian(2, geometry="other")


def test_spherical_k1_closed_form_scaling():
    e = transdim.evidence_spherical(1)
    raw = e.value * (2 * CASE.sigma) ** 3 * CASE.dm
    assert raw == pytest.approx(2439 / 800 * np.sqrt(21 / 5), rel=1e-9)
    assert e.err_est < 1e-10


def test_closed_form_oracle_against_quadrature():
    oracle = transdim.closed_form_oracle()
    val, _ = transdim.likelihood_integral_k2(route="substitution")
    assert oracle == pytest.approx(8.58922077, rel=1e-8)
    assert val == pytest.approx(oracle, rel=1e-5)


def test_k2_closed_form_reduced_tolerance_mode():
    val, _ = transdim.likelihood_integral_k2(route="substitution", q=QuadratureSpec(rel_tol=1e-3))
    assert val == pytest.approx(transdim.closed_form_oracle(), rel=1e-3)


def test_closed_form_terms_are_well_defined():
    t = transdim.closed_form_terms()
    assert np.all(t["log_args"] > 0)
    assert np.all(np.abs(t["atanh_args"]) < 1)
    np.testing.assert_allclose(t["asinh_library"], t["asinh_log"], rtol=1e-14)


@given(st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_spherical_likelihood_routes_agree_inside_polygon(u, v):
    verts = transdim.feasible_polygon_k2()
    # Points in the triangle fan spanned from the first vertex.
    p0, p1, p2 = verts[0], verts[1], verts[2]
    if u + v > 1:
        u, v = 1 - u, 1 - v
    m = p0 + u * (p1 - p0) + v * (p2 - p0)
    a = transdim.spherical_likelihood_algebraic(m)
    b = transdim.spherical_likelihood_compositional(CASE, 2)(m)
    assert b == pytest.approx(a, rel=1e-9)


def test_bayes_factors_parallelogram_geometry():
    bf = transdim.bayes_factors(geometry="parallelogram")
    assert bf["spherical"].factor == pytest.approx(0.68734901, abs=1e-4)
    assert bf["cartesian"].factor == pytest.approx(0.533333, abs=1e-6)
    assert bf["flip"] is False


def test_bayes_factors_consistent_geometry_flip():
    bf = transdim.bayes_factors(geometry="consistent")
    assert bf["flip"] is True
    assert bf["cartesian"].favored == "k=1" and bf["spherical"].favored == "k=2"


def test_aic_depends_on_parameterization():
    t = transdim.aic_table()
    assert t["cartesian"]["aic"][1] != t["spherical"]["aic"][1]
    assert t["cartesian"]["preferred_k"] == 1
    assert t["spherical"]["max_likelihood"][2] > t["spherical"]["max_likelihood"][1]


def test_linear_models():
    m = transdim.linear_models()
    np.testing.assert_allclose(m[2].linear_matrix, np.asarray(CASE.G2))
