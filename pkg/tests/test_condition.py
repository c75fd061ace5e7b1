import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bkaudit import coords
from bkaudit.condition import (
    compose_forward,
    disagreement_score,
    graph_posterior,
    line_box_interval,
    linear_forward,
    restrict_to_affine,
    tomography_conditionals,
    tomography_setup,
    tube_limit_conditional,
)
from bkaudit.coords import Box
from bkaudit.density import gaussian_diag, pushforward, uniform_box
from bkaudit.errors import DimensionMismatch, EmptySupport


@pytest.fixture(scope="module")
def tomo():
    return tomography_conditionals()


def test_feasible_diagonal_interval():
    lo, hi = tomography_setup().feasible_diagonal()
    assert lo == pytest.approx(1 / 0.9)
    assert hi == pytest.approx(2.0)


def test_velocity_route_is_constant(tomo):
    lo, hi = tomo["feasible_v1"]
    g = np.linspace(lo, hi, 200)[1:-1, None]
    v = tomo["cond_velocity_route"].pdf(g)
    assert v.max() / v.min() - 1 < 1e-9
    assert v[0] == pytest.approx(1 / (hi - lo), rel=1e-9)


def test_slowness_route_scales_as_v_squared(tomo):
    lo, hi = tomo["feasible_v1"]
    g = np.linspace(lo, hi, 200)[1:-1]
    c = tomo["cond_slowness_route_in_v"].unnorm(g[:, None])
    slope = np.polyfit(np.log(g), np.log(c), 1)[0]
    assert slope == pytest.approx(2.0, abs=1e-3)


def test_routes_disagree(tomo):
    lo, hi = tomo["feasible_v1"]
    g = np.linspace(lo, hi, 200)[1:-1]
    assert disagreement_score(tomo["cond_velocity_route"], tomo["cond_slowness_route_in_v"], g) > 0.01
    assert disagreement_score(tomo["cond_velocity_route"], tomo["cond_velocity_route"], g) == 0.0


@pytest.fixture(scope="module")
def tube_routes(tomo):
    post = tomo["posterior_v"]
    tv = tube_limit_conditional(post, [0, 0], [1, 1], (1.3, 1.7))
    ts = tube_limit_conditional(post, [0, 0], [1, 1], (1.3, 1.7), chart=coords.reciprocal(2))
    return tv, ts


def test_tube_limit_velocity_thickening_is_constant(tube_routes):
    g = np.linspace(1.3, 1.7, 41)[:, None]
    v = tube_routes[0].pdf(g)
    assert v.max() / v.min() - 1 < 1e-6


def test_tube_limit_slowness_thickening_matches_naive_slowness_route(tube_routes, tomo):
    # Brute-force tube integration in slowness coordinates reproduces the
    # naive slowness-route conditional, ∝ v1².
    g = np.linspace(1.3, 1.7, 41)
    brute = tube_routes[1].pdf(g[:, None])
    naive = tomo["cond_slowness_route_in_v"].unnorm(g[:, None])
    ratio = brute / naive
    assert ratio.max() / ratio.min() - 1 < 3e-3
    ref = g**2 / np.trapezoid(g**2, g)
    np.testing.assert_allclose(brute / np.trapezoid(brute, g), ref, rtol=3e-3)


def test_tube_limit_rejects_bad_eps():
    p = uniform_box(Box([0, 0], [1, 1]))
    with pytest.raises(ValueError):
        tube_limit_conditional(p, [0, 0], [1, 1], (0.2, 0.8), eps_sequence=(0.1, 0.2, 0.05))
    with pytest.raises(DimensionMismatch):
        tube_limit_conditional(uniform_box(Box([0] * 3, [1] * 3)), [0] * 3, [1] * 3, (0.2, 0.8))


@given(st.floats(0.5, 2.0), st.floats(-1.0, 1.0))
def test_graph_posterior_is_consistent_under_model_reparameterization(scale, shear):
    # q_t(t(m)) |J_t(m)| = q(m) for the graph posterior built in t-coordinates.
    prior_d = gaussian_diag([1.0, 0.5], [0.7, 0.9])
    prior_m = gaussian_diag([0.2, 0.1], [1.0, 1.0])
    fm = linear_forward([[1.0, 0.3], [0.2, 1.0]])
    t = coords.affine([[scale, shear], [0.0, 1.0]])
    q = graph_posterior(prior_d, prior_m, fm)
    prior_m_t = pushforward(prior_m, t)
    fm_t = linear_forward(fm.linear_matrix @ np.linalg.inv([[scale, shear], [0.0, 1.0]]))
    q_t = graph_posterior(prior_d, prior_m_t, fm_t)
    m = np.array([0.3, -0.4])
    assert q_t.unnorm(t(m)) * t.jac_det(m) == pytest.approx(q.unnorm(m), rel=1e-10)


def test_restrict_to_affine_uniform_is_flat():
    p = uniform_box(Box([0, 0], [2, 1]))
    c = restrict_to_affine(p, [0.0, 0.5], [1.0, 0.0])
    assert c.support.lo[0] == pytest.approx(0.0) and c.support.hi[0] == pytest.approx(2.0)
    assert c.pdf(np.array([0.7])) == pytest.approx(0.5)


def test_line_box_interval_and_miss():
    lo, hi = line_box_interval([0, 0], [1, 1], Box([1, 1], [2, 3]))
    assert (lo, hi) == (1.0, 2.0)
    with pytest.raises(EmptySupport):
        line_box_interval([0, 5], [1, 0], Box([0, 0], [1, 1]))


def test_compose_forward_dimension_check():
    fm = linear_forward(np.eye(3)[:, :2])
    with pytest.raises(DimensionMismatch):
        compose_forward(coords.identity(2), fm)
    out = compose_forward(coords.square_axis0(3), fm)(np.array([2.0, 1.0]))
    np.testing.assert_allclose(out, [4.0, 1.0, 0.0])
