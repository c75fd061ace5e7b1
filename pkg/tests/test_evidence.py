import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bkaudit import coords
from bkaudit.condition import linear_forward
from bkaudit.coords import Box
from bkaudit.density import gaussian_diag, uniform_box
from bkaudit.errors import DivideByZero, NonPositiveLikelihood
from bkaudit.evidence import (
    EvidenceResult,
    aic,
    audit_data_reparam_invariance,
    audit_model_reparam_invariance,
    bayes_factor,
    evidence,
    feasible_bbox,
    polytope_evidence,
)
from bkaudit.hier import HierCase
from bkaudit.quad import QuadratureSpec


def _hier_problem(sigma=0.5):
    c = HierCase("cart")
    return (
        uniform_box(Box(np.subtract(c.d_obs, sigma), np.add(c.d_obs, sigma))),
        uniform_box(Box([0, 0], [3, 3])),
        linear_forward(c.G),
    )


def test_polytope_matches_quadrature():
    pd, pm, fm = _hier_problem()
    exact = evidence(pd, pm, fm)
    assert exact.method == "polytope"
    q = evidence(pd, pm, fm, QuadratureSpec("monte_carlo", rel_tol=1e-12, abs_tol=1e-300, max_evals=2_000_000, seed=1), force_quadrature=True, box=feasible_bbox(pd, pm, fm))
    # Constant integrand on the box: zero variance, exact up to the pad.
    assert abs(exact.value - q.value) <= 3 * q.err_est + 1e-9 * exact.value


@given(st.floats(0.3, 1.5), st.floats(-1.0, 1.0), st.floats(0.1, 0.5))
def test_segment_evidence_closed_form(g0, g1, w):
    # One parameter, m in [0, 2], data box |G m - 0.5| <= w per component.
    G = np.array([[g0], [g1]])
    val, length = polytope_evidence(G, [0.5 - w] * 2, [0.5 + w] * 2, Box([0], [2]), 1.0)
    m = np.linspace(0, 2, 200001)
    ok = np.all(np.abs(np.outer(m, G[:, 0]) - 0.5) <= w, axis=1)
    assert length == pytest.approx(ok.mean() * 2, abs=1e-4)


def test_empty_feasible_set_gives_zero():
    val, area = polytope_evidence(np.eye(2), [5, 5], [6, 6], Box([0, 0], [1, 1]), 1.0)
    assert val == 0.0 and area == 0.0


def test_bayes_factor_and_tie():
    a = EvidenceResult(0.3, 0.0, {}, "k=2")
    b = EvidenceResult(0.15, 0.0, {}, "k=1")
    r = bayes_factor(a, b)
    assert r.factor == pytest.approx(2.0) and r.favored == "k=2"
    assert bayes_factor(b, a).favored == "k=2"
    assert bayes_factor(a, a).favored == "tie"
    with pytest.raises(DivideByZero):
        bayes_factor(a, EvidenceResult(0.0, 0.0, {}, "z"))


def test_evidence_rejects_negative_value():
    with pytest.raises(ValueError):
        EvidenceResult(-1.0, 0.0, {})


def test_aic():
    assert aic(2, 1.0) == 4.0
    assert aic(1, np.e) == pytest.approx(0.0)
    with pytest.raises(NonPositiveLikelihood):
        aic(1, 0.0)


@pytest.mark.parametrize(
    "t",
    [coords.affine([[1.0, 0.5], [0.0, 2.0]]), coords.cubic(2)],
    ids=["shear", "cubic"],
)
def test_model_reparameterization_leaves_evidence_unchanged(t):
    pd, pm, fm = _hier_problem()
    v = audit_model_reparam_invariance(pd, pm, fm, t)
    assert v.passed, v.to_dict()


def test_data_reparameterization_changes_overdetermined_evidence():
    pd, pm, fm = _hier_problem()
    t = coords.tan_axis0(3, center=1.5)
    v = audit_data_reparam_invariance(pd, pm, fm, t, support=Box([-np.inf] * 3, [np.inf] * 3))
    assert v.verdict == "FAIL"
    assert v.delta > 10 * (v.original.err_est + v.transformed.err_est)


def test_data_reparameterization_of_gaussian_problem():
    # Smooth priors, overdetermined linear forward model, affine data map:
    # the evidence scales by 1/|det A|.
    pd = gaussian_diag([1.0, 2.0, 0.5], [0.5, 0.5, 0.5])
    pm = gaussian_diag([1.0], [0.5])
    fm = linear_forward([[1.0], [2.0], [0.5]])
    A = np.diag([2.0, 1.0, 1.0])
    q = QuadratureSpec("adaptive_subdivision", rel_tol=1e-10, abs_tol=1e-14)
    v = audit_data_reparam_invariance(pd, pm, fm, coords.affine(A), q)
    assert v.transformed.value == pytest.approx(v.original.value / 2, rel=1e-6)
    assert v.verdict == "FAIL"


def test_feasible_bbox():
    pd, pm, fm = _hier_problem()
    b = feasible_bbox(pd, pm, fm)
    assert b.lo[1] == pytest.approx(1.0, abs=1e-8) and b.hi[1] == pytest.approx(2.0, abs=1e-8)
    assert feasible_bbox(pd, pm, linear_forward(np.ones((3, 3)))) is None
