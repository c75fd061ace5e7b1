"""Acceptance criteria at their stated tolerances.

Each test evaluates every check of one criterion, records a single
PASS/FAIL line (printed in the terminal summary) and then asserts.
Criteria whose reference values cannot be reproduced stay red; the
failing checks are named in the recorded line.
"""

import numpy as np
import pytest

from bkaudit import coords, hier, modal, transdim
from bkaudit import scenarios as S
from bkaudit.condition import disagreement_score, tomography_conditionals
from bkaudit.construct import (
    any_evidence_reparameterization,
    manifold_integral,
    normalized_tube_for_evidence,
    triangular_transport,
)
from bkaudit.coords import Box
from bkaudit.density import Density, gaussian_diag, lognormal_product, pushforward, uniform_box
from bkaudit.quad import QuadratureSpec, integrate

from conftest import ACCEPTANCE_LINES


def _record(n: int, title: str, checks: dict[str, tuple[bool, str]]) -> None:
    failed = [k for k, (ok, _) in checks.items() if not ok]
    status = "PASS" if not failed else "FAIL"
    detail = "; ".join(f"{k}={v}" for k, (_, v) in checks.items())
    line = f"criterion {n} {title}: {status}"
    if failed:
        line += f" (failing: {', '.join(failed)})"
    ACCEPTANCE_LINES[n] = line + f" [{detail}]"
    print(ACCEPTANCE_LINES[n])
    assert not failed, ACCEPTANCE_LINES[n]


def _near(x: float, ref: float, tol: float) -> tuple[bool, str]:
    return abs(x - ref) <= tol, f"{x:.10g}"


def test_criterion_1_tomography():
    t = tomography_conditionals()
    lo, hi = t["feasible_v1"]
    g = np.linspace(lo, hi, 200)[1:-1]
    v = t["cond_velocity_route"].pdf(g[:, None])
    ratio = v.max() / v.min() - 1
    c = t["cond_slowness_route_in_v"].unnorm(g[:, None])
    slope = np.polyfit(np.log(g), np.log(c), 1)[0]
    score = disagreement_score(t["cond_velocity_route"], t["cond_slowness_route_in_v"], g)
    _record(1, "tomography conditional flip", {
        "flatness": (ratio < 1e-9, f"{ratio:.3g}"),
        "slope": _near(slope, 2.0, 1e-3),
        "disagreement": (score > 0.01, f"{score:.4g}"),
    })


def test_criterion_2_map_flip():
    p = lognormal_product([1.0, 1.0], [1.0, 1.0])
    p = Density(2, Box([1e-3, 1e-3], [6.0, 6.0]), p.eval_unnorm, p.norm_const, p.name, p.kind)
    a = modal.mode_invariance_audit(p, coords.hyperbolic_Trho(), b_transformed=Box([-4.0, 0.05], [4.0, 6.0]))
    e = np.exp(0.5)
    _record(2, "MAP flip", {
        "mode_original": (np.max(np.abs(a.mode_original - 1.0)) <= 1e-3, str(np.round(a.mode_original, 6))),
        "mode_back_mapped": (np.max(np.abs(a.mode_back_mapped - e)) <= 1e-3, str(np.round(a.mode_back_mapped, 6))),
        "value_original": _near(a.value_original, 0.0585, 5e-4),
        "value_back_mapped": _near(a.value_original_at_back_mapped, 0.0456, 5e-4),
        "verdict": (a.verdict == "FAIL", a.verdict),
    })


def test_criterion_3_hier_sigma():
    s1 = hier.optimize_sigma(hier.HierCase("cart"))
    s2 = hier.optimize_sigma(hier.HierCase("tan"))
    s3 = hier.optimize_sigma(hier.HierCase("square"))
    closed = hier.case1_sigma_closed_form(hier.HierCase("cart"))
    sig = [s1.sigma, s2.sigma, s3.sigma]
    gap = min(abs(sig[i] - sig[j]) for i in range(3) for j in range(i + 1, 3))
    _record(3, "hierarchical sigma contradiction", {
        "sigma1": _near(s1.sigma, 0.466667, 1e-5),
        "sigma1_closed_form": (abs(s1.sigma - closed) <= 1e-12, f"{abs(s1.sigma - closed):.2g}"),
        "sigma2": _near(s2.sigma, 1.02932, 1e-3),
        "sigma3": (s3 == hier.SigmaOptimum(1.5, "boundary_singular"), f"{s3.sigma}:{s3.flag}"),
        "pairwise_gap": (gap > 0.3, f"{gap:.4g}"),
    })


def test_criterion_4_decision_flip():
    c1, c2 = hier.HierCase("cart"), hier.HierCase("tan")
    s1 = hier.optimize_sigma(c1).sigma
    s2 = 1.02932
    (_, m1_hi), _ = hier.posterior_support(c1, s1)
    p1 = hier.posterior_tail(c1, s1, 1.6, axis=1)
    p2 = hier.posterior_tail(c2, s2, 1.6, axis=1)
    K = hier.posterior_m2_normalizer(c2, s2)
    _record(4, "decision flip", {
        "case1_tail": (p1 == 0.0, f"{p1:.6g}"),
        "case1_support_bound": _near(m1_hi, 1.566667, 1e-6),
        "case2_tail": _near(p2, 0.107, 2e-3),
        "case2_normalizer": _near(K, 1.689, 5e-3),
    })


def test_criterion_5_transdim_flip():
    c = transdim.TransdimCase()
    e1 = transdim.evidence_cartesian(1).value
    e2 = transdim.evidence_cartesian(2, geometry="parallelogram").value
    sph1 = transdim.evidence_spherical(1).value * (2 * c.sigma) ** 3 * c.dm
    k2, _ = transdim.likelihood_integral_k2(route="direct")
    bf = transdim.bayes_factors(geometry="parallelogram")
    ref1 = 2439 / 800 * np.sqrt(21 / 5)
    _record(5, "trans-dimensional flip", {
        "E1_cart": _near(e1, 0.146484375, 1e-9),
        "E2_cart": _near(e2, 0.234375, 1e-9),
        "B_cart": _near(bf["cartesian"].factor, 2.133333, 1e-6),
        "E1_sph_scaling": (abs(sph1 / ref1 - 1) <= 1e-9, f"{sph1:.12g}"),
        "E2_sph_scaling": (abs(k2 / 8.58922077 - 1) <= 1e-4, f"{k2:.10g}"),
        "B_sph": _near(bf["spherical"].factor, 0.68734901, 1e-4),
        "flip": (bf["flip"] is True, str(bf["flip"])),
    })


@pytest.mark.parametrize("mode", ["full", "reduced"])
def test_criterion_6_closed_form_oracle(mode):
    oracle = transdim.closed_form_oracle()
    if mode == "full":
        val, _ = transdim.likelihood_integral_k2(route="direct")
        tol = 1e-5
    else:
        val, _ = transdim.likelihood_integral_k2(route="substitution", q=QuadratureSpec(rel_tol=1e-3))
        tol = 1e-3
    rel = abs(val / oracle - 1)
    checks = {f"{mode}_rel": (rel <= tol, f"{rel:.3g}")}
    if mode == "full":
        _record(6, "closed-form oracle vs quadrature", checks)
    else:
        assert checks[f"{mode}_rel"][0], checks


def test_criterion_7_acausality():
    a = hier.discrete_hyper_marginals(0.5, 0.5, 1.0)
    b = hier.discrete_hyper_marginals(0.5, 0.5, 2.0)
    oracle = [hier.discrete_hyper_marginals_quadrature(0.5, 0.5, k) for k in (1.0, 2.0)]
    d_lam = np.max(np.abs(a["lambda_normalized"] - b["lambda_normalized"]))
    d_del = np.max(np.abs(a["delta_normalized"] - b["delta_normalized"]))
    agree = max(
        np.max(np.abs(x[key] - o[key]))
        for x, o in zip((a, b), oracle)
        for key in ("lambda_normalized", "delta_normalized")
    )
    g1, g2 = hier.gaussian_hyper_argmax(1.0), hier.gaussian_hyper_argmax(2.0)
    move = max(abs(g1[0] - g2[0]), abs(g1[1] - g2[1]))
    _record(7, "acausal hyperparameters", {
        "lambda_change": (d_lam > 1e-3, f"{d_lam:.4g}"),
        "delta_change": (d_del > 1e-3, f"{d_del:.4g}"),
        "oracle_agreement": (agree <= 1e-4, f"{agree:.2g}"),
        "gaussian_argmax_move": (move > 0.05, f"{move:.4g}"),
    })


def test_criterion_8_non_uniqueness():
    unit1, unit2 = Box([0.0], [1.0]), Box([0.0, 0.0], [1.0, 1.0])
    line = lambda x: 0.25 + 0.5 * x[..., 0]  # noqa: E731
    target = 3.0
    p, _ = normalized_tube_for_evidence(2, 1, line, unit1, target, unit2)
    naive = manifold_integral(p.pdf, line, unit1, unit2)
    g = Density(2, unit2, lambda x: 4 * x[:, 0] * x[:, 1], None, "2u2v", "custom")
    t = triangular_transport(uniform_box(unit2), g, n_grid=128)
    q = pushforward(uniform_box(unit2), t, unit2)
    u = np.linspace(0.01, 0.99, 60)
    pts = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
    sup = float(np.max(np.abs(q.pdf(pts) - 4 * pts[:, 0] * pts[:, 1])))
    checks = {
        "tube_evidence": (abs(naive / target - 1) <= 0.02, f"{naive:.6g}"),
        "transport_sup_error": (sup < 5e-3, f"{sup:.2g}"),
    }
    for e in (0.234375, 1.0):
        r = any_evidence_reparameterization(e)
        checks[f"any_evidence_{e}"] = (r.rel_error <= 0.02, f"{r.evidence:.6g}")
    _record(8, "non-uniqueness constructions", checks)


def _engines_agree() -> tuple[bool, str]:
    f = lambda x: np.exp(-np.sum((x - 0.3) ** 2, axis=-1))  # noqa: E731
    box = Box([0, 0], [1, 2])
    ref = integrate(f, box, QuadratureSpec("adaptive_subdivision", rel_tol=1e-10, abs_tol=1e-14))
    worst = 0.0
    for spec in (
        QuadratureSpec("tensor_gauss", rel_tol=1e-10),
        QuadratureSpec("monte_carlo", rel_tol=1e-4, abs_tol=1e-12, max_evals=2_000_000, seed=7),
    ):
        r = integrate(f, box, spec)
        worst = max(worst, abs(r.value - ref.value) / (3 * (r.err_est + ref.err_est) + 1e-12))
    return worst <= 1.0, f"{worst:.3g}"


def test_criterion_9_property_suites():
    rng = np.random.default_rng(2024)
    quad = QuadratureSpec("adaptive_subdivision", rel_tol=1e-8, abs_tol=1e-12)

    pairs = [
        (coords.reciprocal(2), uniform_box(Box([1, 1], [2, 2]))),
        (coords.hyperbolic_Trho(), lognormal_product([0.3, 0.2], [0.4, 0.3])),
        (coords.cubic(2), gaussian_diag([1.5, 1.5], [0.2, 0.2])),
        (coords.affine([[1.0, 0.5], [0.0, 2.0]]), gaussian_diag([0.0, 0.0], [1.0, 1.0])),
    ]
    mass_err = max(abs(integrate(q.unnorm, q.support, quad).value / q.norm_const - 1) for q in (pushforward(p, t) for t, p in pairs))

    base = uniform_box(Box([1, 1], [2, 2]))
    t = coords.hyperbolic_Trho()
    back = pushforward(pushforward(base, t), t.inverse())
    xs = 1.05 + 0.9 * rng.random((200, 2))
    rt_err = float(np.max(np.abs(back.pdf(xs) / base.pdf(xs) - 1)))

    maps = [
        (coords.reciprocal(2), Box([0.2, 0.2], [5, 5])),
        (coords.tan_axis0(3, center=1.5), Box([1.7, -2, -2], [2.8, 2, 2])),
        (coords.square_axis0(3), Box([0.1, -2, -2], [3, 2, 2])),
        (coords.cubic(2), Box([0.2, 0.2], [2, 2])),
        (coords.cart_to_spherical(), Box([0.2, 0.1, -2], [3, 3, 2])),
        (coords.spherical_to_cart(), Box([0.5, 0.2, -3.0], [3, 2.9, 3.0])),
        (coords.hyperbolic_Trho(), Box([0.1, 0.1], [6, 6])),
    ]
    jac_err = 0.0
    for d, b in maps:
        for u in rng.uniform(0.05, 0.95, (50, d.dim)):
            x = b.lo + u * b.widths
            a, fd = coords.jac_det_abs(d, x), coords.jac_det_abs(d, x, use_fd=True)
            jac_err = max(jac_err, abs(fd / a - 1))

    model_verdicts, data_verdict, replay_ok = [], None, True
    for s in S.registry():
        r = S.run(s)
        for v in r.verdicts:
            if v["name"] == "model_audit":
                model_verdicts.append(v["verdict"])
            if s.id == "hier:tan" and v["name"] == "data_audit":
                data_verdict = v["verdict"]
        if s.id in ("transdim:cart", "hier:tan", "construct:transport"):
            replay_ok &= S.run(S.Scenario.from_json(s.to_json())).to_json() == r.to_json()

    _record(9, "property suites", {
        "pushforward_mass": (mass_err < 1e-3, f"{mass_err:.2g}"),
        "pushforward_round_trip": (rt_err < 1e-6, f"{rt_err:.2g}"),
        "model_invariance": (len(model_verdicts) >= 6 and set(model_verdicts) == {"PASS"}, f"{len(model_verdicts)} audits"),
        "data_non_invariance": (data_verdict == "FAIL", str(data_verdict)),
        "jacobian_fd": (jac_err < 1e-6, f"{jac_err:.2g}"),
        "quadrature_engines": _engines_agree(),
        "replay": (replay_ok, str(replay_ok)),
    })
