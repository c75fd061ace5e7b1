"""Evidences, Bayes factors, AIC and reparameterization audits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coords import Box, Diffeo
from .condition import ForwardModel, compose_forward
from .density import Density, pushforward
from .errors import DivideByZero, NonPositiveLikelihood
from .quad import QuadratureSpec, integrate, polygon_area, polygon_from_halfplanes

__all__ = [
    "EvidenceResult",
    "BayesFactorReport",
    "InvarianceVerdict",
    "evidence",
    "polytope_evidence",
    "bayes_factor",
    "audit_model_reparam_invariance",
    "audit_data_reparam_invariance",
    "aic",
    "feasible_bbox",
    "TIE_TOL",
]

TIE_TOL = 1e-9
# Quadrature over indicator discontinuities: the engine's own estimate is
# optimistic, so it is scaled up.
_DISCONTINUITY_INFLATION = 10.0


@dataclass(frozen=True)
class EvidenceResult:
    value: float
    err_est: float
    engine: dict
    hyper_label: str = ""
    method: str = "quadrature"

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("evidence must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "hyper_label": self.hyper_label,
            "value": self.value,
            "err_est": self.err_est,
            "method": self.method,
            "engine": self.engine,
        }


@dataclass(frozen=True)
class BayesFactorReport:
    numerator: EvidenceResult
    denominator: EvidenceResult
    factor: float
    favored: str

    def to_dict(self) -> dict:
        return {
            "numerator": self.numerator.hyper_label,
            "denominator": self.denominator.hyper_label,
            "factor": self.factor,
            "favored": self.favored,
        }


@dataclass(frozen=True)
class InvarianceVerdict:
    kind: str
    verdict: str
    original: EvidenceResult
    transformed: EvidenceResult
    delta: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "original": self.original.value,
            "transformed": self.transformed.value,
            "delta": self.delta,
            "tolerance": self.tolerance,
        }


def polytope_evidence(G, d_lo, d_hi, m_box: Box, c: float) -> tuple[float, float]:
    """Exact ``c · measure{m in m_box : d_lo <= G m <= d_hi}`` for ``m_dim <= 2``.

    Returns ``(value, measure)``; an empty or degenerate feasible set gives 0.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    d_lo = np.asarray(d_lo, dtype=float)
    d_hi = np.asarray(d_hi, dtype=float)
    k = G.shape[1]
    if k == 1:
        lo, hi = float(m_box.lo[0]), float(m_box.hi[0])
        for gi, a, b in zip(G[:, 0], d_lo, d_hi):
            if gi == 0:
                if not a <= 0 <= b:
                    return 0.0, 0.0
                continue
            # Tiny coefficients overflow to ±inf, which leaves the bound inactive.
            with np.errstate(over="ignore"):
                u, v = sorted((a / gi, b / gi))
            lo, hi = max(lo, u), min(hi, v)
        length = max(hi - lo, 0.0)
        return c * length, length
    if k == 2:
        A = np.vstack([G, -G])
        b = np.concatenate([d_hi, -d_lo])
        verts = polygon_from_halfplanes(A, b, m_box)
        if verts.shape[0] < 3:
            return 0.0, 0.0
        area = abs(polygon_area(verts))
        if area < 1e-14:
            return 0.0, 0.0
        return c * area, area
    raise ValueError("polytope path handles one or two model parameters")


def _polytope_applicable(prior_d: Density, prior_m: Density, fm: ForwardModel) -> bool:
    return (
        prior_d.kind == "uniform_box"
        and prior_m.kind == "uniform_box"
        and fm.linear_matrix is not None
        and fm.m_dim <= 2
        and prior_d.is_normalized
        and prior_m.is_normalized
    )


def evidence(
    prior_d: Density,
    prior_m: Density,
    fm: ForwardModel,
    q: Optional[QuadratureSpec] = None,
    hyper_label: str = "",
    force_quadrature: bool = False,
    box: Optional[Box] = None,
) -> EvidenceResult:
    """``∫ prior_d(g(m)) prior_m(m) dm``.

    Uniform priors with a linear forward model of one or two parameters use
    exact interval/polygon geometry; everything else goes through ``quad``.
    """
    q = q or QuadratureSpec()
    if prior_d.dim != fm.d_dim or prior_m.dim != fm.m_dim:
        from .errors import DimensionMismatch

        raise DimensionMismatch("priors and forward model disagree on dims")
    if not force_quadrature and _polytope_applicable(prior_d, prior_m, fm):
        c = 1.0 / (prior_d.norm_const * prior_m.norm_const)
        val, _ = polytope_evidence(fm.linear_matrix, prior_d.support.lo, prior_d.support.hi, prior_m.support, c)
        return EvidenceResult(val, 4 * np.finfo(float).eps * val, {"engine": "polytope"}, hyper_label, "polytope")

    def f(m):
        d = fm.map(m)
        return prior_d.pdf(d) * prior_m.pdf(m)

    res = integrate(f, box or prior_m.support, q)
    err = res.err_est
    if q.engine != "monte_carlo" and (prior_d.kind == "uniform_box" or prior_m.kind == "uniform_box"):
        err *= _DISCONTINUITY_INFLATION
    return EvidenceResult(max(res.value, 0.0), err, q.to_dict(), hyper_label, "quadrature")


def bayes_factor(num: EvidenceResult, den: EvidenceResult) -> BayesFactorReport:
    """``num / den``; ``favored`` is the numerator label when the factor exceeds 1."""
    if den.value == 0:
        raise DivideByZero("denominator evidence is zero")
    factor = num.value / den.value
    if abs(factor - 1.0) < TIE_TOL:
        favored = "tie"
    elif factor > 1:
        favored = num.hyper_label or "numerator"
    else:
        favored = den.hyper_label or "denominator"
    return BayesFactorReport(num, den, factor, favored)


def feasible_bbox(prior_d: Density, prior_m: Density, fm: ForwardModel, pad: float = 1e-12) -> Optional[Box]:
    """Bounding box of ``{m : g(m) in supp(prior_d)} ∩ supp(prior_m)`` for
    linear ``g`` with one or two parameters; ``None`` otherwise.

    The evidence integrand vanishes outside it, so quadrature may be
    restricted to this box without changing the integral. ``pad`` is
    relative to the box extent.
    """
    if fm.linear_matrix is None or fm.m_dim > 2 or not prior_d.support.is_finite:
        return None
    G = fm.linear_matrix
    lo, hi = prior_d.support.lo, prior_d.support.hi
    if fm.m_dim == 1:
        a, b = float(prior_m.support.lo[0]), float(prior_m.support.hi[0])
        for gi, u, v in zip(G[:, 0], lo, hi):
            if gi != 0:
                x, y = sorted((u / gi, v / gi))
                a, b = max(a, x), min(b, y)
        if not a < b:
            return None
        e = pad * (b - a)
        return Box([a - e], [b + e])
    verts = polygon_from_halfplanes(np.vstack([G, -G]), np.concatenate([hi, -lo]), prior_m.support)
    if verts.shape[0] < 3:
        return None
    lo_v, hi_v = verts.min(axis=0), verts.max(axis=0)
    e = pad * (hi_v - lo_v)
    return Box(lo_v - e, hi_v + e)


_AUDIT_SPEC = QuadratureSpec("monte_carlo", rel_tol=1e-12, abs_tol=1e-300, max_evals=4_000_000, seed=0)


def _verdict(kind, e0, e1, expect_equal=True, details=None) -> InvarianceVerdict:
    tol = 3.0 * (e0.err_est + e1.err_est)
    delta = abs(e0.value - e1.value)
    return InvarianceVerdict(kind, "PASS" if delta <= tol else "FAIL", e0, e1, delta, tol, details or {})


def audit_model_reparam_invariance(
    prior_d: Density,
    prior_m: Density,
    fm: ForwardModel,
    t: Diffeo,
    q: Optional[QuadratureSpec] = None,
    support: Optional[Box] = None,
) -> InvarianceVerdict:
    """Compare the evidence before and after a model-space diffeomorphism.

    The transformed problem uses the pushed-forward model prior and the
    forward map ``g ∘ t⁻¹``. Both sides go through the same quadrature
    engine. PASS when the values agree within 3 combined error estimates.
    """
    q = q or _AUDIT_SPEC
    bbox = feasible_bbox(prior_d, prior_m, fm)
    e0 = evidence(prior_d, prior_m, fm, q, "original", force_quadrature=True, box=bbox)
    pm_t = pushforward(prior_m, t, support)
    fm_t = ForwardModel(fm.m_dim, fm.d_dim, lambda y: fm.map(t.inverse_map(y)), None, f"{fm.name}∘inv({t.name})")
    bbox_t = t.image_box(bbox) if (bbox is not None and t.image_box is not None) else None
    e1 = evidence(prior_d, pm_t, fm_t, q, f"model:{t.name}", force_quadrature=True, box=bbox_t)
    return _verdict("model_reparam", e0, e1)


def audit_data_reparam_invariance(
    prior_d: Density,
    prior_m: Density,
    fm: ForwardModel,
    t: Diffeo,
    q: Optional[QuadratureSpec] = None,
    support: Optional[Box] = None,
) -> InvarianceVerdict:
    """Compare the evidence before and after a data-space diffeomorphism.

    The transformed problem uses the pushed-forward data prior and the
    forward map ``t ∘ g``. For overdetermined problems the image of ``g`` is
    a null set in data space, the Jacobian factor is evaluated only on that
    set, and the evidence changes: FAIL is the expected outcome there.
    """
    q = q or _AUDIT_SPEC
    bbox = feasible_bbox(prior_d, prior_m, fm)
    e0 = evidence(prior_d, prior_m, fm, q, "original", force_quadrature=True, box=bbox)
    pd_t = pushforward(prior_d, t, support)
    e1 = evidence(pd_t, prior_m, compose_forward(t, fm), q, f"data:{t.name}", force_quadrature=True, box=bbox)
    return _verdict("data_reparam", e0, e1)


def aic(k: int, max_likelihood: float) -> float:
    """``2k − 2 ln L``."""
    if not max_likelihood > 0:
        raise NonPositiveLikelihood(f"maximum likelihood must be positive, got {max_likelihood}")
    return 2.0 * k - 2.0 * float(np.log(max_likelihood))
