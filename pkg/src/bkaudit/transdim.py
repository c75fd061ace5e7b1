"""Trans-dimensional model selection under Cartesian and spherical data.

Three data ``d = G m`` are fitted by a one-parameter model (``G1``, the
first column of ``G2``) or a two-parameter model (``G2``). Data noise is a
uniform cube of half-width σ in Cartesian coordinates; the spherical
parameterization pushes that cube forward through ``cart_to_spherical``.

Two geometries are exposed for the two-parameter feasible region:
``"parallelogram"`` uses the stated parallelogram P1..P4 and ``"consistent"``
uses the exact set ``{m in [0, Δm]² : |G2 m − d| <= σ}`` obtained by
half-plane clipping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from . import coords
from .condition import linear_forward
from .coords import Box
from .density import pushforward, uniform_box
from .errors import EmptyIntersection
from .evidence import EvidenceResult, aic, bayes_factor, polytope_evidence
from .quad import QuadratureSpec, integrate, integrate_polygon, integrate_segment, polygon_area

__all__ = [
    "TransdimCase",
    "GEOMETRIES",
    "feasible_region_k2",
    "feasible_polygon_k2",
    "feasible_segment_k1",
    "evidence_cartesian",
    "evidence_spherical",
    "spherical_likelihood_algebraic",
    "spherical_likelihood_compositional",
    "likelihood_integral_k2",
    "closed_form_terms",
    "closed_form_oracle",
    "stated_cartesian_k2",
    "bayes_factors",
    "aic_table",
    "linear_models",
]

GEOMETRIES = ("parallelogram", "consistent")


@dataclass(frozen=True)
class TransdimCase:
    d_obs: tuple = (3.1, 5.8, 1.1)
    G2: tuple = ((2.0, 1.0), (4.0, 2.0), (1.0, 0.0))
    sigma: float = 0.4
    dm: float = 2.0
    G: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        G = np.asarray(self.G2, dtype=float)
        if G.shape != (3, 2):
            raise ValueError("G2 must be 3x2")
        if self.sigma < 0 or self.dm <= 0:
            raise ValueError("sigma must be nonnegative and dm positive")
        object.__setattr__(self, "G", G)

    @property
    def G1(self) -> np.ndarray:
        return self.G[:, :1]

    @property
    def d(self) -> np.ndarray:
        return np.asarray(self.d_obs, dtype=float)

    @property
    def data_box(self) -> Box:
        return Box.cube(self.d, self.sigma)

    def model_box(self, k: int) -> Box:
        return Box(np.zeros(k), np.full(k, self.dm))


def _check_geometry(geometry: str):
    if geometry not in GEOMETRIES:
        raise ValueError(f"geometry must be one of {GEOMETRIES}")


def feasible_region_k2(case: Optional[TransdimCase] = None) -> np.ndarray:
    """The stated parallelogram P1..P4 (counter-clockwise)."""
    case = case or TransdimCase()
    d1, d2, d3 = case.d
    s = case.sigma
    return np.array(
        [
            [(d1 - s) / 2, d3 - s],
            [(d2 + s) / 4, d3 - s],
            [(d2 - 2 * d3 - s) / 4, d3 + s],
            [(d1 - d3 - 2 * s) / 2, d3 + s],
        ]
    )


def feasible_polygon_k2(case: Optional[TransdimCase] = None) -> np.ndarray:
    """Exact feasible polygon of the two-parameter model by half-plane clipping."""
    from .quad import polygon_from_halfplanes

    case = case or TransdimCase()
    box = case.data_box
    A = np.vstack([case.G, -case.G])
    b = np.concatenate([box.hi, -box.lo])
    return polygon_from_halfplanes(A, b, case.model_box(2))


def feasible_segment_k1(case: Optional[TransdimCase] = None) -> tuple[float, float]:
    """Intersection of the per-datum intervals for the one-parameter model."""
    case = case or TransdimCase()
    lo, hi = 0.0, case.dm
    for g, d in zip(case.G1[:, 0], case.d):
        a, b = sorted(((d - case.sigma) / g, (d + case.sigma) / g))
        lo, hi = max(lo, a), min(hi, b)
    if lo > hi:
        raise EmptyIntersection(f"data are infeasible for the one-parameter model: [{lo}, {hi}]")
    return lo, hi


def _region(case: TransdimCase, geometry: str) -> np.ndarray:
    _check_geometry(geometry)
    return feasible_region_k2(case) if geometry == "parallelogram" else feasible_polygon_k2(case)


def evidence_cartesian(k: int, case: Optional[TransdimCase] = None, geometry: str = "parallelogram") -> EvidenceResult:
    """Cartesian-data evidence by exact geometry.

    ``k = 1`` uses the feasible segment. ``k = 2`` integrates the constant
    likelihood over the chosen region: the stated parallelogram or the
    exact clipped polygon.
    """
    case = case or TransdimCase()
    c = 1.0 / (2 * case.sigma) ** 3
    eng = {"engine": "polytope"}
    if k == 1:
        lo, hi = feasible_segment_k1(case)
        return EvidenceResult(c * (hi - lo) / case.dm, 0.0, eng, "k=1", "polytope")
    if k != 2:
        raise ValueError("k must be 1 or 2")
    _check_geometry(geometry)
    if geometry == "consistent":
        box = case.data_box
        val, _ = polytope_evidence(case.G, box.lo, box.hi, case.model_box(2), c / case.dm**2)
        return EvidenceResult(val, 4 * np.finfo(float).eps * val, eng, "k=2", "polytope")
    area = abs(polygon_area(feasible_region_k2(case)))
    val = c * area / case.dm**2
    return EvidenceResult(val, 4 * np.finfo(float).eps * val, eng, "k=2", "polytope")


def stated_cartesian_k2(case: Optional[TransdimCase] = None) -> float:
    """The stated closed form ``(d2 − 2 d1 + 3σ)/((2σ)² Δm²)``, kept for the record.

    It differs from ``area/((2σ)³ Δm²)`` with ``area = σ/2 (d2 − 2 d1 + 3σ)``
    by a factor of 4.
    """
    case = case or TransdimCase()
    d1, d2, _ = case.d
    s = case.sigma
    return (d2 - 2 * d1 + 3 * s) / ((2 * s) ** 2 * case.dm**2)


def spherical_likelihood_algebraic(m, case: Optional[TransdimCase] = None) -> np.ndarray:
    """``r ρ / (2σ)³`` of the predicted data, without the feasibility indicator.

    ``r`` is the Euclidean norm of ``G m`` and ``ρ`` that of its first two
    components; ``r ρ = r² sin θ`` is the Cartesian-to-spherical Jacobian.
    """
    case = case or TransdimCase()
    m = np.asarray(m, dtype=float)
    G = case.G[:, : m.shape[-1]]
    d = m @ G.T
    rho2 = d[..., 0] ** 2 + d[..., 1] ** 2
    return np.sqrt((rho2 + d[..., 2] ** 2) * rho2) / (2 * case.sigma) ** 3


def spherical_likelihood_compositional(case: Optional[TransdimCase] = None, k: int = 2):
    """Spherical likelihood from the general machinery.

    The Cartesian data cube is pushed forward through ``cart_to_spherical``
    and evaluated at the spherical image of ``G m``. It carries the
    indicator of the data cube.
    """
    case = case or TransdimCase()
    t = coords.cart_to_spherical()
    q = pushforward(uniform_box(case.data_box), t)
    G = case.G[:, :k]

    def L(m):
        m = np.asarray(m, dtype=float)
        d = m @ G.T
        ok = np.asarray(t.in_domain(d), dtype=bool)
        y = t.forward_map(np.where(ok[..., None], d, case.d))
        return np.where(ok, q.pdf(y), 0.0)

    return L


def _substitution(verts: np.ndarray):
    """``m = m0 + u a + v b`` spanning the parallelogram; returns the map and |J|."""
    m0, a, b = verts[0], verts[1] - verts[0], verts[3] - verts[0]
    jac = abs(a[0] * b[1] - a[1] * b[0])

    def T(uv):
        uv = np.asarray(uv, dtype=float)
        return m0 + uv[..., :1] * a + uv[..., 1:2] * b

    return T, jac


def likelihood_integral_k2(
    case: Optional[TransdimCase] = None,
    route: str = "substitution",
    q: Optional[QuadratureSpec] = None,
) -> tuple[float, float]:
    """``∫_P r ρ dm`` over the stated parallelogram; returns ``(value, err_est)``.

    ``route="substitution"`` integrates over the unit square after the
    affine substitution with Jacobian equal to the area of P;
    ``route="direct"`` integrates over P in model coordinates by fan
    triangulation with a collapsed Gauss rule.
    """
    case = case or TransdimCase()
    P = feasible_region_k2(case)
    scale = (2 * case.sigma) ** 3

    def f(m):
        return spherical_likelihood_algebraic(m, case) * scale

    if route == "direct":
        v1 = integrate_polygon(f, P, n=48)
        v2 = integrate_polygon(f, P, n=24)
        return v1, abs(v1 - v2)
    if route != "substitution":
        raise ValueError("route must be 'substitution' or 'direct'")
    T, jac = _substitution(P)
    res = integrate(lambda uv: f(T(uv)) * jac, Box([0, 0], [1, 1]), q or QuadratureSpec(rel_tol=1e-12, abs_tol=1e-14))
    return res.value, res.err_est


def evidence_spherical(
    k: int,
    case: Optional[TransdimCase] = None,
    q: Optional[QuadratureSpec] = None,
    geometry: str = "parallelogram",
) -> EvidenceResult:
    """Spherical-data evidence.

    ``k = 1`` integrates ``2√105 m²/(2σ)³`` over the feasible segment
    (the compositional likelihood equals it there). ``k = 2`` with the
    ``parallelogram`` geometry integrates the algebraic likelihood over the
    stated parallelogram; with the ``consistent`` geometry it integrates
    the compositional likelihood over the exact feasible polygon.
    """
    case = case or TransdimCase()
    scale = (2 * case.sigma) ** 3
    if k == 1:
        lo, hi = feasible_segment_k1(case)
        L = spherical_likelihood_compositional(case, 1)
        g = np.linalg.norm(case.G1[:, 0])
        rho = np.linalg.norm(case.G1[:2, 0])
        closed = g * rho * (hi**3 - lo**3) / 3 / scale / case.dm
        quad_val = integrate_segment(lambda m: L(m), lo, hi, n=16) / case.dm
        return EvidenceResult(closed, abs(closed - quad_val), {"engine": "closed_form"}, "k=1", "closed_form")
    if k != 2:
        raise ValueError("k must be 1 or 2")
    _check_geometry(geometry)
    if geometry == "parallelogram":
        val, err = likelihood_integral_k2(case, "substitution", q)
        spec = (q or QuadratureSpec(rel_tol=1e-12, abs_tol=1e-14)).to_dict()
        return EvidenceResult(val / scale / case.dm**2, err / scale / case.dm**2, spec, "k=2", "quadrature")
    verts = feasible_polygon_k2(case)
    L = spherical_likelihood_compositional(case, 2)
    v1 = integrate_polygon(L, verts, n=48)
    v2 = integrate_polygon(L, verts, n=24)
    return EvidenceResult(v1 / case.dm**2, abs(v1 - v2) / case.dm**2, {"engine": "polygon_gauss", "n": 48}, "k=2", "quadrature")


# ------------------------------------------------------------- closed form


def closed_form_terms() -> dict:
    """Pieces of the exact expression for ``∫_P r ρ dm`` at the default case.

    Returns every logarithm argument (all must be positive) and the
    inverse hyperbolic sines evaluated both through ``numpy.arcsinh`` and
    through ``ln(x + √(x² + 1))``.
    """
    s = np.sqrt
    log_args = [
        21 * s(409) - 92 * s(21),
        21 * s(541) - 106 * s(21),
        106 * s(21) + 21 * s(541),
        92 * s(21) + 21 * s(409),
        7.0,
        7 / 3,
        1029.0,
        101 * s(3) + 3 * s(3407),
        21 * s(29) + 113,
    ]
    asinh_args = [132 * s(5) / 107, 1033 * s(5) / 642, 1157 * s(5) / 706, 458 * s(5) / 353]
    atanh_args = [113 / (21 * s(29)), 92 / s(8589), 101 / s(10221), 106 / s(11361)]
    return {
        "log_args": np.array(log_args),
        "asinh_args": np.array(asinh_args),
        "asinh_library": np.arcsinh(asinh_args),
        "asinh_log": np.log(np.array(asinh_args) + np.sqrt(np.array(asinh_args) ** 2 + 1)),
        "atanh_args": np.array(atanh_args),
    }


def closed_form_oracle() -> float:
    """Exact value of ``∫_P r ρ dm`` over the stated parallelogram."""
    s, log = np.sqrt, np.log
    t = closed_form_terms()
    ash = t["asinh_library"]
    ath = np.arctanh(t["atanh_args"])
    return float(
        (20312711127 * s(409 / 5) - 30579261939 * s(541 / 5)) / 14229845000
        + (47479907867 * s(203 / 15) - 1620870691 * s(23849 / 5)) / 3484860000
        + 1507 * (log(21 * s(409) - 92 * s(21)) - log(21 * s(541) - 106 * s(21))) / (88200 * s(105))
        + 8429 * (log(106 * s(21) + 21 * s(541)) - log(92 * s(21) + 21 * s(409))) / (352800 * s(105))
        + 31852343043 * (ash[0] - ash[1]) / (4646480000 * s(241))
        + 46582208643 * (ash[2] - ash[3]) / (4646480000 * s(241))
        + 7
        * s(7 / 15)
        * (
            log(7) / 14400
            + log(7 / 3) / 28800
            - log(1029) / 28800
            + (log(101 * s(3) + 3 * s(3407)) - log(21 * s(29) + 113)) / 7200
            + (ath[0] + ath[1] - ath[2] - ath[3]) / 9600
        )
    )


# ------------------------------------------------------------ comparisons


def bayes_factors(case: Optional[TransdimCase] = None, geometry: str = "parallelogram") -> dict:
    """Bayes factors ``E(k=2)/E(k=1)`` in both data parameterizations.

    ``flip`` is true when the two parameterizations favour different k;
    ``reference_direction`` is true when Cartesian favours k=2 and spherical k=1.
    """
    case = case or TransdimCase()
    cart = bayes_factor(evidence_cartesian(2, case, geometry), evidence_cartesian(1, case))
    sph = bayes_factor(evidence_spherical(2, case, geometry=geometry), evidence_spherical(1, case))
    return {
        "geometry": geometry,
        "cartesian": cart,
        "spherical": sph,
        "flip": cart.favored != sph.favored,
        "reference_direction": cart.favored == "k=2" and sph.favored == "k=1",
    }


def _max_on_polygon(f, verts: np.ndarray, n: int = 64) -> float:
    """Grid over the fan triangles followed by a bounded polish in (u, v)."""
    best = -np.inf
    p0 = verts[0]
    g = np.linspace(0.0, 1.0, n)
    U, V = np.meshgrid(g, g, indexing="ij")
    mask = U + V <= 1.0
    uv = np.stack([U[mask], V[mask]], axis=-1)
    for i in range(1, verts.shape[0] - 1):
        e1, e2 = verts[i] - p0, verts[i + 1] - p0

        def to_m(w):
            w = np.asarray(w, dtype=float)
            return p0 + w[..., :1] * e1 + w[..., 1:2] * e2

        vals = f(to_m(uv))
        j = int(np.argmax(vals))
        res = optimize.minimize(
            lambda w: -float(f(to_m(w))),
            uv[j],
            method="SLSQP",
            bounds=[(0, 1), (0, 1)],
            constraints=[{"type": "ineq", "fun": lambda w: 1.0 - w[0] - w[1]}],
        )
        best = max(best, float(vals[j]), -float(res.fun) if res.success else -np.inf)
    return best


def aic_table(case: Optional[TransdimCase] = None, geometry: str = "parallelogram") -> dict:
    """Maximum likelihoods and AIC for k ∈ {1, 2} in both parameterizations."""
    case = case or TransdimCase()
    lo, hi = feasible_segment_k1(case)
    c = 1.0 / (2 * case.sigma) ** 3
    region = _region(case, geometry)
    L_sph1 = lambda m: spherical_likelihood_algebraic(np.asarray(m)[..., None], case)  # noqa: E731
    seg = np.linspace(lo, hi, 1001)
    i = int(np.argmax(L_sph1(seg)))
    res = optimize.minimize_scalar(lambda x: -float(L_sph1(x)), bounds=(lo, hi), method="bounded")
    ml = {
        ("cartesian", 1): c,
        ("cartesian", 2): c,
        ("spherical", 1): max(float(L_sph1(seg[i])), -float(res.fun)),
        ("spherical", 2): _max_on_polygon(lambda m: spherical_likelihood_algebraic(m, case), region),
    }
    out = {}
    for param in ("cartesian", "spherical"):
        a1, a2 = aic(1, ml[(param, 1)]), aic(2, ml[(param, 2)])
        out[param] = {
            "max_likelihood": {1: ml[(param, 1)], 2: ml[(param, 2)]},
            "aic": {1: a1, 2: a2},
            "preferred_k": 1 if a1 < a2 else 2,
        }
    return out


def linear_models(case: Optional[TransdimCase] = None) -> dict:
    """Forward models for k = 1 and k = 2."""
    case = case or TransdimCase()
    return {1: linear_forward(case.G1, "G1"), 2: linear_forward(case.G, "G2")}
