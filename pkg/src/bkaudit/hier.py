"""Hierarchical counterexamples: σ-evidence profiles, the decision flip and
the acausal hyperparameter posteriors.

The linear problem is ``d = (a m2, b m1, c m1)`` with a uniform data cube of
half-width σ around ``d_obs`` and a uniform model prior of edge ``Δm``.
The three cases analyse the same data with the first datum kept as is
(``cart``), mapped through ``tan`` (``tan``) or squared (``square``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize

from . import coords
from .coords import Box
from .density import Density, pushforward, uniform_box
from .errors import NoMaximumInBracket, SingularEvidence
from .quad import integrate_indicator_polytope

__all__ = [
    "HierCase",
    "SigmaOptimum",
    "CASE_IDS",
    "evidence_profile",
    "evidence_profile_quadrature",
    "optimize_sigma",
    "case1_sigma_closed_form",
    "posterior_support",
    "parallelogram",
    "parallelogram_area",
    "posterior_tail",
    "posterior_m2_normalizer",
    "likelihood",
    "likelihood_compositional",
    "data_transform",
    "discrete_hyper_marginals",
    "discrete_hyper_marginals_quadrature",
    "gaussian_hyper_posterior",
    "gaussian_hyper_argmax",
]

CASE_IDS = ("cart", "tan", "square")


@dataclass(frozen=True)
class HierCase:
    case_id: str
    d_obs: tuple = (1.5, 1.1, 0.9)
    a: float = 1.0
    b: float = 1.0
    c: float = 0.5
    dm: float = 1.0

    def __post_init__(self):
        if self.case_id not in CASE_IDS:
            raise ValueError(f"case_id must be one of {CASE_IDS}, got {self.case_id!r}")
        if len(self.d_obs) != 3:
            raise ValueError("d_obs must have three components")
        if min(self.a, self.b, self.c, self.dm) <= 0:
            raise ValueError("a, b, c and dm must be positive")

    @property
    def G(self) -> np.ndarray:
        return np.array([[0.0, self.a], [self.b, 0.0], [self.c, 0.0]])

    @property
    def sigma_min(self) -> float:
        """Smallest σ for which the feasible parallelogram is non-empty."""
        d1, d2, d3 = self.d_obs
        return (self.b * d3 - self.c * d2) / (self.c + self.b)

    @property
    def singular_sigma(self) -> Optional[float]:
        """σ at which the evidence diverges (Case 3 only)."""
        return float(self.d_obs[0]) if self.case_id == "square" else None


class SigmaOptimum(NamedTuple):
    sigma: float
    flag: str


def _m1_bounds(case: HierCase, s):
    """Intersection of the ``d2`` and ``d3`` slabs in ``m1``; accepts complex σ.

    The active constraint is picked on the real part so the complex-step
    derivative follows the branch in force.
    """
    d1, d2, d3 = case.d_obs
    lo = ((d2 - s) / case.b, (d3 - s) / case.c)
    hi = ((d2 + s) / case.b, (d3 + s) / case.c)
    return max(lo, key=np.real), min(hi, key=np.real)


def _m1_width(case: HierCase, s):
    lo, hi = _m1_bounds(case, s)
    return hi - lo


def _profile_expr(case: HierCase, s):
    """Closed-form evidence without the feasibility gate; accepts complex σ."""
    d1 = case.d_obs[0]
    a = case.a
    w1 = _m1_width(case, s)
    if case.case_id == "cart":
        m2_mass = 2 * s / a
        return w1 * m2_mass / (8 * s**3 * case.dm**2)
    if case.case_id == "tan":
        m2_mass = (np.cos(2 * d1) * np.sin(s) * np.cos(s) + s) / a
        return w1 * m2_mass / (8 * s**3 * case.dm**2)
    m2_mass = np.log((d1 + s) / a) - np.log((d1 - s) / a)
    return w1 * m2_mass / (16 * a * s**3 * case.dm**2)


def evidence_profile(case: HierCase, sigma: float) -> float:
    """Evidence ``p(d_obs | σ)`` from the closed form of each case.

    Below the feasibility threshold the parallelogram is empty and the value
    is 0. Case ``square`` raises :class:`SingularEvidence` for σ ≥ d1.
    """
    s = float(sigma)
    if not s > 0:
        raise ValueError("sigma must be positive")
    if case.singular_sigma is not None and s >= case.singular_sigma:
        raise SingularEvidence(f"evidence diverges for sigma >= {case.singular_sigma}")
    if _m1_width(case, s) <= 0:
        return 0.0
    return float(_profile_expr(case, s))


def posterior_support(case: HierCase, sigma: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """``((m1_lo, m1_hi), (m2_lo, m2_hi))`` of the feasible parallelogram."""
    d1 = case.d_obs[0]
    s = float(sigma)
    lo, hi = _m1_bounds(case, s)
    return (float(lo), float(hi)), ((d1 - s) / case.a, (d1 + s) / case.a)


def parallelogram(case: HierCase, sigma: float) -> np.ndarray:
    (x0, x1), (y0, y1) = posterior_support(case, sigma)
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def likelihood(case: HierCase, sigma: float):
    """Closed-form likelihood ``L_i(m)`` of the case, zero off the parallelogram."""
    (x0, x1), (y0, y1) = posterior_support(case, sigma)
    s, a = float(sigma), case.a

    def L(m):
        m = np.asarray(m, dtype=float)
        m1, m2 = m[..., 0], m[..., 1]
        inside = (m1 >= x0) & (m1 <= x1) & (m2 >= y0) & (m2 <= y1)
        if case.case_id == "cart":
            v = np.full(m1.shape, 1.0 / (8 * s**3))
        elif case.case_id == "tan":
            v = np.cos(a * m2) ** 2 / (8 * s**3)
        else:
            with np.errstate(divide="ignore"):
                v = 1.0 / (16 * s**3 * a * m2)
        return np.where(inside, v, 0.0)

    return L


def data_transform(case: HierCase) -> coords.Diffeo:
    """The data-space diffeo defining the case."""
    if case.case_id == "cart":
        return coords.identity(3)
    if case.case_id == "tan":
        return coords.tan_axis0(3, center=float(case.d_obs[0]))
    return coords.square_axis0(3)


def likelihood_compositional(case: HierCase, sigma: float):
    """Likelihood built from the general machinery.

    The uniform data cube is pushed forward through the case transform and
    evaluated on the transformed forward graph ``t(G m)``.
    """
    s = float(sigma)
    pd = uniform_box(Box.cube(case.d_obs, s))
    t = data_transform(case)
    support = None
    if case.case_id == "tan":
        d = np.asarray(case.d_obs, dtype=float)
        support = Box([-np.inf, d[1] - s, d[2] - s], [np.inf, d[1] + s, d[2] + s])
    q: Density = pushforward(pd, t, support)
    G = case.G

    def L(m):
        m = np.asarray(m, dtype=float)
        y = t.forward_map(m @ G.T)
        return q.pdf(y)

    return L


def evidence_profile_quadrature(case: HierCase, sigma: float, rtol: float = 1e-11) -> float:
    """Oracle: integrate ``L_i · 1/Δm²`` over the parallelogram numerically."""
    (x0, x1), (y0, y1) = posterior_support(case, sigma)
    if x1 <= x0:
        return 0.0
    L = likelihood(case, sigma)

    def f(m2, m1):
        return float(L(np.array([m1, m2])))

    val, _ = sp_integrate.dblquad(f, x0, x1, y0, y1, epsabs=0.0, epsrel=rtol)
    return val / case.dm**2


def case1_sigma_closed_form(case: HierCase) -> float:
    """``2(b d3 − c d2)/(b + c)``, the stationary point of the Case 1 profile."""
    d1, d2, d3 = case.d_obs
    return 2 * (case.b * d3 - case.c * d2) / (case.b + case.c)


def _dprofile(case: HierCase, s: float) -> float:
    h = 1e-20
    return float(np.imag(_profile_expr(case, complex(s, h))) / h)


def optimize_sigma(case: HierCase, bracket: tuple[float, float] = (0.05, 3.0), n_grid: int = 2000) -> SigmaOptimum:
    """Evidence-maximizing σ inside ``bracket``.

    A grid scan locates the best cell; bounded Brent refines it and a root
    of the complex-step derivative polishes it to machine precision. When
    the bracket contains a singularity of the profile the supremum is
    infinite and the singular σ is reported with ``boundary_singular``.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    sing = case.singular_sigma
    if sing is not None and lo < sing <= hi:
        return SigmaOptimum(sing, "boundary_singular")
    lo = max(lo, case.sigma_min)
    if lo >= hi:
        raise NoMaximumInBracket("bracket lies below the feasibility threshold")
    s = np.linspace(lo, hi, n_grid)
    E = np.array([evidence_profile(case, x) for x in s])
    i = int(np.argmax(E))
    if i == 0 or i == n_grid - 1 or E[i] <= 0:
        raise NoMaximumInBracket(f"profile maximum sits on the bracket edge sigma={s[i]:.6g}")
    a, b = s[i - 1], s[i + 1]
    res = optimize.minimize_scalar(
        lambda x: -evidence_profile(case, x), bounds=(a, b), method="bounded", options={"xatol": 1e-12}
    )
    x = float(res.x)
    da, db = _dprofile(case, a), _dprofile(case, b)
    if da > 0 > db:
        x = optimize.brentq(lambda v: _dprofile(case, v), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return SigmaOptimum(x, "interior")


def _m2_antiderivative(case: HierCase, m2):
    a = case.a
    if case.case_id == "cart":
        return m2
    if case.case_id == "tan":
        return m2 / 2 + np.sin(2 * a * m2) / (4 * a)
    return np.log(m2)


def posterior_m2_normalizer(case: HierCase, sigma: float) -> float:
    """``K`` such that the m2-marginal of the posterior is ``K · w(m2)``.

    ``w`` is 1, ``cos²(a m2)`` or ``1/m2`` for the three cases.
    """
    _, (y0, y1) = posterior_support(case, sigma)
    return 1.0 / float(_m2_antiderivative(case, y1) - _m2_antiderivative(case, y0))


def posterior_tail(case: HierCase, sigma: float, threshold: float, axis: int = 1) -> float:
    """Posterior probability that ``m[axis]`` exceeds ``threshold``.

    The posterior factorizes on the parallelogram: ``m1`` is uniform in
    every case and ``m2`` carries the case weight.
    """
    if _m1_width(case, float(sigma)) <= 0:
        raise NoMaximumInBracket("posterior is empty below the feasibility threshold")
    (x0, x1), (y0, y1) = posterior_support(case, sigma)
    t = float(threshold)
    if axis == 0:
        if t >= x1:
            return 0.0
        if t <= x0:
            return 1.0
        return (x1 - t) / (x1 - x0)
    if axis != 1:
        raise ValueError("axis must be 0 or 1")
    if t >= y1:
        return 0.0
    if t <= y0:
        return 1.0
    F = lambda v: float(_m2_antiderivative(case, v))  # noqa: E731
    return (F(y1) - F(t)) / (F(y1) - F(y0))


def parallelogram_area(case: HierCase, sigma: float) -> float:
    """Area of the feasible parallelogram by the polytope path."""
    return integrate_indicator_polytope(1.0, parallelogram(case, sigma))


# -------------------------------------------------------------- acausality


def _discrete_cells(pi_lambda: float, pi_delta: float, k: float) -> np.ndarray:
    """Unnormalized ``p(λ, δ | d)``; rows λ ∈ {1, 2}, columns δ ∈ {1, 2}."""
    out = np.empty((2, 2))
    for i, lam in enumerate((1.0, 2.0)):
        for j, dl in enumerate((1.0, 2.0)):
            w = (pi_lambda if lam == 1 else 1 - pi_lambda) * (pi_delta if dl == 1 else 1 - pi_delta)
            prec = k**2 / lam**2 + 1 / dl**2
            out[i, j] = w / (2 * np.pi * lam * dl) * np.sqrt(2 * np.pi / prec)
    return out


def discrete_hyper_marginals(pi_lambda: float, pi_delta: float, k: float, h: float = 1e-5) -> dict:
    """Posterior marginals of the discrete hyperparameters λ and δ.

    Returns unnormalized and normalized tables for λ and δ, the joint table
    and central finite-difference derivatives with respect to ``k``.
    """
    for p in (pi_lambda, pi_delta):
        if not 0 <= p <= 1:
            raise ValueError("prior probabilities must lie in [0, 1]")

    def tables(kk):
        cells = _discrete_cells(pi_lambda, pi_delta, kk)
        lam = cells.sum(axis=1)
        dl = cells.sum(axis=0)
        z = cells.sum()
        return cells, lam, dl, lam / z, dl / z

    cells, lam, dl, lam_n, dl_n = tables(k)
    up, dn = tables(k + h), tables(k - h)
    return {
        "joint": cells,
        "lambda": lam,
        "delta": dl,
        "lambda_normalized": lam_n,
        "delta_normalized": dl_n,
        "evidence": float(cells.sum()),
        "dk_lambda_normalized": (up[3] - dn[3]) / (2 * h),
        "dk_delta_normalized": (up[4] - dn[4]) / (2 * h),
    }


def discrete_hyper_marginals_quadrature(pi_lambda: float, pi_delta: float, k: float) -> dict:
    """Oracle: integrate the joint posterior over ``m`` numerically per cell."""
    cells = np.empty((2, 2))
    for i, lam in enumerate((1.0, 2.0)):
        for j, dl in enumerate((1.0, 2.0)):
            w = (pi_lambda if lam == 1 else 1 - pi_lambda) * (pi_delta if dl == 1 else 1 - pi_delta)

            def f(m):
                return (
                    np.exp(-0.5 * (k * m) ** 2 / lam**2) / (lam * np.sqrt(2 * np.pi))
                    * np.exp(-0.5 * m**2 / dl**2) / (dl * np.sqrt(2 * np.pi))
                )

            val, _ = sp_integrate.quad(f, -np.inf, np.inf, epsabs=0.0, epsrel=1e-13)
            cells[i, j] = w * val
    z = cells.sum()
    return {
        "joint": cells,
        "lambda": cells.sum(axis=1),
        "delta": cells.sum(axis=0),
        "lambda_normalized": cells.sum(axis=1) / z,
        "delta_normalized": cells.sum(axis=0) / z,
    }


def gaussian_hyper_posterior(k: float, lam, delta, d_obs: float = 1.0, m0: float = 1.0):
    """Unnormalized joint posterior of the Gaussian prior widths ``(λ, δ)``.

    Hyperpriors are zero-mean Gaussians of unit width; ``d_obs`` and ``m0``
    enter through the exponent ``(k m0 − d_obs)²``, which for the default
    values is ``(k − 1)²``.
    """
    lam = np.asarray(lam, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if np.any(lam <= 0) or np.any(delta <= 0):
        raise ValueError("lambda and delta must be positive")
    pref = np.exp(-0.5 * (lam**2 + delta**2)) / (4 * np.pi**2 * lam * delta)
    width = np.sqrt(2 * np.pi / (k**2 / lam**2 + 1 / delta**2))
    expo = np.exp(-((k * m0 - d_obs) ** 2) / (2 * (lam**2 + delta**2 * k**2)))
    return pref * width * expo


def gaussian_hyper_argmax(k: float, lo: float = 0.05, hi: float = 3.0, step: float = 0.005) -> tuple[float, float]:
    """Grid argmax of :func:`gaussian_hyper_posterior` over ``[lo, hi]²``."""
    n = int(round((hi - lo) / step)) + 1
    g = np.linspace(lo, hi, n)
    L, D = np.meshgrid(g, g, indexing="ij")
    v = gaussian_hyper_posterior(k, L, D)
    i, j = np.unravel_index(int(np.argmax(v)), v.shape)
    return float(g[i]), float(g[j])
