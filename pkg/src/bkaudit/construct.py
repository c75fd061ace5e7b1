"""Non-uniqueness constructions: tube densities with a prescribed value on a
submanifold, and the triangular (Knothe-Rosenblatt) transport between two
densities on a box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import coords
from .condition import ForwardModel, compose_forward, linear_forward
from .coords import Box, Diffeo
from .density import Density, pushforward, tube, uniform_box
from .errors import CDFInversionFailure, NoConvergence, NonPositiveDensity
from .quad import QuadratureSpec, integrate, integrate_polygon

__all__ = [
    "TubeSpec",
    "sigma_for_value",
    "sigma_for_evidence",
    "manifold_volume",
    "manifold_integral",
    "normalized_tube_for_evidence",
    "TriangularMap",
    "triangular_transport",
    "AnyEvidenceResult",
    "any_evidence_reparameterization",
    "reparameterized_evidence",
]


# ------------------------------------------------------------------- tubes


def sigma_for_value(n: int, k: int, A: float, c: float) -> float:
    """σ for which the tube's on-manifold value ``A/√((2π)^(n−k) σ^(2(n−k)))`` equals ``c``."""
    if A <= 0 or c <= 0:
        raise ValueError("A and c must be positive")
    if not 0 < k < n:
        raise ValueError("need 0 < k < n")
    m = n - k
    return float(((A / c) ** 2 / (2 * np.pi) ** m) ** (1.0 / (2 * m)))


def sigma_for_evidence(n: int, k: int, A: float, V: float, E: float) -> float:
    """σ for which the naive submanifold integral ``c·V`` equals ``E``."""
    if V <= 0 or E <= 0:
        raise ValueError("V and E must be positive")
    return sigma_for_value(n, k, A, E / V)


@dataclass(frozen=True)
class TubeSpec:
    """Gaussian band of width σ around the graph ``x2 = g(x1)``."""

    n: int
    k: int
    g: Callable
    sigma: float
    amplitude: float = 1.0
    box: Optional[Box] = None

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ValueError("need 0 < k < n")
        if self.sigma <= 0 or self.amplitude <= 0:
            raise ValueError("sigma and amplitude must be positive")

    @property
    def on_manifold_value(self) -> float:
        m = self.n - self.k
        return self.amplitude / np.sqrt((2 * np.pi) ** m * self.sigma ** (2 * m))

    def density(self) -> Density:
        g = self.g.map if isinstance(self.g, ForwardModel) else self.g
        return tube(g, self.n, self.k, self.sigma, self.amplitude, self.box)


def _graph_points(g: Callable, x1: np.ndarray) -> np.ndarray:
    x2 = np.asarray(g(x1), dtype=float).reshape(x1.shape[0], -1)
    return np.concatenate([x1, x2], axis=-1)


def _surface_element(g: Callable, x1: np.ndarray) -> np.ndarray:
    """``√det(I + JᵀJ)`` of the graph parameterization at each row of ``x1``."""
    out = np.empty(x1.shape[0])
    for i, p in enumerate(x1):
        J = coords.fd_jacobian(lambda z: np.asarray(g(z[None, :]), dtype=float).reshape(-1), p)
        out[i] = np.sqrt(np.linalg.det(np.eye(J.shape[1]) + J.T @ J))
    return out


def manifold_volume(g: Callable, base: Box, box: Optional[Box] = None, measure: str = "surface", n: int = 48) -> float:
    """Volume of the graph of ``g`` over ``base`` that lies inside ``box``.

    ``measure="parameter"`` counts base volume only; ``"surface"`` includes
    the graph's surface element.
    """
    return manifold_integral(lambda x: np.ones(x.shape[0]), g, base, box, measure, n)


def manifold_integral(
    f: Callable, g: Callable, base: Box, box: Optional[Box] = None, measure: str = "surface", n: int = 48
) -> float:
    """``∫ f(x1, g(x1)) dS`` over the part of the graph inside ``box``."""
    from .quad import gauss_box

    if measure not in ("surface", "parameter"):
        raise ValueError("measure must be 'surface' or 'parameter'")

    def integrand(x1):
        x1 = np.atleast_2d(x1)
        pts = _graph_points(g, x1)
        val = np.asarray(f(pts), dtype=float)
        if box is not None:
            val = np.where(box.contains(pts), val, 0.0)
        if measure == "surface":
            val = val * _surface_element(g, x1)
        return val

    return gauss_box(integrand, base, n)


def normalized_tube_for_evidence(
    n: int,
    k: int,
    g: Callable,
    base: Box,
    E: float,
    box: Optional[Box] = None,
    measure: str = "surface",
    max_iter: int = 50,
    q: Optional[QuadratureSpec] = None,
) -> tuple[Density, float]:
    """Unit-mass tube whose naive integral over the graph of ``g`` is ``E``.

    The amplitude is the normalizer ``A(σ) = 1/∫ tube_σ``, which depends on
    σ through truncation at the box boundary; σ and ``A`` are found by
    fixed-point iteration on ``σ = sigma_for_evidence(n, k, A(σ), V, E)``.
    Returns the normalized density and σ.
    """
    box = box or Box(np.zeros(n), np.ones(n))
    q = q or QuadratureSpec(rel_tol=1e-8)
    V = manifold_volume(g, base, box, measure)
    A = 1.0 / V
    sigma = sigma_for_evidence(n, k, A, V, E)
    for _ in range(max_iter):
        mass = integrate(tube(g, n, k, sigma, 1.0, box).unnorm, box, q).value
        A_new = 1.0 / mass
        sigma_new = sigma_for_evidence(n, k, A_new, V, E)
        if abs(sigma_new - sigma) <= 1e-12 * sigma:
            sigma, A = sigma_new, A_new
            break
        sigma, A = sigma_new, A_new
    else:
        raise NoConvergence("tube normalization did not reach a fixed point")
    p = tube(g, n, k, sigma, A, box)
    mass = integrate(p.unnorm, box, q).value
    from dataclasses import replace

    return replace(p, norm_const=mass), sigma


# --------------------------------------------------------------- transport


def _interp_rows(H: np.ndarray, lead: np.ndarray, lo: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``H`` in its leading axes.

    ``H`` has shape ``(N,)*(j+1)``; ``lead`` has shape ``(P, j)``. Returns
    the ``(P, N)`` profiles along the last axis.
    """
    P, j = lead.shape
    N = H.shape[0]
    if j == 0:
        return np.broadcast_to(H, (P, N)).copy()
    s = (lead - lo[:j]) / step[:j]
    i = np.clip(np.floor(s).astype(int), 0, N - 2)
    t = np.clip(s - i, 0.0, 1.0)
    out = np.zeros((P, N))
    for corner in itertools.product((0, 1), repeat=j):
        w = np.ones(P)
        idx = []
        for a, c in enumerate(corner):
            w = w * (t[:, a] if c else 1.0 - t[:, a])
            idx.append(i[:, a] + c)
        out += w[:, None] * H[tuple(idx)]
    return out


def _cdf_eval(h: np.ndarray, x: np.ndarray, lo: float, dx: float) -> np.ndarray:
    """Normalized CDF of piecewise-linear profiles ``h`` (P, N) at ``x`` (P,)."""
    N = h.shape[1]
    areas = 0.5 * dx * (h[:, 1:] + h[:, :-1])
    C = np.concatenate([np.zeros((h.shape[0], 1)), np.cumsum(areas, axis=1)], axis=1)
    s = (x - lo) / dx
    i = np.clip(np.floor(s).astype(int), 0, N - 2)
    t = np.clip(s - i, 0.0, 1.0)
    r = np.arange(h.shape[0])
    hi_, hj = h[r, i], h[r, i + 1]
    val = C[r, i] + dx * (hi_ * t + 0.5 * (hj - hi_) * t * t)
    return np.clip(val / C[:, -1], 0.0, 1.0)


def _cdf_invert(h: np.ndarray, u: np.ndarray, lo: float, dx: float, tol: float = 1e-10) -> np.ndarray:
    """Invert :func:`_cdf_eval` exactly per cell; bisection where the closed form fails."""
    P, N = h.shape
    areas = 0.5 * dx * (h[:, 1:] + h[:, :-1])
    C = np.concatenate([np.zeros((P, 1)), np.cumsum(areas, axis=1)], axis=1)
    Z = C[:, -1]
    if np.any(u < -tol) or np.any(u > 1 + tol):
        raise CDFInversionFailure("CDF level outside [0, 1]")
    r = np.clip(u, 0.0, 1.0) * Z
    i = np.clip(np.sum(C <= r[:, None], axis=1) - 1, 0, N - 2)
    rows = np.arange(P)
    rem = np.maximum(r - C[rows, i], 0.0)
    hi_, hj = h[rows, i], h[rows, i + 1]
    a = 0.5 * dx * (hj - hi_)
    b = dx * hi_
    disc = np.maximum(b * b + 4 * a * rem, 0.0)
    den = b + np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(den > 0, 2 * rem / den, np.nan)
    bad = ~np.isfinite(t)
    if np.any(bad):
        t[bad] = _bisect_cell(hi_[bad], hj[bad], rem[bad], dx, tol)
    return lo + (i + np.clip(t, 0.0, 1.0)) * dx


def _bisect_cell(hi_, hj, rem, dx, tol):
    lo = np.zeros_like(rem)
    hi = np.ones_like(rem)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        val = dx * (hi_ * mid + 0.5 * (hj - hi_) * mid * mid)
        lo = np.where(val < rem, mid, lo)
        hi = np.where(val < rem, hi, mid)
    t = 0.5 * (lo + hi)
    resid = np.abs(dx * (hi_ * t + 0.5 * (hj - hi_) * t * t) - rem)
    if np.any(resid > tol * max(1.0, float(np.max(np.abs(rem), initial=0.0)))):
        raise CDFInversionFailure("bisection did not reach the CDF level")
    return t


class _Rosenblatt:
    """Knothe-Rosenblatt map of the multilinear interpolant of a density grid.

    ``forward`` sends the density to the uniform law on the unit cube;
    ``inverse`` sends the uniform law back. Marginals of the leading
    coordinates are trapezoid sums, so the map is exact for the interpolant.
    """

    def __init__(self, p: Density, n_grid: int):
        box = p.support
        if not box.is_finite:
            raise ValueError("transport needs a finite support box")
        self.dim = p.dim
        self.lo = box.lo.astype(float)
        self.hi = box.hi.astype(float)
        self.N = n_grid + 1
        self.step = (self.hi - self.lo) / n_grid
        axes = [np.linspace(l, h, self.N) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.asarray(p.unnorm(pts), dtype=float).reshape((self.N,) * self.dim)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise NonPositiveDensity(f"{p.name} is negative or not finite on the transport grid")
        interior = vals[(slice(1, -1),) * self.dim]
        if np.any(interior <= 0):
            raise NonPositiveDensity(f"{p.name} vanishes inside its support")
        self.H = [vals]
        for j in range(self.dim - 1, 0, -1):
            prev = self.H[0]
            self.H.insert(0, np.trapezoid(prev, dx=self.step[j], axis=-1))
        self.Z = float(np.trapezoid(self.H[0], dx=self.step[0]))

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        u = np.empty_like(x)
        for j in range(self.dim):
            h = _interp_rows(self.H[j], x[:, :j], self.lo, self.step)
            u[:, j] = _cdf_eval(h, x[:, j], self.lo[j], self.step[j])
        return u

    def inverse(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        x = np.empty_like(u)
        for j in range(self.dim):
            h = _interp_rows(self.H[j], x[:, :j], self.lo, self.step)
            x[:, j] = _cdf_invert(h, u[:, j], self.lo[j], self.step[j])
        return x

    def density(self, x: np.ndarray) -> np.ndarray:
        """Normalized multilinear interpolant at the rows of ``x``."""
        x = np.atleast_2d(x)
        prof = _interp_rows(self.H[-1], x[:, :-1], self.lo, self.step)
        j = self.dim - 1
        s = (x[:, j] - self.lo[j]) / self.step[j]
        i = np.clip(np.floor(s).astype(int), 0, self.N - 2)
        t = np.clip(s - i, 0.0, 1.0)
        r = np.arange(x.shape[0])
        return ((1 - t) * prof[r, i] + t * prof[r, i + 1]) / self.Z


@dataclass(frozen=True)
class TriangularMap:
    """``T = G⁻¹ ∘ F`` with ``F``, ``G`` the Rosenblatt maps of ``f`` and ``g``."""

    source: _Rosenblatt = field(repr=False)
    target: _Rosenblatt = field(repr=False)
    diffeo: Diffeo

    def __call__(self, x):
        return self.diffeo.forward_map(x)


def triangular_transport(f: Density, g: Density, n_grid: int = 256) -> Diffeo:
    """Triangular map carrying ``f`` to ``g`` on their support boxes.

    Both densities are tabulated on a tensor grid with ``n_grid`` cells per
    axis and replaced by their multilinear interpolants. The Jacobian
    determinant is the ratio of the interpolated densities, so pushforward
    checks against ``g`` are not circular.
    """
    return triangular_map(f, g, n_grid).diffeo


def triangular_map(f: Density, g: Density, n_grid: int = 256) -> TriangularMap:
    if f.dim != g.dim:
        raise ValueError("f and g must have the same dimension")
    if f.dim > 3:
        raise ValueError("transport is built for dimension <= 3")
    F = _Rosenblatt(f, n_grid)
    G = _Rosenblatt(g, n_grid)
    shape_out = lambda x, y: y.reshape(np.shape(x))  # noqa: E731

    def fwd(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, f.dim)
        return shape_out(x, G.inverse(F.forward(flat)))

    def inv(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, g.dim)
        return shape_out(y, F.inverse(G.forward(flat)))

    def jac(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, f.dim)
        u = G.inverse(F.forward(flat))
        return (F.density(flat) / G.density(u)).reshape(x.shape[:-1])

    fbox, gbox = f.support, g.support

    def dom(x):
        return fbox.contains(np.asarray(x, dtype=float))

    def rng(y):
        return gbox.contains(np.asarray(y, dtype=float))

    d = Diffeo(f.dim, fwd, inv, f"transport({f.name}->{g.name})", jac, dom, rng, lambda b: gbox)
    return TriangularMap(F, G, d)


# ------------------------------------------------------- any evidence


@dataclass(frozen=True)
class AnyEvidenceResult:
    target: float
    evidence: float
    sigma: float
    iterations: int
    history: list
    reparam: Diffeo = field(repr=False)

    @property
    def rel_error(self) -> float:
        return abs(self.evidence / self.target - 1.0)


def _unit_cube_affine(data_box: Box, order: tuple[int, ...]) -> Diffeo:
    """Affine map of ``data_box`` onto the unit cube with axes reordered."""
    n = data_box.dim
    D = np.diag(1.0 / data_box.widths)
    Pm = np.eye(n)[list(order)]
    return coords.affine(Pm @ D, -(Pm @ D @ data_box.lo))


def reparameterized_evidence(
    prior_d: Density,
    fm: ForwardModel,
    t: Diffeo,
    region: np.ndarray,
    prior_m_density: float,
    support: Box,
    n: int = 24,
) -> float:
    """Evidence after the data reparameterization ``t``.

    The data prior is pushed forward through ``t`` and the forward model is
    composed with it; the integrand is integrated over ``region`` (the
    feasible polygon of the original problem, outside of which it vanishes)
    against a constant model prior density.
    """
    q = pushforward(prior_d, t, support)
    fm_t = compose_forward(t, fm)

    def f(m):
        return q.pdf(fm_t.map(m)) * prior_m_density

    return integrate_polygon(f, region, n=n)


def any_evidence_reparameterization(
    target: float,
    case=None,
    n_grid: int = 128,
    rtol: float = 5e-3,
    max_iter: int = 30,
) -> AnyEvidenceResult:
    """Data reparameterization giving the two-parameter model evidence ``target``.

    The data cube is mapped affinely onto the unit cube with the axes
    ordered so that the forward image ``x2 = 2 x1`` is a graph over the
    other two coordinates. A tube around that graph is the target of a
    triangular transport from the uniform density; its width is refined by
    a secant iteration on ``log E`` against ``log σ``.

    Transport from the uniform law places image points at the conditional
    quantile levels of the tube, so as σ grows the evidence decreases
    towards the value of the affine map alone. Targets at or below that
    value raise ``ValueError``.
    """
    from .transdim import TransdimCase, feasible_polygon_k2

    case = case or TransdimCase()
    region = feasible_polygon_k2(case)
    data_box = case.data_box
    order = (0, 2, 1)
    aff = _unit_cube_affine(data_box, order)
    unit = Box(np.zeros(3), np.ones(3))
    Gu = aff.forward_map(case.G.T).T - aff.forward_map(np.zeros(3))[:, None]
    slope = Gu[2] @ np.linalg.pinv(Gu[:1])
    off = float(aff.forward_map(np.zeros(3))[2] - slope[0] * aff.forward_map(np.zeros(3))[0])

    def ridge(b):
        b = np.asarray(b, dtype=float)
        return slope[0] * b[..., 0] + off

    prior_d = uniform_box(data_box)
    fm = linear_forward(case.G)
    pm = 1.0 / case.dm**2
    area = abs(float(np.dot(region[:, 0], np.roll(region[:, 1], -1)) - np.dot(region[:, 1], np.roll(region[:, 0], -1)))) / 2
    floor_value = reparameterized_evidence(prior_d, fm, aff, region, pm, unit)
    if not target > floor_value * (1 + rtol):
        raise ValueError(f"target {target} is at or below the reachable floor {floor_value:.6g}")

    def build(sigma):
        h = tube(ridge, 3, 2, sigma, 1.0, unit)
        peak = h.eval_unnorm(np.array([[0.0, 0.0, off]]))[0]
        floored = Density(3, unit, lambda x: h.eval_unnorm(x) + 1e-9 * peak, None, "tube+floor", "tube")
        T = triangular_transport(uniform_box(unit), floored, n_grid)
        t = coords.compose(T, aff)
        return t, reparameterized_evidence(prior_d, fm, t, region, pm, unit)

    V_ridge = manifold_volume(ridge, Box([0, 0], [1, 1]), unit, "parameter")
    s0 = sigma_for_evidence(3, 2, 1.0 / V_ridge, area * pm, target)
    history = []
    t0, e0 = build(s0)
    history.append((s0, e0))
    s1 = s0 * (e0 / target)
    t1, e1 = build(s1)
    history.append((s1, e1))
    for it in range(max_iter):
        if abs(e1 / target - 1) <= rtol:
            return AnyEvidenceResult(target, e1, s1, it + 2, history, t1)
        x0, x1 = np.log(s0), np.log(s1)
        y0, y1 = np.log(e0 / target), np.log(e1 / target)
        if y1 == y0:
            break
        x2 = x1 - y1 * (x1 - x0) / (y1 - y0)
        x2 = float(np.clip(x2, x1 - 2.0, x1 + 2.0))
        s0, e0 = s1, e1
        s1 = float(np.exp(x2))
        t1, e1 = build(s1)
        history.append((s1, e1))
    if abs(e1 / target - 1) <= rtol:
        return AnyEvidenceResult(target, e1, s1, len(history), history, t1)
    raise NoConvergence(f"secant iteration stalled at evidence {e1:.6g} for target {target}")
