"""Graph-restricted posteriors and conditionals on lower-dimensional subspaces.

``graph_posterior`` evaluates the joint prior on the graph ``d = g(m)``; it
is consistent under full-dimensional reparameterization. The conditionals
built by ``restrict_to_affine`` and ``tube_limit_conditional`` are not: their
shape depends on the coordinates in which the subspace is described or
thickened, which is exactly what the tomography example exposes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import coords
from .coords import Box, Diffeo
from .density import Density, pushforward, uniform_box
from .errors import DimensionMismatch, EmptySupport, NoConvergence
from .quad import gauss_box, integrate, QuadratureSpec

__all__ = [
    "ForwardModel",
    "linear_forward",
    "compose_forward",
    "graph_posterior",
    "line_box_interval",
    "restrict_to_affine",
    "tube_limit_conditional",
    "disagreement_score",
    "TomographySetup",
    "tomography_setup",
    "tomography_conditionals",
]


@dataclass(frozen=True)
class ForwardModel:
    """Map from model space (``m_dim``) to data space (``d_dim``)."""

    m_dim: int
    d_dim: int
    map: Callable[[np.ndarray], np.ndarray]
    linear_matrix: Optional[np.ndarray] = None
    name: str = "forward"

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        if m.shape[-1:] != (self.m_dim,):
            raise DimensionMismatch(f"{self.name} expects m_dim {self.m_dim}, got shape {m.shape}")
        return self.map(m)


def linear_forward(G, name: str = "linear") -> ForwardModel:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Gc = G.copy()
    Gc.flags.writeable = False
    return ForwardModel(G.shape[1], G.shape[0], lambda m: np.asarray(m, dtype=float) @ Gc.T, Gc, name)


def compose_forward(t: Diffeo, fm: ForwardModel, name: Optional[str] = None) -> ForwardModel:
    """Forward model expressed in transformed data coordinates, ``t ∘ g``."""
    if t.dim != fm.d_dim:
        raise DimensionMismatch("data diffeo and forward model disagree on data dim")
    return ForwardModel(fm.m_dim, fm.d_dim, lambda m: t.forward_map(fm.map(m)), None, name or f"{t.name}∘{fm.name}")


def graph_posterior(prior_d: Density, prior_m: Density, fm: ForwardModel) -> Density:
    """Unnormalized ``q(m) = prior_d(g(m)) · prior_m(m)`` over model space."""
    if prior_d.dim != fm.d_dim or prior_m.dim != fm.m_dim:
        raise DimensionMismatch(
            f"prior_d dim {prior_d.dim}, prior_m dim {prior_m.dim}, forward {fm.m_dim}->{fm.d_dim}"
        )

    def q(m):
        m = np.asarray(m, dtype=float)
        with np.errstate(all="ignore"):
            d = fm.map(m)
        ok = np.all(np.isfinite(d), axis=-1)
        d = np.where(ok[..., None], d, prior_d.support.lo - 1.0)
        return np.where(ok, prior_d.pdf(d), 0.0) * prior_m.pdf(m)

    return Density(prior_m.dim, prior_m.support, q, None, f"graph({prior_d.name},{prior_m.name})")


def line_box_interval(point, direction, box: Box) -> tuple[float, float]:
    """Parameter interval where ``point + t·direction`` lies in ``box``."""
    p = np.asarray(point, dtype=float)
    u = np.asarray(direction, dtype=float)
    lo, hi = -np.inf, np.inf
    for i in range(p.size):
        if u[i] == 0:
            if not (box.lo[i] <= p[i] <= box.hi[i]):
                raise EmptySupport("line misses the support box")
            continue
        a = (box.lo[i] - p[i]) / u[i]
        b = (box.hi[i] - p[i]) / u[i]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if not lo < hi:
        raise EmptySupport("line misses the support box")
    return float(lo), float(hi)


def _positive_interval(f: Callable, lo: float, hi: float, n: int = 4001) -> tuple[float, float]:
    # Bracket the region where f > 0, then refine both ends by bisection.
    t = np.linspace(lo, hi, n)
    pos = np.asarray(f(t[:, None])) > 0
    if not pos.any():
        raise EmptySupport("subspace misses the support of the density")
    i0, i1 = np.flatnonzero(pos)[[0, -1]]

    def edge(a, b, inside_at_b):
        for _ in range(60):
            mid = 0.5 * (a + b)
            if (f(np.array([[mid]]))[0] > 0) == inside_at_b:
                b = mid
            else:
                a = mid
        return b

    left = t[0] if i0 == 0 else edge(t[i0 - 1], t[i0], True)
    right = t[-1] if i1 == n - 1 else edge(t[i1 + 1], t[i1], True)
    return float(left), float(right)


def restrict_to_affine(p: Density, point, direction, name: Optional[str] = None) -> Density:
    """Naive conditional of ``p`` along the line ``point + t·direction``.

    The result is a 1D density in ``t``: ``p`` evaluated on the line and
    renormalized in ``t``. It depends on the coordinates ``p`` is written
    in; that dependence is the object of study, not a defect.
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if point.size != p.dim or direction.size != p.dim:
        raise DimensionMismatch("constraint and density dims differ")
    if not np.any(direction):
        raise ValueError("direction must be nonzero")
    t_lo, t_hi = line_box_interval(point, direction, p.support)

    def f(t):
        t = np.asarray(t, dtype=float)[..., 0]
        return p.unnorm(point + t[..., None] * direction)

    a, b = _positive_interval(f, t_lo, t_hi)
    if not a < b:
        raise EmptySupport("subspace meets the support in a single point")
    support = Box([a], [b])
    res = integrate(f, support, QuadratureSpec("adaptive_subdivision", rel_tol=1e-12, abs_tol=1e-300, max_evals=200_000))
    return Density(1, support, f, float(res.value), name or f"restrict({p.name})")


def _richardson(values: np.ndarray, eps: np.ndarray, power: int) -> np.ndarray:
    # Two-point extrapolation to eps -> 0 assuming error ∝ eps**power.
    h1, h2 = eps[0] ** power, eps[1] ** power
    return values[1] + (values[1] - values[0]) * h2 / (h1 - h2)


def tube_limit_conditional(
    p: Density,
    point,
    direction,
    t_range: tuple[float, float],
    chart: Optional[Diffeo] = None,
    eps_sequence: Sequence[float] = (0.1, 0.05, 0.025),
    n_samples: int = 4096,
    seed: int = 0,
    power: int = 2,
    cauchy_tol: float = 1e-4,
    n_nodes: int = 64,
) -> Density:
    """Conditional along a line obtained as the limit of thickened tubes.

    The density is moved to ``chart`` coordinates, where the line becomes the
    curve ``c(t) = chart(point + t·direction)``. The tube of Euclidean
    half-width ε around ``c`` (in chart coordinates) is integrated per unit
    ``t`` by Monte Carlo over the normal offset, and ε → 0 by Richardson
    extrapolation. Samples are antithetic and shared across ε and ``t``, so
    odd powers of ε cancel and the default extrapolation is in ε²
    (``power=2``); ``power=1`` gives the plain linear rule.

    Only 2D densities (a curve of codimension 1) are supported. ``t_range``
    must keep every tube inside the region where ``p`` is smooth.
    """
    if p.dim != 2:
        raise DimensionMismatch("tube_limit_conditional handles 2D densities")
    eps = np.asarray(eps_sequence, dtype=float)
    if eps.size < 3 or np.any(np.diff(eps) >= 0) or np.any(eps <= 0):
        raise ValueError("eps_sequence must have at least 3 strictly decreasing positive values")
    chart = chart or coords.identity(2)
    q = pushforward(p, chart)
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    rng = np.random.default_rng(seed)
    half = rng.uniform(-1.0, 1.0, n_samples // 2)
    u = np.concatenate([half, -half])

    def curve(t):
        return chart.forward_map(point + np.asarray(t)[..., None] * direction)

    def tangent(t):
        h = 1e-6 * (1.0 + np.abs(t))
        return (curve(t + h) - curve(t - h)) / (2 * h)[..., None]

    def normal(t):
        c = tangent(t)
        n = np.stack([-c[..., 1], c[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def tube_mass(t, e):
        # Mean over the normal offset w = e·u of q(c + w n) |det ∂y/∂(t, w)|.
        c = curve(t)
        n = normal(t)
        h = 1e-6 * (1.0 + np.abs(t))
        dn = (normal(t + h) - normal(t - h)) / (2 * h)[..., None]
        ct = tangent(t)
        w = e * u
        y = c[:, None, :] + w[None, :, None] * n[:, None, :]
        dy_dt = ct[:, None, :] + w[None, :, None] * dn[:, None, :]
        det = np.abs(dy_dt[..., 0] * n[:, None, 1] - dy_dt[..., 1] * n[:, None, 0])
        return np.mean(q.unnorm(y) * det, axis=1)

    def f(tt):
        t = np.asarray(tt, dtype=float)[..., 0]
        shape = t.shape
        t = t.ravel()
        vals = np.stack([tube_mass(t, e) for e in eps])
        a = _richardson(vals[:2], eps[:2], power)
        b = _richardson(vals[-2:], eps[-2:], power)
        scale = np.maximum(np.abs(b), 1e-300)
        if np.any(np.abs(a - b) > cauchy_tol * scale):
            worst = float(np.max(np.abs(a - b) / scale))
            raise NoConvergence(f"tube extrapolants differ by {worst:.2e} (relative)")
        return b.reshape(shape)

    support = Box([t_range[0]], [t_range[1]])
    nc = gauss_box(f, support, n_nodes)
    return Density(1, support, f, float(nc), f"tube_limit({p.name},{chart.name})")


def disagreement_score(c1: Density, c2: Density, grid) -> float:
    """``max |log(c1/c2)|`` over grid points where both are positive.

    Both densities are used in normalized form; 0 means they agree.
    """
    g = np.asarray(grid, dtype=float).reshape(-1, 1)
    a = c1.pdf(g) if c1.is_normalized else c1.unnorm(g) / integrate(c1.unnorm, c1.support).value
    b = c2.pdf(g) if c2.is_normalized else c2.unnorm(g) / integrate(c2.unnorm, c2.support).value
    both = (a > 0) & (b > 0)
    if not both.any():
        return float("inf")
    return float(np.max(np.abs(np.log(a[both] / b[both]))))


# ---------------------------------------------------------- tomography case


@dataclass(frozen=True)
class TomographySetup:
    """Two blocks of unit width; ray 1 crosses block 1, ray 2 crosses both.

    Velocity forward map ``d = (1/v1, 1/v1 + 1/v2)`` is linear in slowness.
    """

    d_obs: tuple = (0.7, 1.4)
    half_width: tuple = (0.2, 0.4)
    v_lo: float = 1.0
    v_hi: float = 2.0

    @property
    def data_box(self) -> Box:
        return Box.cube(self.d_obs, self.half_width)

    @property
    def model_box(self) -> Box:
        return Box([self.v_lo] * 2, [self.v_hi] * 2)

    def feasible_diagonal(self) -> tuple[float, float]:
        """Interval of ``v1`` on ``v2 = v1`` where the posterior is positive."""
        d, h = np.asarray(self.d_obs), np.asarray(self.half_width)
        # 1/v in [d1-h1, d1+h1] and 2/v in [d2-h2, d2+h2].
        s_lo = max((d[0] - h[0]), (d[1] - h[1]) / 2, 1 / self.v_hi)
        s_hi = min((d[0] + h[0]), (d[1] + h[1]) / 2, 1 / self.v_lo)
        return 1.0 / s_hi, 1.0 / s_lo


def tomography_setup() -> TomographySetup:
    return TomographySetup()


def _g_v(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        s = 1.0 / v
    return np.stack([s[..., 0], s[..., 0] + s[..., 1]], axis=-1)


def tomography_conditionals(setup: Optional[TomographySetup] = None) -> dict:
    """Velocity-route and slowness-route conditionals on ``v2 = v1``.

    Returns a dict with the two full posteriors and both conditionals as
    densities over ``v1``.
    """
    setup = setup or tomography_setup()
    prior_d = uniform_box(setup.data_box, "p_d")
    prior_v = uniform_box(setup.model_box, "p_v")
    g_v = ForwardModel(2, 2, _g_v, None, "g_v")
    post_v = graph_posterior(prior_d, prior_v, g_v)

    h = coords.reciprocal(2)
    prior_s = pushforward(prior_v, h)
    g_s = linear_forward([[1.0, 0.0], [1.0, 1.0]], "g_s")
    post_s = graph_posterior(prior_d, prior_s, g_s)

    cond_v = restrict_to_affine(post_v, [0.0, 0.0], [1.0, 1.0], "cond_v")
    cond_s = restrict_to_affine(post_s, [0.0, 0.0], [1.0, 1.0], "cond_s")
    cond_s_in_v = pushforward(cond_s, coords.reciprocal(1))
    return {
        "posterior_v": post_v,
        "posterior_s": post_s,
        "cond_velocity_route": cond_v,
        "cond_slowness_route": cond_s,
        "cond_slowness_route_in_v": cond_s_in_v,
        "feasible_v1": setup.feasible_diagonal(),
    }
