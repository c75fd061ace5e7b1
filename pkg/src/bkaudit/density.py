"""Densities over axis-aligned boxes and their transformation rules."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .coords import Box, Diffeo
from .errors import DimensionMismatch, DomainError, NonIntegrable
from .quad import QuadratureSpec, integrate

__all__ = [
    "Density",
    "DensityValue",
    "DensityFamily",
    "evaluate",
    "pushforward",
    "product",
    "normalize",
    "uniform_box",
    "gaussian_diag",
    "lognormal_product",
    "tube",
    "from_family",
]

_GAUSS_TRUNC = 8.0


@dataclass(frozen=True)
class Density:
    """A density on ``support`` given by an unnormalized evaluator.

    ``eval_unnorm`` is vectorized over leading axes. Values outside the
    support are forced to zero (box boundaries count as inside).
    ``norm_const`` is the integral of ``eval_unnorm`` over the support.
    """

    dim: int
    support: Box
    eval_unnorm: Callable[[np.ndarray], np.ndarray]
    norm_const: Optional[float] = None
    name: str = "density"
    kind: str = "general"

    def __post_init__(self):
        if self.support.dim != self.dim:
            raise DimensionMismatch(f"support has dim {self.support.dim}, density has {self.dim}")
        if self.norm_const is not None and not (self.norm_const > 0 and np.isfinite(self.norm_const)):
            raise ValueError("norm_const must be positive and finite")

    def unnorm(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionMismatch(f"{self.name} expects dim {self.dim}, got shape {x.shape}")
        inside = self.support.contains(x)
        with np.errstate(all="ignore"):
            vals = np.asarray(self.eval_unnorm(x), dtype=float)
        vals = np.broadcast_to(vals, inside.shape)
        return np.where(inside, vals, 0.0)

    def pdf(self, x) -> np.ndarray:
        """Normalized value if ``norm_const`` is known, else unnormalized."""
        v = self.unnorm(x)
        return v / self.norm_const if self.norm_const is not None else v

    def __call__(self, x):
        return self.pdf(x)

    def log_pdf(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    @property
    def is_normalized(self) -> bool:
        return self.norm_const is not None


class DensityValue(NamedTuple):
    value: np.ndarray
    normalized: bool


def evaluate(p: Density, x) -> DensityValue:
    """Value at ``x`` plus a flag telling whether it is normalized."""
    return DensityValue(p.pdf(x), p.is_normalized)


# ------------------------------------------------------------------ families


def uniform_box(box: Box, name: str = "uniform_box") -> Density:
    return Density(box.dim, box, lambda x: np.ones(np.shape(x)[:-1]), box.volume, name, "uniform_box")


def gaussian_diag(mean: Sequence[float], std: Sequence[float], name: str = "gaussian_diag") -> Density:
    """Independent Gaussians truncated at ±8σ (dropped mass < 1e-15)."""
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    sd = np.broadcast_to(np.asarray(std, dtype=float), mu.shape).copy()
    if np.any(sd <= 0):
        raise ValueError("standard deviations must be positive")
    box = Box(mu - _GAUSS_TRUNC * sd, mu + _GAUSS_TRUNC * sd)

    def f(x):
        z = (np.asarray(x) - mu) / sd
        return np.exp(-0.5 * np.sum(z * z, axis=-1))

    return Density(mu.size, box, f, float(np.prod(np.sqrt(2 * np.pi) * sd)), name, "gaussian_diag")


def lognormal_product(mu: Sequence[float], sigma: Sequence[float], name: str = "lognormal_product") -> Density:
    """Product of log-normals; support ``exp(μ ± 8σ)`` per axis."""
    m = np.atleast_1d(np.asarray(mu, dtype=float))
    s = np.broadcast_to(np.asarray(sigma, dtype=float), m.shape).copy()
    if np.any(s <= 0):
        raise ValueError("sigma must be positive")
    box = Box(np.exp(m - _GAUSS_TRUNC * s), np.exp(m + _GAUSS_TRUNC * s))

    def f(x):
        x = np.asarray(x, dtype=float)
        z = (np.log(x) - m) / s
        return np.exp(-0.5 * np.sum(z * z, axis=-1)) / np.prod(x, axis=-1)

    return Density(m.size, box, f, float(np.prod(np.sqrt(2 * np.pi) * s)), name, "lognormal_product")


def tube(
    g: Callable[[np.ndarray], np.ndarray],
    n: int,
    k: int,
    sigma: float,
    amplitude: float = 1.0,
    box: Optional[Box] = None,
    name: str = "tube",
) -> Density:
    """Gaussian band around the graph ``x2 = g(x1)``.

    The first ``k`` coordinates are ``x1`` and the remaining ``n - k`` are
    ``x2``. On the graph the value is ``A / sqrt((2π)^(n-k) σ^(2(n-k)))``.
    ``amplitude`` is left as given; use :func:`normalize` for unit mass.
    """
    if not (0 < k < n):
        raise ValueError("tube needs 0 < k < n")
    if sigma <= 0 or amplitude <= 0:
        raise ValueError("sigma and amplitude must be positive")
    box = box or Box(np.zeros(n), np.ones(n))
    m = n - k
    peak = amplitude / np.sqrt((2 * np.pi) ** m * sigma ** (2 * m))

    def f(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., :k], x[..., k:]
        diff = x2 - np.asarray(g(x1), dtype=float).reshape(x2.shape)
        return peak * np.exp(-0.5 * np.sum(diff * diff, axis=-1) / sigma**2)

    return Density(n, box, f, None, name, "tube")


@dataclass(frozen=True)
class DensityFamily:
    """Declarative ``{kind, params}`` record used by scenario files."""

    kind: str
    params: dict

    KINDS = ("uniform_box", "gaussian_diag", "lognormal_product", "tube")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")


def from_family(fam: DensityFamily, forwards: Optional[dict] = None) -> Density:
    """Build a density from a family record.

    Tube records name their centre map in ``params["forward"]``; it is looked
    up in ``forwards`` (a mapping of name to callable).
    """
    p = fam.params
    if fam.kind == "uniform_box":
        return uniform_box(Box(p["lo"], p["hi"]))
    if fam.kind == "gaussian_diag":
        return gaussian_diag(p["mean"], p["std"])
    if fam.kind == "lognormal_product":
        return lognormal_product(p["mu"], p["sigma"])
    forwards = forwards or {}
    g = forwards[p["forward"]]
    box = Box(p["lo"], p["hi"]) if "lo" in p else None
    return tube(g, int(p["n"]), int(p["k"]), float(p["sigma"]), float(p.get("amplitude", 1.0)), box)


# --------------------------------------------------------------- operations


def pushforward(p: Density, t: Diffeo, support: Optional[Box] = None) -> Density:
    """Density of ``t(X)`` for ``X ~ p``: ``q(y) = p(t⁻¹y) |det J_{t⁻¹}(y)|``.

    The support is ``t.image_box(p.support)`` unless ``support`` is given;
    maps whose image of the support is not a box (or crosses a singularity)
    need an explicit support.
    """
    if t.dim != p.dim:
        raise DimensionMismatch(f"diffeo dim {t.dim} vs density dim {p.dim}")
    if support is None:
        if t.image_box is None:
            raise DomainError(f"{t.name} has no image-box rule; supply a support box")
        support = t.image_box(p.support)

    def q(y):
        y = np.asarray(y, dtype=float)
        ok = np.asarray(t.in_range(y), dtype=bool)
        x = t.inverse_map(y)
        ok &= np.all(np.isfinite(x), axis=-1)
        ok &= np.asarray(t.in_domain(np.where(ok[..., None], x, p.support.lo)), dtype=bool)
        x = np.where(ok[..., None], x, p.support.lo)
        if t.jac_det is not None:
            jac_inv = 1.0 / np.asarray(t.jac_det(x), dtype=float)
        else:
            jac_inv = _fd_inverse_det(t, y, ok)
        val = p.unnorm(x) * jac_inv
        return np.where(ok, val, 0.0)

    return Density(p.dim, support, q, p.norm_const, f"push({p.name},{t.name})")


def _fd_inverse_det(t: Diffeo, y: np.ndarray, ok: np.ndarray) -> np.ndarray:
    from .coords import fd_jacobian

    flat_y = y.reshape(-1, t.dim)
    flat_ok = ok.reshape(-1)
    out = np.zeros(flat_y.shape[0])
    for i in np.flatnonzero(flat_ok):
        out[i] = abs(np.linalg.det(fd_jacobian(t.inverse_map, flat_y[i])))
    return out.reshape(y.shape[:-1])


def product(ps: Sequence[Density], name: str = "product") -> Density:
    """Joint density on concatenated axis blocks."""
    if not ps:
        raise DimensionMismatch("product of an empty list")
    dims = [p.dim for p in ps]
    splits = np.cumsum(dims)[:-1]
    box = Box(np.concatenate([p.support.lo for p in ps]), np.concatenate([p.support.hi for p in ps]))

    def f(x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != sum(dims):
            raise DimensionMismatch("point dim does not match product blocks")
        parts = np.split(x, splits, axis=-1)
        out = np.ones(x.shape[:-1])
        for p, xi in zip(ps, parts):
            out = out * p.unnorm(xi)
        return out

    consts = [p.norm_const for p in ps]
    nc = float(np.prod(consts)) if all(c is not None for c in consts) else None
    kind = "uniform_box" if all(p.kind == "uniform_box" for p in ps) else "general"
    return Density(int(sum(dims)), box, f, nc, name, kind)


def normalize(p: Density, q: Optional[QuadratureSpec] = None, box: Optional[Box] = None) -> Density:
    """Set ``norm_const`` to the integral of ``eval_unnorm`` over the support."""
    res = integrate(p.unnorm, box or p.support, q or QuadratureSpec())
    if not np.isfinite(res.value) or res.value <= 0:
        raise NonIntegrable(f"integral of {p.name} is {res.value}")
    return replace(p, norm_const=float(res.value))
