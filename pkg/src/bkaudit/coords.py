"""Reparameterizations of box domains.

A :class:`Diffeo` bundles a forward map, its inverse and (optionally) the
analytic absolute Jacobian determinant of the forward map. All maps are
vectorized over leading axes: a point is an array whose last axis has length
``dim``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, SingularJacobian

__all__ = [
    "Box",
    "Diffeo",
    "apply",
    "jac_det_abs",
    "compose",
    "fd_jacobian",
    "registry_names",
    "get",
    "identity",
    "reciprocal",
    "tan_axis0",
    "square_axis0",
    "cubic",
    "affine",
    "cart_to_spherical",
    "spherical_to_cart",
    "hyperbolic_Trho",
]

_SINGULAR_TOL = 1e-14


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo, hi]``; infinite bounds are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo: Sequence[float], hi: Sequence[float]):
        lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch(f"box bounds have shapes {lo.shape} and {hi.shape}")
        if not np.all(lo < hi):
            raise ValueError(f"box requires lo < hi on every axis, got lo={lo}, hi={hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, center: Sequence[float], half_width) -> "Box":
        c = np.asarray(center, dtype=float)
        h = np.broadcast_to(np.asarray(half_width, dtype=float), c.shape)
        return cls(c - h, c + h)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def contains(self, x) -> np.ndarray:
        """Inclusive membership test, vectorized over leading axes."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[[a, b] for a, b in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def _always(x):
    return np.ones(np.shape(x)[:-1], dtype=bool)


@dataclass(frozen=True)
class Diffeo:
    """Invertible differentiable map with optional analytic |det J|.

    ``jac_det`` is the absolute Jacobian determinant of ``forward_map``.
    ``in_domain`` and ``in_range`` are boolean masks over points.
    ``image_box`` maps a box in the domain to a box containing its image,
    raising :class:`DomainError` when that is impossible.
    """

    dim: int
    forward_map: Callable[[np.ndarray], np.ndarray]
    inverse_map: Callable[[np.ndarray], np.ndarray]
    name: str
    jac_det: Optional[Callable[[np.ndarray], np.ndarray]] = None
    in_domain: Callable[[np.ndarray], np.ndarray] = field(default=_always)
    in_range: Callable[[np.ndarray], np.ndarray] = field(default=_always)
    image_box: Optional[Callable[[Box], Box]] = None

    def __call__(self, x):
        return apply(self, x)

    def inverse(self) -> "Diffeo":
        fwd_jac = self.jac_det
        inv_map = self.inverse_map
        if fwd_jac is not None:

            def jac(y):
                return 1.0 / fwd_jac(inv_map(y))

        else:
            jac = None
        inv_box = None
        if self.image_box is not None and self.name in _SELF_BOXED_INVERSES:
            inv_box = _SELF_BOXED_INVERSES[self.name](self)
        return Diffeo(
            dim=self.dim,
            forward_map=self.inverse_map,
            inverse_map=self.forward_map,
            name=f"inv({self.name})",
            jac_det=jac,
            in_domain=self.in_range,
            in_range=self.in_domain,
            image_box=inv_box,
        )


def _check_point(d: Diffeo, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (d.dim,):
        raise DimensionMismatch(f"{d.name} expects dim {d.dim}, got shape {x.shape}")
    if not np.all(d.in_domain(x)):
        raise DomainError(f"point outside the domain of {d.name}")
    return x


def apply(d: Diffeo, x) -> np.ndarray:
    """Forward map with domain checking."""
    return d.forward_map(_check_point(d, x))


def fd_jacobian(fmap: Callable, x, h=None, in_domain: Optional[Callable] = None) -> np.ndarray:
    """Central-difference Jacobian of ``fmap`` at a single point ``x``.

    Default step per axis is ``1e-6 * (1 + |x_i|)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if h is None:
        steps = 1e-6 * (1.0 + np.abs(x))
    else:
        steps = np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy()
    plus = x + np.diag(steps)
    minus = x - np.diag(steps)
    if in_domain is not None:
        if not (np.all(in_domain(plus)) and np.all(in_domain(minus))):
            raise DomainError("finite-difference stencil leaves the domain")
    fp = np.asarray(fmap(plus), dtype=float).reshape(n, -1)
    fm = np.asarray(fmap(minus), dtype=float).reshape(n, -1)
    return ((fp - fm) / (2.0 * steps[:, None])).T


def _fd_det(d: Diffeo, x: np.ndarray) -> np.ndarray:
    flat = x.reshape(-1, d.dim)
    out = np.empty(flat.shape[0])
    for i, xi in enumerate(flat):
        out[i] = abs(np.linalg.det(fd_jacobian(d.forward_map, xi, in_domain=d.in_domain)))
    return out.reshape(x.shape[:-1])


def jac_det_abs(d: Diffeo, x, use_fd: bool = False) -> np.ndarray:
    """|det J| of the forward map; analytic when available, else central FD."""
    x = _check_point(d, x)
    if d.jac_det is not None and not use_fd:
        val = np.asarray(d.jac_det(x), dtype=float)
    else:
        val = _fd_det(d, x)
    if np.any(~np.isfinite(val)) or np.any(val < _SINGULAR_TOL):
        raise SingularJacobian(f"|det J| of {d.name} is singular at the given point")
    return val if val.ndim else float(val)


def compose(a: Diffeo, b: Diffeo) -> Diffeo:
    """Return ``a ∘ b`` (apply ``b`` first)."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"cannot compose dims {a.dim} and {b.dim}")

    def fwd(x):
        return a.forward_map(b.forward_map(x))

    def inv(y):
        return b.inverse_map(a.inverse_map(y))

    if a.jac_det is not None and b.jac_det is not None:

        def jac(x):
            return a.jac_det(b.forward_map(x)) * b.jac_det(x)

    else:
        jac = None

    def dom(x):
        with np.errstate(all="ignore"):
            return b.in_domain(x) & a.in_domain(b.forward_map(x))

    def rng(y):
        with np.errstate(all="ignore"):
            return a.in_range(y) & b.in_range(a.inverse_map(y))

    box = None
    if a.image_box is not None and b.image_box is not None:

        def box(bx):
            return a.image_box(b.image_box(bx))

    return Diffeo(a.dim, fwd, inv, f"{a.name}∘{b.name}", jac, dom, rng, box)


def _corner_box(fwd: Callable, bx: Box) -> Box:
    img = fwd(bx.corners())
    return Box(img.min(axis=0), img.max(axis=0))


# ---------------------------------------------------------------- registry


def identity(dim: int = 1) -> Diffeo:
    return Diffeo(
        dim=dim,
        forward_map=lambda x: np.array(x, dtype=float, copy=True),
        inverse_map=lambda y: np.array(y, dtype=float, copy=True),
        name="identity",
        jac_det=lambda x: np.ones(np.shape(x)[:-1]),
        image_box=lambda bx: bx,
    )


def reciprocal(dim: int = 2) -> Diffeo:
    """Componentwise ``x -> 1/x``, as in velocity to slowness."""

    def dom(x):
        return np.all(np.asarray(x) != 0.0, axis=-1)

    def fwd(x):
        with np.errstate(divide="ignore"):
            return 1.0 / np.asarray(x, dtype=float)

    def jac(x):
        x = np.asarray(x, dtype=float)
        return np.prod(1.0 / x**2, axis=-1)

    def box(bx: Box) -> Box:
        if np.any((bx.lo <= 0) & (bx.hi >= 0)):
            raise DomainError("reciprocal image of a box containing 0 is unbounded")
        return _corner_box(fwd, bx)

    return Diffeo(dim, fwd, fwd, "reciprocal", jac, dom, dom, box)


def tan_axis0(dim: int = 3, center: float = 0.0) -> Diffeo:
    """``x_0 -> tan(x_0)`` on the branch ``[center - π/2, center + π/2)``.

    Poles inside the branch are excluded from the domain; the inverse picks
    ``arctan(y_0) + jπ`` inside the branch.
    """
    lo_b = center - np.pi / 2
    hi_b = center + np.pi / 2

    def dom(x):
        x0 = np.asarray(x, dtype=float)[..., 0]
        c = np.cos(x0)
        return (x0 > lo_b) & (x0 < hi_b) & (np.abs(c) > 1e-300)

    def fwd(x):
        y = np.array(x, dtype=float, copy=True)
        y[..., 0] = np.tan(y[..., 0])
        return y

    def inv(y):
        x = np.array(y, dtype=float, copy=True)
        base = np.arctan(x[..., 0])
        j = np.ceil((lo_b - base) / np.pi)
        x[..., 0] = base + j * np.pi
        return x

    def jac(x):
        return 1.0 / np.cos(np.asarray(x, dtype=float)[..., 0]) ** 2

    def box(bx: Box) -> Box:
        a, b = bx.lo[0], bx.hi[0]
        if a <= lo_b or b >= hi_b:
            raise DomainError("box leaves the tan branch")
        k_lo = np.ceil((a - np.pi / 2) / np.pi)
        k_hi = np.floor((b - np.pi / 2) / np.pi)
        if k_hi >= k_lo:
            raise DomainError("box crosses a pole of tan; supply an explicit support box")
        return _corner_box(fwd, bx)

    return Diffeo(dim, fwd, inv, f"tan_axis0[c={center:g}]", jac, dom, _always, box)


def square_axis0(dim: int = 3) -> Diffeo:
    """``x_0 -> x_0^2`` on ``x_0 > 0`` (energy-style transform)."""

    def dom(x):
        return np.asarray(x, dtype=float)[..., 0] > 0

    def fwd(x):
        y = np.array(x, dtype=float, copy=True)
        y[..., 0] = y[..., 0] ** 2
        return y

    def inv(y):
        x = np.array(y, dtype=float, copy=True)
        x[..., 0] = np.sqrt(x[..., 0])
        return x

    def jac(x):
        return 2.0 * np.asarray(x, dtype=float)[..., 0]

    def box(bx: Box) -> Box:
        if bx.lo[0] < 0:
            raise DomainError("square_axis0 needs a positive first axis")
        return _corner_box(fwd, bx)

    return Diffeo(dim, fwd, inv, "square_axis0", jac, dom, dom, box)


def cubic(dim: int = 1) -> Diffeo:
    """Componentwise ``x -> x^3``; Jacobian vanishes at 0."""

    def fwd(x):
        return np.asarray(x, dtype=float) ** 3

    def inv(y):
        return np.cbrt(np.asarray(y, dtype=float))

    def jac(x):
        return np.prod(3.0 * np.asarray(x, dtype=float) ** 2, axis=-1)

    return Diffeo(dim, fwd, inv, "cubic", jac, image_box=lambda bx: _corner_box(fwd, bx))


def affine(matrix, offset=None) -> Diffeo:
    """``x -> A x + b`` with invertible ``A``."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch("affine map needs a square matrix")
    b = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    Ainv = np.linalg.inv(A)
    det = abs(np.linalg.det(A))

    def fwd(x):
        return np.asarray(x, dtype=float) @ A.T + b

    def inv(y):
        return (np.asarray(y, dtype=float) - b) @ Ainv.T

    def jac(x):
        return np.full(np.shape(x)[:-1], det)

    return Diffeo(n, fwd, inv, "affine", jac, image_box=lambda bx: _corner_box(fwd, bx))


def _sph_domain(x):
    x = np.asarray(x, dtype=float)
    dx, dy = x[..., 0], x[..., 1]
    r = np.sqrt(np.sum(x**2, axis=-1))
    cut = (dy == 0) & (dx < 0)
    return (r > 0) & ~cut


def _cart_to_sph(x):
    x = np.asarray(x, dtype=float)
    dx, dy, dz = x[..., 0], x[..., 1], x[..., 2]
    rho = np.sqrt(dx * dx + dy * dy)
    r = np.sqrt(rho * rho + dz * dz)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.arccos(np.clip(dz / r, -1.0, 1.0))
        pole = rho * rho < 1e-300
        phi = np.where(pole, 0.0, np.sign(dy) * np.arccos(np.clip(dx / np.where(pole, 1.0, rho), -1.0, 1.0)))
    return np.stack([r, theta, phi], axis=-1)


def _sph_to_cart(y):
    y = np.asarray(y, dtype=float)
    r, th, ph = y[..., 0], y[..., 1], y[..., 2]
    s = np.sin(th)
    return np.stack([r * s * np.cos(ph), r * s * np.sin(ph), r * np.cos(th)], axis=-1)


def _sph_range(y):
    y = np.asarray(y, dtype=float)
    return (y[..., 0] > 0) & (y[..., 1] >= 0) & (y[..., 1] <= np.pi) & (y[..., 2] > -np.pi) & (y[..., 2] < np.pi)


def _sph_image_box(bx: Box) -> Box:
    # Superset box: exact radial range, full angular ranges.
    closest = np.clip(0.0, bx.lo, bx.hi)
    rmin = float(np.sqrt(np.sum(closest**2)))
    rmax = float(np.sqrt(np.max(np.sum(bx.corners() ** 2, axis=-1))))
    if rmin <= 0:
        raise DomainError("box contains the origin")
    return Box([rmin, 0.0, -np.pi], [rmax, np.pi, np.pi])


def cart_to_spherical() -> Diffeo:
    """Cartesian ``(d_x, d_y, d_z)`` to spherical ``(d_r, d_θ, d_φ)``.

    ``φ = sign(d_y) arccos(d_x/ρ)``, with ``φ = 0`` at the pole. The half
    plane ``d_y = 0, d_x < 0`` is excluded so the map stays injective.
    """

    def jac(x):
        x = np.asarray(x, dtype=float)
        rho = np.sqrt(x[..., 0] ** 2 + x[..., 1] ** 2)
        r = np.sqrt(rho**2 + x[..., 2] ** 2)
        with np.errstate(divide="ignore"):
            return 1.0 / (r * rho)

    return Diffeo(3, _cart_to_sph, _sph_to_cart, "cart_to_spherical", jac, _sph_domain, _sph_range, _sph_image_box)


def spherical_to_cart() -> Diffeo:
    """Inverse of :func:`cart_to_spherical`; ``|det J| = r^2 sin θ``."""

    def jac(y):
        y = np.asarray(y, dtype=float)
        return y[..., 0] ** 2 * np.abs(np.sin(y[..., 1]))

    def box(bx: Box) -> Box:
        r = bx.hi[0]
        return Box([-r, -r, -r], [r, r, r])

    return Diffeo(3, _sph_to_cart, _cart_to_sph, "spherical_to_cart", jac, _sph_range, _sph_domain, box)


def hyperbolic_Trho() -> Diffeo:
    """``(T, ρ) -> (u, v) = (½ ln(T/ρ), √(Tρ))`` on the open first quadrant."""

    def dom(x):
        x = np.asarray(x, dtype=float)
        return (x[..., 0] > 0) & (x[..., 1] > 0)

    def rng(y):
        return np.asarray(y, dtype=float)[..., 1] > 0

    def fwd(x):
        x = np.asarray(x, dtype=float)
        T, rho = x[..., 0], x[..., 1]
        return np.stack([0.5 * np.log(T / rho), np.sqrt(T * rho)], axis=-1)

    def inv(y):
        y = np.asarray(y, dtype=float)
        u, v = y[..., 0], y[..., 1]
        return np.stack([v * np.exp(u), v * np.exp(-u)], axis=-1)

    def jac(x):
        x = np.asarray(x, dtype=float)
        return 0.5 / np.sqrt(x[..., 0] * x[..., 1])

    def box(bx: Box) -> Box:
        if np.any(bx.lo <= 0):
            raise DomainError("hyperbolic map needs a box in the open first quadrant")
        return _corner_box(fwd, bx)

    return Diffeo(2, fwd, inv, "hyperbolic_Trho", jac, dom, rng, box)


def _inverse_hyperbolic_box(d: Diffeo):
    def box(bx: Box) -> Box:
        if bx.lo[1] <= 0:
            raise DomainError("v must be positive")
        return _corner_box(d.inverse_map, bx)

    return box


def _inverse_corner_box(d: Diffeo):
    return lambda bx: _corner_box(d.inverse_map, bx)


_SELF_BOXED_INVERSES = {
    "identity": lambda d: (lambda bx: bx),
    "reciprocal": lambda d: d.image_box,
    "hyperbolic_Trho": _inverse_hyperbolic_box,
    "cubic": _inverse_corner_box,
    "affine": _inverse_corner_box,
    "square_axis0": _inverse_corner_box,
}

_REGISTRY = {
    "identity": identity,
    "reciprocal": reciprocal,
    "tan_axis0": tan_axis0,
    "square_axis0": square_axis0,
    "cart_to_spherical": cart_to_spherical,
    "spherical_to_cart": spherical_to_cart,
    "hyperbolic_Trho": hyperbolic_Trho,
    "cubic": cubic,
    "affine": affine,
}


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


def get(name: str, **params) -> Diffeo:
    """Build a registered diffeo by string id."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown diffeo {name!r}; known: {registry_names()}") from None
    return factory(**params)
