"""Integration engines and exact polygon geometry.

Three engines share one contract: ``integrate(f, box, spec)`` returns a
:class:`QuadResult` with the estimate, an error estimate and the number of
integrand evaluations. Integrands are vectorized: ``f(points)`` receives an
``(N, dim)`` array and returns ``N`` values.

Piecewise-constant integrands over linear constraints are handled exactly by
polygon clipping plus the shoelace formula.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cubature

from .coords import Box
from .errors import BudgetExceeded, DegeneratePolygon, NaNEncountered

__all__ = [
    "QuadratureSpec",
    "QuadResult",
    "integrate",
    "gauss_box",
    "integrate_indicator_polytope",
    "polygon_area",
    "clip_halfplane",
    "polygon_from_halfplanes",
    "integrate_polygon",
    "integrate_segment",
    "worker_count",
]

ENGINES = ("tensor_gauss", "adaptive_subdivision", "monte_carlo")
_CHUNK = 1 << 18
_MC_CHUNK = 1 << 14
_MC_BATCH = 16


@dataclass(frozen=True)
class QuadratureSpec:
    """Engine choice and budget. ``seed`` is required for ``monte_carlo``."""

    engine: str = "tensor_gauss"
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    max_evals: int = 20_000_000
    seed: Optional[int] = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_evals < 100:
            raise ValueError("max_evals must be at least 100")
        if self.engine == "monte_carlo" and self.seed is None:
            raise ValueError("seed is mandatory for the monte_carlo engine")
        if self.seed is not None and not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class QuadResult:
    value: float
    err_est: float
    evals: int
    converged: bool = True

    def __iter__(self):
        # Allows ``value, err, n = integrate(...)``.
        return iter((self.value, self.err_est, self.evals))


def worker_count() -> int:
    """Worker cap from ``AUDIT_THREADS`` (default 1)."""
    try:
        n = int(os.environ.get("AUDIT_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _eval(f: Callable, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(pts), dtype=float).reshape(pts.shape[0])
    if np.isnan(vals).any():
        raise NaNEncountered("integrand returned NaN")
    return vals


def _tol(spec: QuadratureSpec, value: float) -> float:
    return max(spec.abs_tol, spec.rel_tol * abs(value))


# ------------------------------------------------------------ tensor Gauss


def gauss_box(f: Callable, box: Box, n: int) -> float:
    """Tensor Gauss-Legendre rule with ``n`` nodes per axis.

    Exact for polynomials of degree ``2n - 1`` in each variable.
    """
    if not box.is_finite:
        raise ValueError("tensor_gauss needs a finite box")
    x, w = np.polynomial.legendre.leggauss(n)
    d = box.dim
    half = 0.5 * box.widths
    mid = 0.5 * (box.lo + box.hi)
    nodes = [mid[i] + half[i] * x for i in range(d)]
    weights = [half[i] * w for i in range(d)]
    partial = []
    # Iterate over the first axis in blocks so memory stays bounded.
    inner = n ** (d - 1)
    rows = max(1, _CHUNK // max(inner, 1))
    if d > 1:
        inner_grid = np.meshgrid(*nodes[1:], indexing="ij")
        inner_pts = np.stack([g.ravel() for g in inner_grid], axis=-1)
        inner_w = weights[1]
        for wi in weights[2:]:
            inner_w = np.multiply.outer(inner_w, wi)
        inner_w = inner_w.ravel()
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        if d == 1:
            pts = nodes[0][start:stop, None]
            vals = _eval(f, pts)
            partial.append(np.sum(vals * weights[0][start:stop]))
        else:
            x0 = nodes[0][start:stop]
            pts = np.concatenate(
                [np.repeat(x0, inner)[:, None], np.tile(inner_pts, (stop - start, 1))], axis=1
            )
            vals = _eval(f, pts).reshape(stop - start, inner)
            partial.append(np.sum((vals @ inner_w) * weights[0][start:stop]))
    return float(np.sum(partial))


def _tensor_gauss(f, box: Box, spec: QuadratureSpec, n0: int = 4) -> QuadResult:
    d = box.dim
    n = n0
    prev = gauss_box(f, box, n)
    evals = n**d
    err = float("inf")
    while True:
        n2 = 2 * n
        if evals + n2**d > spec.max_evals:
            return QuadResult(prev, err, evals, converged=False)
        cur = gauss_box(f, box, n2)
        evals += n2**d
        err = abs(cur - prev)
        if err <= _tol(spec, cur):
            return QuadResult(cur, err, evals, True)
        prev, n = cur, n2


# --------------------------------------------------------- adaptive (scipy)


def _rule_points(d: int) -> int:
    if d == 1:
        return 21
    return 2**d + 2 * d * d + 2 * d + 1


def _adaptive(f, box: Box, spec: QuadratureSpec) -> QuadResult:
    count = [0]

    def g(x):
        count[0] += x.shape[0]
        return _eval(f, x)

    max_sub = max(1, spec.max_evals // (2 * _rule_points(box.dim)))
    res = cubature(
        g,
        box.lo,
        box.hi,
        rtol=spec.rel_tol,
        atol=spec.abs_tol,
        max_subdivisions=max_sub,
    )
    ok = res.status == "converged"
    return QuadResult(float(res.estimate), float(res.error), int(count[0]), ok)


# ------------------------------------------------------------- Monte Carlo


def _mc_chunk(f, box: Box, ss: np.random.SeedSequence):
    rng = np.random.Generator(np.random.PCG64(ss))
    u = rng.random((_MC_CHUNK, box.dim))
    vals = _eval(f, box.lo + u * box.widths)
    return float(np.sum(vals)), float(np.sum(vals * vals))


def _monte_carlo(f, box: Box, spec: QuadratureSpec) -> QuadResult:
    if not box.is_finite:
        raise ValueError("monte_carlo needs a finite box")
    vol = box.volume
    root = np.random.SeedSequence(int(spec.seed))
    max_chunks = max(1, spec.max_evals // _MC_CHUNK)
    seeds = root.spawn(max_chunks)
    s1 = s2 = 0.0
    n = 0
    done = 0
    workers = worker_count()
    value, err = float("nan"), float("inf")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while done < max_chunks:
            batch = seeds[done : min(max_chunks, done + _MC_BATCH)]
            for a, b in pool.map(lambda s: _mc_chunk(f, box, s), batch):
                s1 += a
                s2 += b
                n += _MC_CHUNK
            done += len(batch)
            mean = s1 / n
            var = max(s2 / n - mean * mean, 0.0)
            value = vol * mean
            err = vol * math.sqrt(var / n)
            if err <= _tol(spec, value) and n >= 4 * _MC_CHUNK:
                return QuadResult(value, err, n, True)
    return QuadResult(value, err, n, err <= _tol(spec, value))


def integrate(f: Callable, box: Box, spec: Optional[QuadratureSpec] = None, strict: bool = False) -> QuadResult:
    """Integrate a vectorized ``f`` over ``box``.

    When the budget runs out the best estimate is returned with
    ``converged=False``; ``strict=True`` raises :class:`BudgetExceeded`.
    """
    spec = spec or QuadratureSpec()
    if spec.engine == "tensor_gauss":
        res = _tensor_gauss(f, box, spec)
    elif spec.engine == "adaptive_subdivision":
        res = _adaptive(f, box, spec)
    else:
        res = _monte_carlo(f, box, spec)
    if strict and not res.converged:
        raise BudgetExceeded("quadrature budget exhausted", res.value, res.err_est, res.evals)
    return res


# ---------------------------------------------------------------- polygons


def polygon_area(verts) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    v = np.asarray(verts, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def integrate_indicator_polytope(c: float, verts) -> float:
    """Exact integral of the constant ``c`` over a simple polygon."""
    area = abs(polygon_area(verts))
    if area < 1e-14:
        raise DegeneratePolygon(f"polygon area {area:.3g} is degenerate")
    return c * area


def clip_halfplane(verts: np.ndarray, a: Sequence[float], b: float) -> np.ndarray:
    """Clip a convex polygon to ``{x : a·x <= b}`` (Sutherland-Hodgman)."""
    v = np.asarray(verts, dtype=float)
    if v.shape[0] == 0:
        return v
    a = np.asarray(a, dtype=float)
    s = v @ a - b
    out = []
    n = v.shape[0]
    for i in range(n):
        j = (i + 1) % n
        pi, pj, si, sj = v[i], v[j], s[i], s[j]
        if si <= 0:
            out.append(pi)
        if (si < 0 < sj) or (sj < 0 < si):
            t = si / (si - sj)
            out.append(pi + t * (pj - pi))
    return np.array(out).reshape(-1, 2)


def polygon_from_halfplanes(A, b, box: Box) -> np.ndarray:
    """Convex polygon ``{x in box : A x <= b}``, counter-clockwise."""
    verts = np.array(
        [[box.lo[0], box.lo[1]], [box.hi[0], box.lo[1]], [box.hi[0], box.hi[1]], [box.lo[0], box.hi[1]]]
    )
    for ai, bi in zip(np.asarray(A, dtype=float), np.asarray(b, dtype=float)):
        verts = clip_halfplane(verts, ai, bi)
        if verts.shape[0] < 3:
            return np.empty((0, 2))
    # Drop repeated vertices produced by clipping through a corner.
    keep = [0]
    for i in range(1, verts.shape[0]):
        if np.max(np.abs(verts[i] - verts[keep[-1]])) > 1e-15:
            keep.append(i)
    verts = verts[keep]
    if verts.shape[0] > 1 and np.max(np.abs(verts[0] - verts[-1])) <= 1e-15:
        verts = verts[:-1]
    return verts


def _triangle_rule(n: int):
    # Collapsed (Duffy) Gauss rule on the reference triangle (0,0),(1,0),(0,1).
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    u = s * (1.0 - t)
    v = t
    return np.stack([u.ravel(), v.ravel()], axis=-1), (ws * wt * (1.0 - t)).ravel()


def integrate_polygon(f: Callable, verts, n: int = 24) -> float:
    """Integrate a smooth ``f`` over a convex polygon by fan triangulation."""
    v = np.asarray(verts, dtype=float)
    if v.shape[0] < 3 or abs(polygon_area(v)) < 1e-14:
        raise DegeneratePolygon("polygon is degenerate")
    ref, w = _triangle_rule(n)
    total = []
    p0 = v[0]
    for i in range(1, v.shape[0] - 1):
        e1, e2 = v[i] - p0, v[i + 1] - p0
        jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
        pts = p0 + ref[:, :1] * e1 + ref[:, 1:] * e2
        total.append(jac * np.sum(w * _eval(f, pts)))
    return float(np.sum(total))


def integrate_segment(f: Callable, lo: float, hi: float, n: int = 32) -> float:
    """Gauss-Legendre rule on ``[lo, hi]`` for a 1D vectorized integrand."""
    return gauss_box(f, Box([lo], [hi]), n)
