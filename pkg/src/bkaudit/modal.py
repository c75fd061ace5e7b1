"""Mode finding and the non-invariance of modes under reparameterization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import optimize

from .coords import Box, Diffeo
from .density import Density, pushforward
from .errors import NonFinite

__all__ = [
    "ModeResult",
    "ModeAudit",
    "find_mode",
    "max_value",
    "mode_invariance_audit",
    "lognormal_mode",
    "MODE_TOL",
]

MODE_TOL = 1e-4
_PLATEAU_RTOL = 1e-12


@dataclass(frozen=True)
class ModeResult:
    argmax: np.ndarray
    value: float
    method: str
    converged: Union[bool, str]

    def to_dict(self) -> dict:
        return {
            "argmax": [float(v) for v in self.argmax],
            "value": self.value,
            "method": self.method,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class ModeAudit:
    verdict: str
    mode_original: np.ndarray
    mode_transformed: np.ndarray
    mode_back_mapped: np.ndarray
    value_original: float
    value_transformed: float
    value_original_at_back_mapped: float
    delta: float
    tolerance: float = MODE_TOL
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "mode_original": [float(v) for v in self.mode_original],
            "mode_transformed": [float(v) for v in self.mode_transformed],
            "mode_back_mapped": [float(v) for v in self.mode_back_mapped],
            "value_original": self.value_original,
            "value_transformed": self.value_transformed,
            "value_original_at_back_mapped": self.value_original_at_back_mapped,
            "delta": self.delta,
            "tolerance": self.tolerance,
        }


def lognormal_mode(mu, sigma) -> np.ndarray:
    """Closed-form mode ``exp(μ − σ²)`` of a product of log-normals."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return np.exp(mu - sigma**2)


def _grid(b: Box, n: int) -> tuple[np.ndarray, list[np.ndarray]]:
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for lo, hi in zip(b.lo, b.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1), axes


def find_mode(p: Density, b: Optional[Box] = None, n_grid: int = 64, xatol: float = 1e-10) -> ModeResult:
    """Argmax of ``p`` over ``b`` by a cell-centred grid and a simplex polish.

    The polish minimizes ``−log p`` by Nelder-Mead, confined to ``b``. When
    several grid cells share the maximum value and the polish finds nothing
    higher, the density is treated as a plateau: the centroid of those
    cells is returned with ``converged="plateau"``.
    """
    b = b or p.support
    if not b.is_finite:
        raise ValueError("find_mode needs a finite box")
    pts, _ = _grid(b, n_grid)
    vals = np.asarray(p.pdf(pts), dtype=float)
    if np.any(np.isnan(vals)) or np.any(np.isposinf(vals)):
        raise NonFinite("density is not finite on the search grid")
    vmax = float(vals.max())
    if not vmax > 0:
        raise NonFinite("density vanishes on the whole search grid")
    ties = vals >= vmax * (1 - _PLATEAU_RTOL)
    x0 = pts[int(np.argmax(vals))]

    def nlog(x):
        if np.any(x < b.lo) or np.any(x > b.hi):
            return np.inf
        v = float(p.pdf(x))
        return -np.log(v) if v > 0 else np.inf

    scale = (b.hi - b.lo) / n_grid
    simplex = np.vstack([x0] + [x0 + np.eye(b.dim)[i] * scale[i] for i in range(b.dim)])
    res = optimize.minimize(
        nlog,
        x0,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": 1e-15, "maxiter": 20000, "initial_simplex": simplex},
    )
    x = np.asarray(res.x, dtype=float)
    val = float(p.pdf(x))
    if not np.isfinite(val):
        raise NonFinite(f"density is not finite at {x}")
    # Tied cells that the polish cannot improve on form a plateau; symmetric
    # peaks tie too but the polish climbs above them.
    if np.count_nonzero(ties) > 1 and val <= vmax * (1 + _PLATEAU_RTOL):
        c = pts[ties].mean(axis=0)
        return ModeResult(c, float(p.pdf(c)), "grid_polish", "plateau")
    if val < vmax:
        return ModeResult(x0, vmax, "grid_polish", False)
    return ModeResult(x, val, "grid_polish", bool(res.success))


def max_value(p: Density, b: Optional[Box] = None, n_grid: int = 64) -> float:
    """Density value at :func:`find_mode`'s argmax."""
    return find_mode(p, b, n_grid).value


def mode_invariance_audit(
    p: Density,
    t: Diffeo,
    b: Optional[Box] = None,
    b_transformed: Optional[Box] = None,
    n_grid: int = 64,
    tol: float = MODE_TOL,
) -> ModeAudit:
    """Compare the mode of ``p`` with the back-mapped mode of its pushforward.

    PASS when the two points agree within ``tol`` in the max norm.
    ``b_transformed`` defaults to ``t.image_box(b)``.
    """
    b = b or p.support
    if b_transformed is None:
        b_transformed = t.image_box(b)
    q = pushforward(p, t, b_transformed)
    m0 = find_mode(p, b, n_grid)
    m1 = find_mode(q, b_transformed, n_grid)
    back = np.asarray(t.inverse_map(m1.argmax), dtype=float)
    delta = float(np.max(np.abs(back - m0.argmax)))
    return ModeAudit(
        "PASS" if delta <= tol else "FAIL",
        m0.argmax,
        m1.argmax,
        back,
        m0.value,
        m1.value,
        float(p.pdf(back)),
        delta,
        tol,
        {"converged_original": m0.converged, "converged_transformed": m1.converged},
    )
