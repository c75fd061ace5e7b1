"""Declarative scenarios: priors, forward model and reparameterizations bound
to a list of requested computations, with golden values to compare against.

Scenarios serialize to JSON (``"schema": 1``) with a fixed key order; golden
values are decimal strings so that parsing never rounds them.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from . import coords, construct, hier, modal, transdim
from .condition import (
    ForwardModel,
    _g_v,
    disagreement_score,
    linear_forward,
    tomography_conditionals,
    tomography_setup,
)
from .coords import Box
from .density import DensityFamily, from_family, uniform_box
from .errors import AuditError, ValidationError
from .evidence import audit_data_reparam_invariance, audit_model_reparam_invariance, bayes_factor, evidence
from .quad import QuadratureSpec

__all__ = [
    "SCHEMA_VERSION",
    "REQUEST_KINDS",
    "Scenario",
    "AuditReport",
    "Comparison",
    "registry",
    "get",
    "run",
    "sweep",
    "validate",
]

SCHEMA_VERSION = 1
REQUEST_KINDS = ("evidence", "bayes_factor", "conditional", "mode", "tail_prob", "audit")
_KEY_ORDER = (
    "schema",
    "id",
    "description",
    "seed",
    "objects",
    "prior_d",
    "prior_m",
    "forward",
    "reparams",
    "quad",
    "requests",
    "sweeps",
    "expected",
)


# ----------------------------------------------------------------- objects


def _box(d: dict) -> Box:
    return Box([float(v) for v in d["lo"]], [float(v) for v in d["hi"]])


def _make_density(params: dict, family: str):
    return from_family(DensityFamily(family, params))


def _make_forward(params: dict, family: str) -> ForwardModel:
    if family == "linear":
        return linear_forward(params["matrix"])
    if family == "tomography_velocity":
        return ForwardModel(2, 2, _g_v, None, "g_v")
    raise KeyError(family)


_DIFFEOS: dict[str, Callable[..., coords.Diffeo]] = {
    "identity": coords.identity,
    "affine": coords.affine,
    "cubic": coords.cubic,
    "reciprocal": coords.reciprocal,
    "tan_axis0": coords.tan_axis0,
    "square_axis0": coords.square_axis0,
    "hyperbolic_Trho": coords.hyperbolic_Trho,
    "cart_to_spherical": coords.cart_to_spherical,
    "spherical_to_cart": coords.spherical_to_cart,
}
_DENSITIES = ("uniform_box", "gaussian_diag", "lognormal_product")
_FORWARDS = ("linear", "tomography_velocity")


def _object_category(family: str) -> str:
    if family in _DENSITIES:
        return "density"
    if family in _FORWARDS:
        return "forward"
    if family in _DIFFEOS:
        return "diffeo"
    raise ValidationError(f"unknown object family {family!r}")


def _build_object(name: str, spec: dict):
    family = spec.get("family")
    cat = _object_category(family)
    params = spec.get("params", {})
    try:
        if cat == "density":
            return cat, _make_density(params, family)
        if cat == "forward":
            return cat, _make_forward(params, family)
        return cat, _DIFFEOS[family](**params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"object {name!r} ({family}) cannot be built: {exc}") from exc


# ---------------------------------------------------------------- scenario


@dataclass
class Scenario:
    id: str
    description: str = ""
    seed: int = 0
    objects: dict = field(default_factory=dict)
    prior_d: Optional[str] = None
    prior_m: Optional[str] = None
    forward: Optional[str] = None
    reparams: list = field(default_factory=list)
    quad: dict = field(default_factory=dict)
    requests: list = field(default_factory=list)
    sweeps: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"schema": SCHEMA_VERSION}
        for k in _KEY_ORDER[1:]:
            d[k] = getattr(self, k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ValidationError("scenario must be a JSON object")
        if d.get("schema") != SCHEMA_VERSION:
            raise ValidationError(f"schema must be {SCHEMA_VERSION}, got {d.get('schema')!r}")
        unknown = set(d) - set(_KEY_ORDER)
        if unknown:
            raise ValidationError(f"unknown fields: {sorted(unknown)}")
        if not isinstance(d.get("id"), str) or not d["id"]:
            raise ValidationError("id must be a non-empty string")
        kwargs = {k: d[k] for k in _KEY_ORDER[1:] if k in d}
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(d)

    def quad_spec(self) -> QuadratureSpec:
        try:
            return QuadratureSpec(**self.quad)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"quad: {exc}") from exc


@dataclass
class _Context:
    scenario: Scenario
    objects: dict
    quad: QuadratureSpec

    def get(self, ref: Optional[str], category: str):
        if ref is None:
            raise ValidationError(f"no {category} declared")
        cat, obj = self.objects[ref]
        if cat != category:
            raise ValidationError(f"ref {ref!r} is a {cat}, expected a {category}")
        return obj

    def reparam(self, ref: str, space: str):
        for r in self.scenario.reparams:
            if r["ref"] == ref and r["space"] == space:
                support = _box(r["support"]) if "support" in r else None
                return self.get(ref, "diffeo"), support
        raise ValidationError(f"reparam {ref!r} is not declared for the {space} space")


def _resolve(s: Scenario) -> _Context:
    objs = {}
    for name, spec in s.objects.items():
        objs[name] = _build_object(name, spec)
    for field_name, cat in (("prior_d", "density"), ("prior_m", "density"), ("forward", "forward")):
        ref = getattr(s, field_name)
        if ref is None:
            continue
        if ref not in objs:
            raise ValidationError(f"{field_name}: unresolved ref {ref!r}")
        if objs[ref][0] != cat:
            raise ValidationError(f"{field_name}: ref {ref!r} is not a {cat}")
    for r in s.reparams:
        if r.get("space") not in ("data", "model"):
            raise ValidationError(f"reparam {r.get('ref')!r}: space must be 'data' or 'model'")
        if r.get("ref") not in objs:
            raise ValidationError(f"reparams: unresolved ref {r.get('ref')!r}")
        if objs[r["ref"]][0] != "diffeo":
            raise ValidationError(f"reparams: ref {r['ref']!r} is not a diffeo")
    return _Context(s, objs, s.quad_spec())


def validate(s: Scenario) -> _Context:
    """Resolve every reference and check each request's preconditions."""
    ctx = _resolve(s)
    names = set()
    for req in s.requests:
        kind, name, method = req.get("kind"), req.get("name"), req.get("method", "generic")
        if kind not in REQUEST_KINDS:
            raise ValidationError(f"request {name!r}: unknown kind {kind!r}")
        if not isinstance(name, str) or not name:
            raise ValidationError("every request needs a name")
        if name in names:
            raise ValidationError(f"duplicate request name {name!r}")
        names.add(name)
        if (kind, method) not in _METHODS:
            raise ValidationError(f"request {name!r}: no method {method!r} for kind {kind!r}")
        needs = _METHODS[(kind, method)][1]
        for n in needs:
            if n in ("prior_d", "prior_m", "forward") and getattr(s, n) is None:
                raise ValidationError(f"request {name!r} needs {n}")
        params = req.get("params", {})
        for p in ("reparam",):
            if p in params:
                space = "data" if method == "data" else "model"
                ctx.reparam(params[p], space)
        for ref in params.get("evidences", []):
            if ref not in names:
                raise ValidationError(f"request {name!r}: unresolved ref {ref!r}")
    for key, exp in s.expected.items():
        req_name = key.split(".", 1)[0]
        if req_name not in names:
            raise ValidationError(f"expected: unresolved ref {key!r}")
        if "value" not in exp:
            raise ValidationError(f"expected {key!r} lacks a value")
    for pname, sw in s.sweeps.items():
        if sw.get("method") not in _SWEEPS:
            raise ValidationError(f"sweep {pname!r}: unknown method {sw.get('method')!r}")
    return ctx


# ----------------------------------------------------------------- methods


def _ev_generic(ctx, params, results):
    res = evidence(
        ctx.get(ctx.scenario.prior_d, "density"),
        ctx.get(ctx.scenario.prior_m, "density"),
        ctx.get(ctx.scenario.forward, "forward"),
        ctx.quad,
        params.get("label", ""),
    )
    return {"value": res.value, "err_est": res.err_est, "method": res.method}


def _ev_transdim_cartesian(ctx, params, results):
    res = transdim.evidence_cartesian(int(params["k"]), geometry=params.get("geometry", "parallelogram"))
    return {"value": res.value, "err_est": res.err_est, "method": res.method}


def _ev_transdim_spherical(ctx, params, results):
    case = transdim.TransdimCase()
    k = int(params["k"])
    res = transdim.evidence_spherical(k, case, geometry=params.get("geometry", "parallelogram"))
    scale = (2 * case.sigma) ** 3 * case.dm**k
    out = {"value": res.value, "err_est": res.err_est, "integral": res.value * scale}
    if k == 1:
        out["closed_form_ratio"] = res.value * scale / (2439 / 800 * math.sqrt(21 / 5))
    return out


def _ev_closed_form(ctx, params, results):
    oracle = transdim.closed_form_oracle()
    quad_val, err = transdim.likelihood_integral_k2(route=params.get("route", "substitution"))
    terms = transdim.closed_form_terms()
    return {
        "oracle": oracle,
        "quadrature": quad_val,
        "rel_diff": abs(quad_val - oracle) / oracle,
        "min_log_arg": float(np.min(terms["log_args"])),
        "asinh_forms_diff": float(np.max(np.abs(terms["asinh_library"] - terms["asinh_log"]))),
    }


def _ev_hier_sigma(ctx, params, results):
    case = hier.HierCase(params["case"])
    opt = hier.optimize_sigma(case)
    out = {"sigma": opt.sigma, "flag": opt.flag}
    if case.case_id == "cart":
        cf = hier.case1_sigma_closed_form(case)
        out["closed_form"] = cf
        out["closed_form_delta"] = abs(opt.sigma - cf)
    return out


def _ev_hier_table(ctx, params, results):
    sig = {c: hier.optimize_sigma(hier.HierCase(c)).sigma for c in hier.CASE_IDS}
    gaps = [abs(sig[a] - sig[b]) for i, a in enumerate(hier.CASE_IDS) for b in hier.CASE_IDS[i + 1 :]]
    return {**{f"sigma_{c}": v for c, v in sig.items()}, "min_pairwise_gap": min(gaps)}


def _ev_tube(ctx, params, results):
    slope, off = float(params["slope"]), float(params["offset"])
    g = lambda x: off + slope * np.asarray(x)[..., 0]  # noqa: E731
    base = Box([0.0], [1.0])
    target = float(params["target"])
    p, sigma = construct.normalized_tube_for_evidence(2, 1, g, base, target, measure=params.get("measure", "surface"))
    naive = construct.manifold_integral(p.pdf, g, base, p.support, params.get("measure", "surface"))
    from .quad import gauss_box

    mass = gauss_box(p.pdf, p.support, 96)
    return {"sigma": sigma, "naive_integral": naive, "rel_error": abs(naive / target - 1), "mass": mass}


def _ev_any_evidence(ctx, params, results):
    target = float(params["target"])
    res = construct.any_evidence_reparameterization(target, n_grid=int(params.get("n_grid", 128)))
    return {"evidence": res.evidence, "sigma": res.sigma, "rel_error": res.rel_error, "iterations": res.iterations}


def _bf_generic(ctx, params, results):
    num, den = params["evidences"]
    from .evidence import EvidenceResult

    def er(name):
        o = results[name]
        return EvidenceResult(o["value"], o.get("err_est", 0.0), {}, name)

    rep = bayes_factor(er(num), er(den))
    return {"factor": rep.factor, "favored": rep.favored}


def _bf_transdim(ctx, params, results):
    bf = transdim.bayes_factors(geometry=params.get("geometry", "parallelogram"))
    return {
        "cartesian": bf["cartesian"].factor,
        "spherical": bf["spherical"].factor,
        "cartesian_favored": bf["cartesian"].favored,
        "spherical_favored": bf["spherical"].favored,
        "flip": bool(bf["flip"]),
        "reference_direction": bool(bf["reference_direction"]),
    }


def _cond_tomography(ctx, params, results):
    c = tomography_conditionals()
    lo, hi = c["feasible_v1"]
    n = int(params.get("n", 200))
    pad = 1e-6 * (hi - lo)
    grid = np.linspace(lo + pad, hi - pad, n)
    cv = c["cond_velocity_route"].unnorm(grid[:, None])
    cs = c["cond_slowness_route_in_v"].unnorm(grid[:, None])
    slope = float(np.polyfit(np.log(grid), np.log(cs), 1)[0])
    return {
        "velocity_flatness": float(cv.max() / cv.min() - 1.0),
        "slowness_slope": slope,
        "disagreement": disagreement_score(c["cond_velocity_route"], c["cond_slowness_route_in_v"], grid),
    }


def _cond_acausal_discrete(ctx, params, results):
    pl, pd = float(params["pi_lambda"]), float(params["pi_delta"])
    k1, k2 = (float(k) for k in params.get("k", (1.0, 2.0)))
    a, b = hier.discrete_hyper_marginals(pl, pd, k1), hier.discrete_hyper_marginals(pl, pd, k2)
    oracle = max(
        float(np.max(np.abs(hier.discrete_hyper_marginals(pl, pd, k)[key] - hier.discrete_hyper_marginals_quadrature(pl, pd, k)[key])))
        for k in (k1, k2)
        for key in ("lambda_normalized", "delta_normalized")
    )
    return {
        "lambda_k1": [float(v) for v in a["lambda_normalized"]],
        "lambda_k2": [float(v) for v in b["lambda_normalized"]],
        "lambda_change": float(np.max(np.abs(a["lambda_normalized"] - b["lambda_normalized"]))),
        "delta_change": float(np.max(np.abs(a["delta_normalized"] - b["delta_normalized"]))),
        "oracle_delta": oracle,
    }


def _mode_generic(ctx, params, results):
    p = ctx.get(params.get("density", ctx.scenario.prior_m), "density")
    t, _ = ctx.reparam(params["reparam"], "model")
    b = _box(params["box"]) if "box" in params else None
    bt = _box(params["box_transformed"]) if "box_transformed" in params else None
    a = modal.mode_invariance_audit(p, t, b, bt, int(params.get("n_grid", 64)))
    out = a.to_dict()
    out["value_transformed_max"] = out.pop("value_transformed")
    return out


def _mode_acausal_gaussian(ctx, params, results):
    a1 = hier.gaussian_hyper_argmax(1.0)
    a2 = hier.gaussian_hyper_argmax(2.0)
    return {"argmax_k1": list(a1), "argmax_k2": list(a2), "shift": float(np.max(np.abs(np.subtract(a1, a2))))}


def _tail_hier(ctx, params, results):
    case = hier.HierCase(params["case"])
    s = params.get("sigma", "optimum")
    sigma = hier.optimize_sigma(case).sigma if s == "optimum" else float(s)
    axis = int(params.get("axis", 1))
    thr = float(params["threshold"])
    (x0, x1), (y0, y1) = hier.posterior_support(case, sigma)
    lo, hi = ((x0, x1), (y0, y1))[axis]
    out = {"sigma": sigma, "prob": hier.posterior_tail(case, sigma, thr, axis), "support_lo": lo, "support_hi": hi}
    if case.case_id == "tan":
        out["normalizer"] = hier.posterior_m2_normalizer(case, sigma)
    return out


def _audit_model(ctx, params, results):
    t, support = ctx.reparam(params["reparam"], "model")
    v = audit_model_reparam_invariance(
        ctx.get(ctx.scenario.prior_d, "density"),
        ctx.get(ctx.scenario.prior_m, "density"),
        ctx.get(ctx.scenario.forward, "forward"),
        t,
        _audit_quad(ctx),
        support,
    )
    return _verdict_out(v)


def _audit_data(ctx, params, results):
    t, support = ctx.reparam(params["reparam"], "data")
    v = audit_data_reparam_invariance(
        ctx.get(ctx.scenario.prior_d, "density"),
        ctx.get(ctx.scenario.prior_m, "density"),
        ctx.get(ctx.scenario.forward, "forward"),
        t,
        _audit_quad(ctx),
        support,
    )
    return _verdict_out(v)


def _audit_quad(ctx) -> Optional[QuadratureSpec]:
    return ctx.quad if ctx.scenario.quad else None


def _verdict_out(v) -> dict:
    err = v.original.err_est + v.transformed.err_est
    return {
        "verdict": v.verdict,
        "original": v.original.value,
        "transformed": v.transformed.value,
        "delta": v.delta,
        "tolerance": v.tolerance,
        "separation": v.delta / err if err > 0 else math.inf,
        "engine": v.original.engine,
    }


def _audit_transport(ctx, params, results):
    n_grid = int(params.get("n_grid", 256))
    u1, u2 = Box([0.0], [1.0]), Box([0.0, 0.0], [1.0, 1.0])
    from .density import Density, pushforward

    lin = Density(1, u1, lambda x: 2 * np.asarray(x)[..., 0], 1.0, "2u")
    t1 = construct.triangular_transport(uniform_box(u1), lin, n_grid)
    x = np.linspace(0, 1, 101)[:, None]
    sqrt_err = float(np.max(np.abs(t1.forward_map(x)[:, 0] - np.sqrt(x[:, 0]))))
    ident = construct.triangular_transport(uniform_box(u2), uniform_box(u2), n_grid)
    pts = np.random.default_rng(ctx.scenario.seed).random((256, 2))
    ident_err = float(np.max(np.abs(ident.forward_map(pts) - pts)))
    bil = Density(2, u2, lambda x: 4 * np.asarray(x)[..., 0] * np.asarray(x)[..., 1], 1.0, "4uv")
    t2 = construct.triangular_transport(uniform_box(u2), bil, n_grid)
    q = pushforward(uniform_box(u2), t2, u2)
    g = (np.arange(50) + 0.5) / 50
    gg = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    sup = float(np.max(np.abs(q.pdf(gg) - bil.pdf(gg))))
    rt = float(np.max(np.abs(t2.inverse_map(t2.forward_map(pts)) - pts)))
    return {"sqrt_error": sqrt_err, "identity_error": ident_err, "pushforward_sup_error": sup, "round_trip_error": rt}


# (kind, method) -> (callable, scenario fields it needs)
_METHODS: dict[tuple[str, str], tuple[Callable, tuple[str, ...]]] = {
    ("evidence", "generic"): (_ev_generic, ("prior_d", "prior_m", "forward")),
    ("evidence", "transdim.cartesian"): (_ev_transdim_cartesian, ()),
    ("evidence", "transdim.spherical"): (_ev_transdim_spherical, ()),
    ("evidence", "transdim.closed_form"): (_ev_closed_form, ()),
    ("evidence", "hier.optimize_sigma"): (_ev_hier_sigma, ()),
    ("evidence", "hier.sigma_table"): (_ev_hier_table, ()),
    ("evidence", "construct.tube"): (_ev_tube, ()),
    ("evidence", "construct.any_evidence"): (_ev_any_evidence, ()),
    ("bayes_factor", "generic"): (_bf_generic, ()),
    ("bayes_factor", "transdim"): (_bf_transdim, ()),
    ("conditional", "tomography"): (_cond_tomography, ()),
    ("conditional", "acausal.discrete"): (_cond_acausal_discrete, ()),
    ("mode", "generic"): (_mode_generic, ("prior_m",)),
    ("mode", "acausal.gaussian"): (_mode_acausal_gaussian, ()),
    ("tail_prob", "hier"): (_tail_hier, ()),
    ("audit", "model"): (_audit_model, ("prior_d", "prior_m", "forward")),
    ("audit", "data"): (_audit_data, ("prior_d", "prior_m", "forward")),
    ("audit", "construct.transport"): (_audit_transport, ()),
}


# ------------------------------------------------------------------ sweeps


def _sw_hier(params, x):
    case = hier.HierCase(params["case"])
    v = hier.evidence_profile(case, x)
    return v, 4 * np.finfo(float).eps * abs(v)


def _sw_transdim_cart(params, x):
    case = transdim.TransdimCase(sigma=x)
    res = transdim.evidence_cartesian(int(params.get("k", 2)), case, params.get("geometry", "consistent"))
    return res.value, res.err_est


_SWEEPS: dict[str, Callable] = {"hier.profile": _sw_hier, "transdim.cartesian": _sw_transdim_cart}


def sweep(s: Scenario, param: str, lo: float, hi: float, steps: int) -> list[tuple[float, float, float]]:
    """Rows ``(param, value, err_est)`` over ``steps`` evenly spaced points."""
    if param not in s.sweeps:
        raise ValidationError(f"{s.id} has no sweep parameter {param!r}; known: {sorted(s.sweeps)}")
    if steps < 1:
        raise ValidationError("steps must be at least 1")
    sw = s.sweeps[param]
    fn = _SWEEPS[sw["method"]]
    xs = [lo] if steps == 1 else list(np.linspace(lo, hi, steps))
    rows = []
    for x in xs:
        v, e = fn(sw.get("params", {}), float(x))
        rows.append((float(x), float(v), float(e)))
    return rows


# ----------------------------------------------------------------- reports


@dataclass(frozen=True)
class Comparison:
    name: str
    observed: Any
    expected: Any
    delta: Optional[float]
    tol: Optional[float]
    cmp: str
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "observed": _jsonable(self.observed),
            "expected": _jsonable(self.expected),
            "delta": _jsonable(self.delta),
            "tol": _jsonable(self.tol),
            "cmp": self.cmp,
            "passed": self.passed,
        }


@dataclass
class AuditReport:
    scenario_id: str
    seed: int
    quad: dict
    results: list
    comparisons: list
    wall_time: float = 0.0

    @property
    def errors(self) -> list:
        return [r for r in self.results if r["error"] is not None]

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.comparisons)

    @property
    def verdicts(self) -> list:
        return [
            {"name": r["name"], "verdict": r["outputs"]["verdict"]}
            for r in self.results
            if r["kind"] == "audit" and r["outputs"] and "verdict" in r["outputs"]
        ]

    def to_dict(self, include_time: bool = False) -> dict:
        d = {
            "schema": SCHEMA_VERSION,
            "scenario": self.scenario_id,
            "seed": self.seed,
            "quad": self.quad,
            "results": [
                {
                    "name": r["name"],
                    "kind": r["kind"],
                    "method": r["method"],
                    "outputs": _jsonable(r["outputs"]),
                    "error": r["error"],
                }
                for r in self.results
            ],
            "verdicts": self.verdicts,
            "comparisons": [c.to_dict() for c in self.comparisons],
            "passed": self.passed,
        }
        if include_time:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, include_time: bool = False) -> str:
        return json.dumps(self.to_dict(include_time), indent=2, ensure_ascii=False) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    return v


def _lookup(results: dict, key: str):
    name, _, out = key.partition(".")
    outputs = results.get(name)
    if outputs is None or out not in outputs:
        return None
    return outputs[out]


def _parse_expected(v):
    if isinstance(v, list):
        return [_parse_expected(x) for x in v]
    if v in ("true", "false"):
        return v == "true"
    try:
        return float(v)
    except (TypeError, ValueError):
        return v


def _compare(key: str, exp: dict, observed, tol_scale: float = 1.0) -> Comparison:
    value = _parse_expected(exp["value"])
    cmp = exp.get("cmp", "eq")
    tol = float(exp["tol"]) * tol_scale if "tol" in exp else None
    rel = bool(exp.get("rel", False))
    if observed is None:
        return Comparison(key, None, value, None, tol, cmp, False)
    if isinstance(value, bool) or isinstance(value, str):
        return Comparison(key, observed, value, None, None, cmp, observed == value)
    obs = np.asarray(observed, dtype=float)
    ref = np.asarray(value, dtype=float)
    if cmp == "gt":
        return Comparison(key, observed, value, float(np.min(obs - ref)), None, cmp, bool(np.all(obs > ref)))
    if cmp == "lt":
        return Comparison(key, observed, value, float(np.max(obs - ref)), None, cmp, bool(np.all(obs < ref)))
    delta = float(np.max(np.abs(obs - ref)))
    if rel:
        delta = delta / float(np.max(np.abs(ref)))
    tol = 0.0 if tol is None else tol
    return Comparison(key, observed, value, delta, tol, cmp, delta <= tol)


def run(s: Scenario, seed: Optional[int] = None, tol_scale: float = 1.0) -> AuditReport:
    """Execute the requests in declaration order and compare golden values.

    A failing request records its error and the remaining requests still
    run. ``seed`` replaces the scenario seed and, for Monte Carlo, the
    quadrature seed.
    """
    if seed is not None:
        s = Scenario.from_dict({**s.to_dict(), "seed": int(seed)})
        if s.quad.get("engine") == "monte_carlo":
            s.quad = {**s.quad, "seed": int(seed)}
    ctx = validate(s)
    t0 = time.perf_counter()
    results, by_name = [], {}
    for req in s.requests:
        kind, name, method = req["kind"], req["name"], req.get("method", "generic")
        fn = _METHODS[(kind, method)][0]
        try:
            outputs = fn(ctx, req.get("params", {}), by_name)
            error = None
        except (AuditError, ArithmeticError, ValueError, KeyError) as exc:
            outputs, error = {}, f"{type(exc).__name__}: {exc}"
        by_name[name] = outputs
        results.append({"name": name, "kind": kind, "method": method, "outputs": outputs, "error": error})
    comps = [_compare(k, e, _lookup(by_name, k), tol_scale) for k, e in s.expected.items()]
    return AuditReport(s.id, s.seed, ctx.quad.to_dict(), results, comps, time.perf_counter() - t0)


# ---------------------------------------------------------------- registry


def _exp(value, tol=None, cmp=None, rel=False) -> dict:
    d = {"value": value}
    if tol is not None:
        d["tol"] = tol
    if cmp is not None:
        d["cmp"] = cmp
    if rel:
        d["rel"] = True
    return d


def _uniform(lo, hi) -> dict:
    return {"family": "uniform_box", "params": {"lo": list(lo), "hi": list(hi)}}


def _registry_dicts() -> list[dict]:
    tc = transdim.TransdimCase()
    dbox = tc.data_box
    hc = hier.HierCase("cart")
    h_sigma = 0.5
    shear = {"family": "affine", "params": {"matrix": [[1.0, 0.5], [0.0, 2.0]]}}
    hier_objects = {
        "p_d": _uniform(np.subtract(hc.d_obs, h_sigma).tolist(), np.add(hc.d_obs, h_sigma).tolist()),
        "p_m": _uniform([0.0, 0.0], [3.0, 3.0]),
        "g": {"family": "linear", "params": {"matrix": hc.G.tolist()}},
        "shear": shear,
        "tan": {"family": "tan_axis0", "params": {"dim": 3, "center": float(hc.d_obs[0])}},
    }
    inf_box = {"lo": ["-inf"] * 3, "hi": ["inf"] * 3}

    def hier_scenario(case_id, expected_sigma, extra_requests=(), extra_expected=None, reparams=None):
        reqs = [
            {"kind": "evidence", "name": "sigma_star", "method": "hier.optimize_sigma", "params": {"case": case_id}},
            {"kind": "audit", "name": "model_audit", "method": "model", "params": {"reparam": "shear"}},
            *extra_requests,
        ]
        return {
            "schema": 1,
            "id": f"hier:{case_id}",
            "description": f"Hierarchical noise-width selection, data coordinates '{case_id}'",
            "seed": 0,
            "objects": hier_objects,
            "prior_d": "p_d",
            "prior_m": "p_m",
            "forward": "g",
            "reparams": reparams or [{"ref": "shear", "space": "model"}],
            "quad": {},
            "requests": reqs,
            "sweeps": {"sigma": {"method": "hier.profile", "params": {"case": case_id}}},
            "expected": {**expected_sigma, "model_audit.verdict": _exp("PASS"), **(extra_expected or {})},
        }

    transdim_objects = {
        "p_d": _uniform(dbox.lo.tolist(), dbox.hi.tolist()),
        "p_m": _uniform([0.0, 0.0], [tc.dm, tc.dm]),
        "g2": {"family": "linear", "params": {"matrix": [list(r) for r in tc.G2]}},
        "shear": shear,
    }

    def transdim_base(sid, desc, reqs, expected):
        return {
            "schema": 1,
            "id": sid,
            "description": desc,
            "seed": 0,
            "objects": transdim_objects,
            "prior_d": "p_d",
            "prior_m": "p_m",
            "forward": "g2",
            "reparams": [{"ref": "shear", "space": "model"}],
            "quad": {},
            "requests": reqs + [{"kind": "audit", "name": "model_audit", "method": "model", "params": {"reparam": "shear"}}],
            "sweeps": {"sigma": {"method": "transdim.cartesian", "params": {"k": 2, "geometry": "consistent"}}},
            "expected": {**expected, "model_audit.verdict": _exp("PASS")},
        }

    ts = tomography_setup()
    out = [
        {
            "schema": 1,
            "id": "tomo:conditional",
            "description": "Conditional on v2 = v1 through velocity and slowness coordinates",
            "seed": 0,
            "objects": {
                "p_d": _uniform(ts.data_box.lo.tolist(), ts.data_box.hi.tolist()),
                "p_v": _uniform(ts.model_box.lo.tolist(), ts.model_box.hi.tolist()),
                "g_v": {"family": "tomography_velocity", "params": {}},
                "recip": {"family": "reciprocal", "params": {"dim": 2}},
            },
            "prior_d": "p_d",
            "prior_m": "p_v",
            "forward": "g_v",
            "reparams": [{"ref": "recip", "space": "model"}],
            "quad": {},
            "requests": [
                {"kind": "conditional", "name": "cond", "method": "tomography", "params": {"n": 200}},
                {"kind": "audit", "name": "model_audit", "method": "model", "params": {"reparam": "recip"}},
            ],
            "sweeps": {},
            "expected": {
                "cond.velocity_flatness": _exp("1e-9", cmp="lt"),
                "cond.slowness_slope": _exp("2.000", "0.001"),
                "cond.disagreement": _exp("0.01", cmp="gt"),
                "model_audit.verdict": _exp("PASS"),
            },
        },
        {
            "schema": 1,
            "id": "map:lognormal_hyperbolic",
            "description": "Mode of a log-normal product before and after the hyperbolic map",
            "seed": 0,
            "objects": {
                "f": {"family": "lognormal_product", "params": {"mu": [1.0, 1.0], "sigma": [1.0, 1.0]}},
                "T": {"family": "hyperbolic_Trho", "params": {}},
            },
            "prior_d": None,
            "prior_m": "f",
            "forward": None,
            "reparams": [{"ref": "T", "space": "model"}],
            "quad": {},
            "requests": [
                {
                    "kind": "mode",
                    "name": "mode",
                    "method": "generic",
                    "params": {"reparam": "T", "box": {"lo": [0.05, 0.05], "hi": [6.0, 6.0]}, "n_grid": 64},
                }
            ],
            "sweeps": {},
            "expected": {
                "mode.mode_original": _exp(["1", "1"], "1e-3"),
                "mode.mode_back_mapped": _exp(["1.6487", "1.6487"], "1e-3"),
                "mode.value_original": _exp("0.0585", "5e-4"),
                "mode.value_original_at_back_mapped": _exp("0.0456", "5e-4"),
                "mode.verdict": _exp("FAIL"),
            },
        },
        hier_scenario(
            "cart",
            {"sigma_star.sigma": _exp("0.466667", "1e-5"), "sigma_star.closed_form_delta": _exp("1e-12", cmp="lt")},
        ),
        hier_scenario(
            "tan",
            {"sigma_star.sigma": _exp("1.02932", "1e-3"), "sigma_star.flag": _exp("interior")},
            extra_requests=[{"kind": "audit", "name": "data_audit", "method": "data", "params": {"reparam": "tan"}}],
            extra_expected={"data_audit.verdict": _exp("FAIL"), "data_audit.separation": _exp("10", cmp="gt")},
            reparams=[{"ref": "shear", "space": "model"}, {"ref": "tan", "space": "data", "support": inf_box}],
        ),
        hier_scenario(
            "square",
            {"sigma_star.sigma": _exp("1.5", "1e-9"), "sigma_star.flag": _exp("boundary_singular")},
        ),
        {
            "schema": 1,
            "id": "hier:decision",
            "description": "Tail probability of m2 under the evidence-selected noise width",
            "seed": 0,
            "objects": {},
            "prior_d": None,
            "prior_m": None,
            "forward": None,
            "reparams": [],
            "quad": {},
            "requests": [
                {"kind": "evidence", "name": "sigmas", "method": "hier.sigma_table", "params": {}},
                {
                    "kind": "tail_prob",
                    "name": "case1",
                    "method": "hier",
                    "params": {"case": "cart", "sigma": "optimum", "threshold": 1.6, "axis": 1},
                },
                {
                    "kind": "tail_prob",
                    "name": "case1_m1",
                    "method": "hier",
                    "params": {"case": "cart", "sigma": "optimum", "threshold": 1.6, "axis": 0},
                },
                {
                    "kind": "tail_prob",
                    "name": "case2",
                    "method": "hier",
                    "params": {"case": "tan", "sigma": 1.02932, "threshold": 1.6, "axis": 1},
                },
            ],
            "sweeps": {},
            "expected": {
                "sigmas.min_pairwise_gap": _exp("0.3", cmp="gt"),
                "case1.prob": _exp("0", "0"),
                "case1.support_hi": _exp("1.566667", "1e-6"),
                "case1_m1.prob": _exp("0", "0"),
                "case1_m1.support_hi": _exp("1.566667", "1e-6"),
                "case2.prob": _exp("0.107", "0.002"),
                "case2.normalizer": _exp("1.689", "0.005"),
            },
        },
        transdim_base(
            "transdim:cart",
            "One- and two-parameter linear models, Cartesian data coordinates",
            [
                {"kind": "evidence", "name": "E1", "method": "transdim.cartesian", "params": {"k": 1}},
                {"kind": "evidence", "name": "E2", "method": "transdim.cartesian", "params": {"k": 2, "geometry": "parallelogram"}},
                {"kind": "bayes_factor", "name": "B", "method": "generic", "params": {"evidences": ["E2", "E1"]}},
            ],
            {
                "E1.value": _exp("0.146484375", "1e-9"),
                "E2.value": _exp("0.234375", "1e-9"),
                "B.factor": _exp("2.133333", "1e-6"),
            },
        ),
        transdim_base(
            "transdim:sph",
            "One- and two-parameter linear models, spherical data coordinates",
            [
                {"kind": "evidence", "name": "E1", "method": "transdim.spherical", "params": {"k": 1}},
                {"kind": "evidence", "name": "E2", "method": "transdim.spherical", "params": {"k": 2, "geometry": "parallelogram"}},
                {"kind": "bayes_factor", "name": "B", "method": "generic", "params": {"evidences": ["E2", "E1"]}},
                {"kind": "evidence", "name": "closed_form", "method": "transdim.closed_form", "params": {}},
            ],
            {
                "E1.closed_form_ratio": _exp("1", "1e-9"),
                "E2.integral": _exp("8.58922077", "1e-4", rel=True),
                "B.factor": _exp("0.68734901", "1e-4"),
                "closed_form.rel_diff": _exp("1e-5", cmp="lt"),
                "closed_form.min_log_arg": _exp("0", cmp="gt"),
            },
        ),
        transdim_base(
            "transdim:flip",
            "Bayes factors under both data coordinates",
            [
                {"kind": "bayes_factor", "name": "parallelogram", "method": "transdim", "params": {"geometry": "parallelogram"}},
                {"kind": "bayes_factor", "name": "consistent", "method": "transdim", "params": {"geometry": "consistent"}},
            ],
            {
                "parallelogram.cartesian": _exp("2.133333", "1e-6"),
                "parallelogram.spherical": _exp("0.68734901", "1e-4"),
                "parallelogram.flip": _exp("true"),
                "consistent.flip": _exp("true"),
            },
        ),
        {
            "schema": 1,
            "id": "acausal:discrete",
            "description": "Discrete hyperparameter posteriors before and after a change of the forward scale k",
            "seed": 0,
            "objects": {},
            "prior_d": None,
            "prior_m": None,
            "forward": None,
            "reparams": [],
            "quad": {},
            "requests": [
                {
                    "kind": "conditional",
                    "name": "marginals",
                    "method": "acausal.discrete",
                    "params": {"pi_lambda": 0.5, "pi_delta": 0.5, "k": [1.0, 2.0]},
                }
            ],
            "sweeps": {},
            "expected": {
                "marginals.lambda_change": _exp("1e-3", cmp="gt"),
                "marginals.delta_change": _exp("1e-3", cmp="gt"),
                "marginals.oracle_delta": _exp("1e-4", cmp="lt"),
            },
        },
        {
            "schema": 1,
            "id": "acausal:gaussian",
            "description": "Grid argmax of the Gaussian hyperparameter posterior for k = 1 and k = 2",
            "seed": 0,
            "objects": {},
            "prior_d": None,
            "prior_m": None,
            "forward": None,
            "reparams": [],
            "quad": {},
            "requests": [{"kind": "mode", "name": "argmax", "method": "acausal.gaussian", "params": {}}],
            "sweeps": {},
            "expected": {"argmax.shift": _exp("0.05", cmp="gt")},
        },
        {
            "schema": 1,
            "id": "construct:tube",
            "description": "Unit-mass tube around a line with a prescribed naive submanifold integral",
            "seed": 0,
            "objects": {},
            "prior_d": None,
            "prior_m": None,
            "forward": None,
            "reparams": [],
            "quad": {},
            "requests": [
                {
                    "kind": "evidence",
                    "name": "tube",
                    "method": "construct.tube",
                    "params": {"slope": 0.5, "offset": 0.25, "target": 3.0, "measure": "surface"},
                }
            ],
            "sweeps": {},
            "expected": {"tube.rel_error": _exp("0.02", cmp="lt"), "tube.mass": _exp("1", "2e-3")},
        },
        {
            "schema": 1,
            "id": "construct:transport",
            "description": "Triangular transport from the uniform density",
            "seed": 0,
            "objects": {},
            "prior_d": None,
            "prior_m": None,
            "forward": None,
            "reparams": [],
            "quad": {},
            "requests": [{"kind": "audit", "name": "transport", "method": "construct.transport", "params": {"n_grid": 256}}],
            "sweeps": {},
            "expected": {
                "transport.pushforward_sup_error": _exp("5e-3", cmp="lt"),
                "transport.identity_error": _exp("1e-9", cmp="lt"),
                "transport.sqrt_error": _exp("1e-9", cmp="lt"),
            },
        },
        {
            "schema": 1,
            "id": "construct:any_evidence",
            "description": "Data reparameterization giving the two-parameter model a chosen evidence",
            "seed": 0,
            "objects": {},
            "prior_d": None,
            "prior_m": None,
            "forward": None,
            "reparams": [],
            "quad": {},
            "requests": [
                {"kind": "evidence", "name": "target_a", "method": "construct.any_evidence", "params": {"target": 0.234375}},
                {"kind": "evidence", "name": "target_b", "method": "construct.any_evidence", "params": {"target": 1.0}},
            ],
            "sweeps": {},
            "expected": {"target_a.rel_error": _exp("0.02", cmp="lt"), "target_b.rel_error": _exp("0.02", cmp="lt")},
        },
    ]
    return out


def registry() -> list[Scenario]:
    """Built-in scenarios, in id order."""
    return sorted((Scenario.from_dict(d) for d in _registry_dicts()), key=lambda s: s.id)


def get(scenario_id: str) -> Scenario:
    for s in registry():
        if s.id == scenario_id:
            return s
    raise KeyError(scenario_id)
