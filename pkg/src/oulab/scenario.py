"""Scenario files, the experiment registry, and the run report.

A scenario is a JSON object::

    {"model": {...} | "preset": "name" | {"name": ..., <params>},
     "experiments": [{"kind": ..., <params>, "tolerance": ...}, ...],
     "seed": 0, "output_dir": "out"}

Omitting ``experiments`` with a preset runs the preset battery; an empty list
runs the derivation only. ``report.json`` is deterministic apart from
``wall_time_s``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .calculus import (
    VectorTestFunction,
    adjointness_defect,
    b_form_defect,
    cosine_ridge,
    form_identity_defect,
    grad_H,
    grad_H_field,
    tanh_ridge,
)
from .inequality import (
    REPORT_COLUMNS,
    dhstar_poincare,
    duality_convergence,
    duality_identity_defect,
    gaussian_abs_moment_root,
    gradient_estimate_scan,
    lp_norm,
    poincare_ratio,
    sharpness_search,
    weighted_norm_counterexample,
)
from .model import AssumptionFailure, DerivedModel, ModelSpec, check_theorem_conditions, derive
from .polynomial import Polynomial, linear_form, random_polynomial
from .presets import PRESETS, build_preset
from .sampling import Budget, set_threads
from .sector import (
    NotSectorialError,
    SectorialMatrix,
    contour_resolvent,
    convergence_study,
    kron_sum_resolvent_oracle,
)
from .semigroup import (
    GaussianMeasure,
    apply_tensor_P,
    chaos_eigencheck,
    chaos_eigenfunction,
    decay_scan,
    invariance_defect,
    mehler_polynomial,
)

__all__ = ["ConfigError", "RunReport", "EXPERIMENTS", "load_config", "run", "run_resolvent", "jsonable",
           "EXIT_OK", "EXIT_TOLERANCE", "EXIT_PARSE", "EXIT_ASSUMPTION"]

EXIT_OK, EXIT_TOLERANCE, EXIT_PARSE, EXIT_ASSUMPTION = 0, 1, 2, 3


class ConfigError(ValueError):
    """The scenario file does not parse or does not match the schema."""


# JSON helpers -----------------------------------------------------------------------

def jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings ``inf``/``-inf``/``nan``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    return obj


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# experiment plumbing -------------------------------------------------------------------

@dataclass
class Outcome:
    results: dict
    passed: bool | None = None
    scheme: str = "exact"
    seed: int | None = None
    tables: dict = field(default_factory=dict)  # suffix -> (header, rows)


@dataclass
class Context:
    dm: DerivedModel
    seed: int


def _seed(ctx: Context, params: dict) -> int:
    return int(params.get("seed", ctx.seed))


def _budget(ctx: Context, params: dict, default_scheme: str = "mc") -> Budget:
    return Budget(scheme=params.get("scheme", default_scheme), n_samples=int(params.get("n_samples", 100_000)),
                  seed=_seed(ctx, params), order=params.get("order"), replicates=int(params.get("replicates", 16)))


def _slowest_direction(dm: DerivedModel) -> np.ndarray:
    from scipy.linalg import eigh

    if dm.full_noise:
        _, V = eigh(dm.Qinf, dm.Q)
        u = V[:, -1]
    else:
        u = np.linalg.eigh(dm.Qinf)[1][:, -1]
    u = u / np.linalg.norm(u)
    return u * np.sign(u[np.argmax(np.abs(u))])


def _named_function(dm: DerivedModel, name: str):
    d = dm.d
    e0 = np.eye(d)[0]
    if name == "linear":
        return linear_form(e0, d)
    if name == "linear-slowest":
        return linear_form(_slowest_direction(dm), d)
    if name == "square":
        return Polynomial.variable(0, d) ** 2
    if name == "cubic":
        return Polynomial.variable(0, d) ** 3
    if name == "cos":
        return cosine_ridge(e0, label="cos")
    if name == "tanh":
        return tanh_ridge(e0, steepness=5.0, label="tanh")
    if name.startswith("hermite-slowest-"):
        n = int(name.rsplit("-", 1)[1])
        return chaos_eigenfunction(dm, [0] * (d - 1) + [n])[0]
    raise ConfigError(f"unknown test function {name!r}")


def _family(dm: DerivedModel, specs, seed: int) -> list[tuple[str, Any]]:
    out = []
    rng = np.random.default_rng(seed)
    for spec in specs:
        if isinstance(spec, str):
            out.append((spec, _named_function(dm, spec)))
        elif isinstance(spec, dict) and "random" in spec:
            opts = spec["random"]
            nvar = min(int(opts.get("variables", dm.d)), dm.d)
            for k in range(int(opts.get("count", 4))):
                deg = 1 + k % int(opts.get("degree", 3))
                g = random_polynomial(rng, dm.d, deg, density=0.7, variables=range(nvar))
                out.append((f"random-deg{deg}-{k}", g))
        else:
            raise ConfigError(f"bad function family entry {spec!r}")
    return out


def _random_pairs(dm: DerivedModel, params: dict, seed: int, n_default: int = 4):
    rng = np.random.default_rng(seed)
    deg = int(params.get("degree", 3))
    nvar = min(int(params.get("variables", dm.d)), dm.d)
    for _ in range(int(params.get("count", n_default))):
        yield (random_polynomial(rng, dm.d, deg, density=0.7, variables=range(nvar)),
               random_polynomial(rng, dm.d, deg, density=0.7, variables=range(nvar)))


def _le(value: float, tol) -> bool | None:
    return None if tol is None else bool(value <= tol)


# experiments ------------------------------------------------------------------------------

def exp_conditions(ctx: Context, params: dict, tol) -> Outcome:
    rep = check_theorem_conditions(ctx.dm)
    return Outcome({"entries": rep.to_dict(), "all_hold": rep.all_hold},
                   passed=None if tol is None else rep.all_hold)


def exp_b_structure(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    dm.require_full_noise()
    defect = float(np.linalg.norm(dm.B + dm.B.T + np.eye(dm.m), 2))
    lyap = float(np.linalg.norm(dm.A @ dm.Qinf + dm.Qinf @ dm.A.T + dm.Q, 2))
    return Outcome({"B_plus_BT_plus_I": defect, "lyapunov_residual": lyap}, passed=_le(defect, tol))


def exp_form_identity(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    rows = []
    for k, (f, g) in enumerate(_random_pairs(dm, params, _seed(ctx, params), 6)):
        bf = b_form_defect(dm, f, g) if dm.full_noise else math.nan
        rows.append([k, form_identity_defect(dm, f, g), bf])
    worst_form = max(r[1] for r in rows)
    worst_b = max((r[2] for r in rows if not math.isnan(r[2])), default=math.nan)
    worst = max(worst_form, 0.0 if math.isnan(worst_b) else worst_b)
    return Outcome({"max_form_defect": worst_form, "max_b_form_defect": worst_b, "pairs": len(rows)},
                   passed=_le(worst, tol), seed=_seed(ctx, params),
                   tables={"": (("pair", "form_defect", "b_form_defect"), rows)})


def _ratio_scheme(f, p) -> str:
    return "exact" if isinstance(f, Polynomial) and float(p).is_integer() and int(p) % 2 == 0 else "mc"


def exp_poincare(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    ps = params.get("p", 2)
    ps = ps if isinstance(ps, list) else [ps]
    fam = _family(dm, params.get("functions", ["linear-slowest"]), _seed(ctx, params))
    reports = []
    for p in ps:
        for label, f in fam:
            scheme = params.get("scheme") or _ratio_scheme(f, p)
            b = _budget(ctx, params, scheme)
            reports.append(poincare_ratio(dm, f, float(p), b, label=label))
    ok = all(r.bound is None or float(r.ratio.value) <= r.bound * (1 + (tol or 0.0)) + 3 * float(r.ratio.stderr)
             for r in reports) and all(math.isfinite(float(r.ratio.value)) for r in reports)
    schemes = sorted({r.ratio.scheme for r in reports})
    return Outcome({"reports": [r.to_dict() for r in reports],
                    "bound_p2": None if dm.omega <= 0 else 1 / math.sqrt(2 * dm.omega)},
                   passed=None if tol is None else ok, scheme="+".join(schemes), seed=_seed(ctx, params),
                   tables={"": (REPORT_COLUMNS, [r.csv_row() for r in reports])})


def exp_sharpness(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    p = float(params.get("p", 2))
    scheme = "exact" if p.is_integer() and int(p) % 2 == 0 else "mc"
    res = sharpness_search(dm, p, int(params.get("degree_cap", 4)), int(params.get("n_random", 8)),
                           _budget(ctx, params, scheme), seed=_seed(ctx, params))
    expected = gaussian_abs_moment_root(p) / math.sqrt(2 * dm.omega) if dm.omega > 0 else math.inf
    gap = abs(float(res.best.ratio.value) - expected) / expected if math.isfinite(expected) else math.inf
    passed = None if tol is None else bool(gap <= tol and res.attained_by_linear and res.within_bound is not False)
    return Outcome({**res.to_dict(), "expected_linear_max": expected, "relative_gap": gap},
                   passed=passed, scheme=scheme, seed=_seed(ctx, params),
                   tables={"": (REPORT_COLUMNS, [r.csv_row() for r in res.reports])})


def exp_intertwining(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    dm.require_full_noise()
    seed = _seed(ctx, params)
    rng = np.random.default_rng(seed)
    X = GaussianMeasure.invariant(dm).sample(rng, int(params.get("n_points", 16)))
    rows = []
    for k, (g, _) in enumerate(_random_pairs(dm, params, seed, 3)):
        field_ = grad_H_field(g, dm.i)
        for t in params.get("times", [0.1, 0.5, 1.0, 2.0]):
            lhs = grad_H(mehler_polynomial(dm, float(t), g), X, dm.i)
            rhs = apply_tensor_P(dm, float(t), field_, X).value
            rows.append([k, float(t), float(np.max(np.abs(lhs - rhs)))])
    worst = max(r[2] for r in rows)
    return Outcome({"max_defect": worst}, passed=_le(worst, tol), seed=seed,
                   tables={"": (("function", "t", "defect"), rows)})


def exp_invariance(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    t = float(params.get("t", 1.0))
    seed = _seed(ctx, params)
    exact = [abs(float(invariance_defect(dm, t, f).value)) for f, _ in _random_pairs(dm, params, seed, 4)]
    out = {"max_exact_defect": max(exact)}
    ok = _le(max(exact), tol)
    scheme = "exact"
    if params.get("mc_samples"):
        est = invariance_defect(dm, t, cosine_ridge(np.eye(dm.d)[0]),
                                Budget("mc", int(params["mc_samples"]), seed))
        out["mc_defect"] = est.to_dict()
        out["mc_within_4_stderr"] = bool(abs(est.value) <= 4 * est.stderr)
        ok = None if ok is None else (ok and out["mc_within_4_stderr"])
        scheme = "exact+mc"
    return Outcome(out, passed=ok, scheme=scheme, seed=seed)


def exp_dhstar(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    p = float(params.get("p", 2))
    seed = _seed(ctx, params)
    rows, adj = [], []
    for k, (g, f) in enumerate(_random_pairs(dm, params, seed, 4)):
        if g.is_constant():
            continue
        scheme = "exact" if p.is_integer() and int(p) % 2 == 0 else "mc"
        rep = dhstar_poincare(dm, g, p, _budget(ctx, params, scheme), label=f"grad-field-{k}")
        rows.append(rep.csv_row())
        adj.append(adjointness_defect(dm, f, grad_H_field(g, dm.i)))
    ratios = [float(r[2]) for r in rows]
    ok = all(math.isfinite(r) for r in ratios) and (tol is None or max(adj) <= tol)
    return Outcome({"empirical_constant": max(ratios), "ratios": ratios, "max_adjointness_defect": max(adj)},
                   passed=None if tol is None else ok, seed=seed,
                   tables={"": (REPORT_COLUMNS, rows)})


def exp_duality(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    seed = _seed(ctx, params)
    f, g = next(_random_pairs(dm, {"degree": params.get("degree", 2), "count": 1}, seed, 1))
    t = float(params.get("t", 1.0))
    steps = int(params.get("steps", 256))
    rule = params.get("rule", "simpson")
    defect = duality_identity_defect(dm, f, g, t, steps, rule)
    halving = params.get("halving_steps")
    if halving is None:
        # start where the step resolves the fastest mode present in P(s)g
        fastest = max(g.degree, 1) * float(np.linalg.norm(dm.A, 2)) * t
        n0 = max(4, 2 ** math.ceil(math.log2(max(fastest, 1.0))))
        halving = (n0, 2 * n0, 4 * n0, 8 * n0)
    conv = duality_convergence(dm, f, g, t, tuple(halving), "midpoint")
    min_order = min(conv["orders"])
    passed = None if tol is None else bool(defect <= tol and min_order >= float(params.get("min_order", 1.9)))
    rows = [[n, e] for n, e in zip(conv["steps"], conv["defects"])]
    return Outcome({"defect": defect, "steps": steps, "rule": rule, "convergence": conv, "min_order": min_order},
                   passed=passed, seed=seed, tables={"": (("steps", "midpoint_defect"), rows)})


def exp_gradient_scan(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    q = float(params.get("q", 2))
    times = params.get("times", [0.01, 0.05, 0.25, 0.5, 1.0])
    rows, scans = [], []
    for label, f in _family(dm, params.get("functions", ["linear"]), _seed(ctx, params)):
        scheme = _ratio_scheme(f, q)
        scan = gradient_estimate_scan(dm, f, q, times, _budget(ctx, params, scheme), label=label)
        scans.append(scan)
        rows += [[label, t, float(e.value), float(e.stderr)] for t, e in scan.rows]
    factor = 3.0 if tol is None else float(tol)
    bounded = [s.bounded(factor) for s in scans]
    return Outcome({"scans": [{**s.to_dict(), "bounded": b} for s, b in zip(scans, bounded)],
                    "constant": max(s.constant for s in scans)},
                   passed=None if tol is None else all(bounded),
                   scheme="+".join(sorted({e.scheme for s in scans for _, e in s.rows})), seed=_seed(ctx, params),
                   tables={"": (("label", "t", "value", "stderr"), rows)})


def exp_chaos(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    t = float(params.get("t", 0.7))
    rows = []
    for idx in params.get("indices", [[1] * dm.d]):
        _, kappa = chaos_eigenfunction(dm, idx)
        rows.append([" ".join(map(str, idx)), kappa, chaos_eigencheck(dm, idx, t, seed=_seed(ctx, params))])
    worst = max(r[2] for r in rows)
    return Outcome({"max_defect": worst, "rows": rows}, passed=_le(worst, tol), seed=_seed(ctx, params),
                   tables={"": (("index", "exponent", "defect"), rows)})


def exp_decay_scan(ctx: Context, params: dict, tol) -> Outcome:
    dm = ctx.dm
    name = params.get("function", "linear-slowest")
    f = _named_function(dm, name)
    p = float(params.get("p", 2))
    exact = isinstance(f, Polynomial) and p.is_integer() and int(p) % 2 == 0
    scan = decay_scan(dm, f, p, params.get("times", [0.0, 0.25, 0.5, 1.0]),
                      "exact" if exact else _budget(ctx, params), label=name)
    expected = None
    if name == "linear-slowest" and p == 2:
        expected = dm.omega
    elif name.startswith("hermite-slowest-") and p == 2:
        expected = int(name.rsplit("-", 1)[1]) * dm.omega
    out = scan.to_dict()
    out["expected_rate"] = expected
    if expected:
        out["relative_rate_error"] = abs(scan.rate - expected) / expected
        passed = _le(out["relative_rate_error"], tol)
    else:
        passed = None if tol is None else scan.decay_ok
    rows = [[t, float(e.value), float(e.stderr)] for t, e in scan.rows]
    return Outcome(out, passed=passed, scheme="exact" if exact else "mc",
                   seed=None if exact else _seed(ctx, params), tables={"": (("t", "norm", "stderr"), rows)})


def exp_lp_ratios(ctx: Context, params: dict, tol) -> Outcome:
    """Suprema of Poincare ratios over a family, checked under sample doubling."""
    dm = ctx.dm
    ps = params.get("p", [4 / 3, 2, 4])
    fam = _family(dm, params.get("functions", ["linear", "square", "cos"]), _seed(ctx, params))
    base = _budget(ctx, params, params.get("scheme", "mc"))
    k = 2.0 if tol is None else float(tol)
    rows, sups = [], []
    for p in ps:
        best = {}
        for b in (base, base.doubled()):
            reps = [poincare_ratio(dm, f, float(p), b, label=label) for label, f in fam]
            top = max(reps, key=lambda r: float(r.ratio.value))
            best[b.n_samples] = top
            rows += [r.csv_row() for r in reps]
        r1, r2 = best[base.n_samples], best[2 * base.n_samples]
        v1, v2 = float(r1.ratio.value), float(r2.ratio.value)
        se = float(r1.ratio.stderr)
        stable = bool(math.isfinite(v1) and abs(v2 - v1) <= k * se + 1e-12 * abs(v1))
        sups.append({"p": p, "sup": v1, "stderr": se, "sup_doubled": v2, "argmax": r1.function_label,
                     "relative_change": abs(v2 - v1) / v1 if v1 else 0.0, "stable": stable})
    return Outcome({"suprema": sups}, passed=None if tol is None else all(s["stable"] for s in sups),
                   scheme=base.scheme, seed=base.seed, tables={"": (REPORT_COLUMNS, rows)})


def exp_counterexample(ctx: Context, params: dict, tol) -> Outcome:
    res = weighted_norm_counterexample(int(params.get("dim", 20)), float(params.get("omega", 1.0)),
                                       float(params.get("t0", 0.1)), params.get("r_grid"))
    passed = None if tol is None else bool(res.found and res.stable and res.growth > float(tol))
    return Outcome(res.to_dict(), passed=passed, tables={"": (("r", "growth"), res.sweep)})


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    return complex(float(v))


def exp_resolvent(ctx: Context | None, params: dict, tol) -> Outcome:
    A = np.asarray(params["A"], dtype=float)
    B = np.asarray(params["B"], dtype=float)
    Asec = SectorialMatrix.certified(A, float(params.get("theta_A", 0.1)))
    Bsec = SectorialMatrix.certified(B, float(params.get("theta_B", 0.1)))
    lam = _complex(params.get("lam", [-1.0, 2.0]))
    R = params.get("R")
    R = math.inf if R is None else float(R)
    nodes = int(params.get("nodes", 400))
    res = contour_resolvent(Asec, Bsec, lam, nodes_per_segment=nodes, R=R, r=params.get("r"))
    oracle = kron_sum_resolvent_oracle(A, B, lam)
    rel = float(np.linalg.norm(res.value - oracle, 2) / np.linalg.norm(oracle, 2))
    lam2 = _complex(params.get("lam2", [lam.real - 0.5, lam.imag + 0.5]))
    res2 = contour_resolvent(Asec, Bsec, lam2, nodes_per_segment=nodes, R=R, r=params.get("r"))
    ident = res.value - res2.value - (lam2 - lam) * res.value @ res2.value
    ident_defect = float(np.linalg.norm(ident, 2))
    conj = contour_resolvent(Asec, Bsec, lam.conjugate(), nodes_per_segment=nodes, R=R, r=params.get("r"))
    conj_defect = float(np.linalg.norm(conj.value - res.value.conj(), 2))
    out = {"lam": lam, "relative_error": rel, "residual": res.residual(A, B), "tail_bound": res.tail_bound,
           "warning": res.warning, "distance": res.distance, "resolvent_identity_defect": ident_defect,
           "conjugation_defect": conj_defect, "nodes": nodes, "R": R,
           "certificates": {"A": Asec.certificate.bound, "B": Bsec.certificate.bound}}
    tables = {}
    if params.get("study"):
        study = convergence_study(Asec, Bsec, lam, tuple(params.get("node_schedule", (25, 50, 100, 200, 400))))
        out["study"] = {"final_error": study.final_error, "nodes_monotone": study.nodes_monotone,
                        "R_monotone": study.R_monotone,
                        "rows": [{"nodes": r.nodes, "R": r.R, "error": r.error, "tail_bound": r.tail_bound}
                                 for r in study.rows]}
        tables["_study"] = (study.header, [r.as_row() for r in study.rows])
    passed = None if tol is None else bool(rel <= tol)
    return Outcome(out, passed=passed, tables=tables)


EXPERIMENTS: dict[str, Callable[[Context, dict, Any], Outcome]] = {
    "conditions": exp_conditions,
    "b_structure": exp_b_structure,
    "form_identity": exp_form_identity,
    "poincare": exp_poincare,
    "sharpness": exp_sharpness,
    "intertwining": exp_intertwining,
    "invariance": exp_invariance,
    "dhstar": exp_dhstar,
    "duality": exp_duality,
    "gradient_scan": exp_gradient_scan,
    "chaos": exp_chaos,
    "decay_scan": exp_decay_scan,
    "lp_ratios": exp_lp_ratios,
    "counterexample": exp_counterexample,
    "resolvent": exp_resolvent,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "label": {"type": "string"},
        "model": {"type": "object", "required": ["A", "i"]},
        "preset": {"oneOf": [{"type": "string"},
                             {"type": "object", "required": ["name"], "properties": {"name": {"type": "string"}}}]},
        "experiments": {"type": "array", "items": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": sorted(EXPERIMENTS)}, "tolerance": {"type": ["number", "null"]},
                           "seed": {"type": "integer"}}}},
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
    },
    "oneOf": [{"required": ["model"]}, {"required": ["preset"]}],
    "additionalProperties": False,
}


def load_config(source) -> dict:
    """Parse and validate a scenario from a path or a dict."""
    if isinstance(source, dict):
        cfg = source
    else:
        try:
            cfg = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scenario {source}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"scenario does not match schema: {exc.message}") from exc
    return cfg


def _resolve_model(cfg: dict) -> tuple[ModelSpec, list]:
    try:
        if "model" in cfg:
            return ModelSpec.from_json(cfg["model"]), []
        preset = cfg["preset"]
        if isinstance(preset, str):
            return build_preset(preset)
        params = {k: v for k, v in preset.items() if k != "name"}
        return build_preset(preset["name"], **params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class RunReport:
    label: str
    data: dict
    exit_code: int
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {**self.data, "exit_code": self.exit_code, "wall_time_s": self.wall_time_s}

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "report.json"
        path.write_text(json.dumps(jsonable(self.to_dict()), indent=2) + "\n")
        return path


def _out_dir(cfg: dict, out) -> Path:
    return Path(out if out is not None else cfg.get("output_dir", "ou_lab_out"))


def run(source, *, seed: int | None = None, out=None, threads: int | None = None,
        derivation_only: bool = False) -> RunReport:
    """Execute a scenario and write ``report.json`` plus per-experiment CSVs."""
    t0 = time.perf_counter()
    if threads is not None:
        set_threads(threads)
    try:
        cfg = load_config(source)
        spec, preset_exps = _resolve_model(cfg)
    except ConfigError as exc:
        rep = RunReport("", {"tool": "oulab", "version": __version__, "error": {"type": "ConfigError",
                                                                                "message": str(exc)}}, EXIT_PARSE)
        return rep
    out_dir = _out_dir(cfg, out)
    base_seed = int(seed if seed is not None else cfg.get("seed", 0))
    label = cfg.get("label") or spec.label
    data: dict[str, Any] = {"tool": "oulab", "version": __version__, "scenario": label, "seed": base_seed,
                            "model": spec.to_json()}
    try:
        dm = derive(spec)
    except AssumptionFailure as exc:
        data["error"] = {"type": "AssumptionFailure", "message": str(exc)}
        rep = RunReport(label, data, EXIT_ASSUMPTION, time.perf_counter() - t0)
        rep.write(out_dir)
        return rep
    data["derivation"] = dm.summary()
    data["conditions"] = check_theorem_conditions(dm).to_dict()
    experiments = [] if derivation_only else cfg.get("experiments", preset_exps)
    ctx = Context(dm=dm, seed=base_seed)
    records = []
    failed = False
    out_dir.mkdir(parents=True, exist_ok=True)
    for index, exp in enumerate(experiments):
        kind = exp["kind"]
        params = {k: v for k, v in exp.items() if k not in ("kind", "tolerance")}
        tol = exp.get("tolerance")
        record: dict[str, Any] = {"index": index, "kind": kind, "params": params, "tolerance": tol}
        try:
            res = EXPERIMENTS[kind](ctx, params, tol)
        except (ValueError, TypeError, NotSectorialError, KeyError) as exc:
            record.update({"seed": _seed(ctx, params), "scheme": None, "passed": False,
                           "error": {"type": type(exc).__name__, "message": str(exc)}})
            failed = True
            records.append(record)
            continue
        files = []
        for suffix, (header, rows) in res.tables.items():
            name = f"{index:02d}_{kind}{suffix}.csv"
            _write_csv(out_dir / name, header, rows)
            files.append(name)
        record.update({"seed": res.seed, "scheme": res.scheme, "passed": res.passed, "csv": files,
                       "results": res.results})
        failed = failed or res.passed is False
        records.append(record)
    data["experiments"] = records
    data["status"] = "fail" if failed else "pass"
    rep = RunReport(label, data, EXIT_TOLERANCE if failed else EXIT_OK, time.perf_counter() - t0)
    rep.write(out_dir)
    return rep


def run_resolvent(source, *, out=None) -> tuple[dict, int]:
    """Stand-alone contour-resolvent check; the config holds the experiment parameters."""
    try:
        cfg = source if isinstance(source, dict) else json.loads(Path(source).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return {"error": {"type": "ConfigError", "message": str(exc)}}, EXIT_PARSE
    params = cfg
    if "experiments" in cfg:
        found = [e for e in cfg["experiments"] if e.get("kind") == "resolvent"]
        if not found:
            return {"error": {"type": "ConfigError", "message": "no resolvent experiment in scenario"}}, EXIT_PARSE
        params = found[0]
    elif "preset" in cfg and cfg["preset"] == "sector-demo":
        params = PRESETS["sector-demo"].experiments()[0]
    if "A" not in params or "B" not in params:
        return {"error": {"type": "ConfigError", "message": "resolvent config needs A and B"}}, EXIT_PARSE
    tol = params.get("tolerance")
    clean = {k: v for k, v in params.items() if k not in ("kind", "tolerance")}
    try:
        res = exp_resolvent(None, clean, tol)
    except (ValueError, NotSectorialError) as exc:
        return {"error": {"type": type(exc).__name__, "message": str(exc)}}, EXIT_TOLERANCE
    data = {"tool": "oulab", "version": __version__, "kind": "resolvent", "params": clean, "tolerance": tol,
            "passed": res.passed, "results": res.results}
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for suffix, (header, rows) in res.tables.items():
            _write_csv(out_dir / f"resolvent{suffix}.csv", header, rows)
        (out_dir / "resolvent.json").write_text(json.dumps(jsonable(data), indent=2) + "\n")
    return data, EXIT_TOLERANCE if res.passed is False else EXIT_OK
