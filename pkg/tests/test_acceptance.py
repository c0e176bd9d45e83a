"""Acceptance criteria 1-13, one test each.

Every test records a one-line verdict in ``VERDICTS``; the terminal-summary
hook in ``conftest.py`` prints them after the run.
"""

import csv
import json
import math
import time

import numpy as np
import pytest

from oulab.calculus import (
    VectorTestFunction,
    adjointness_defect,
    b_form_defect,
    cosine_ridge,
    form_identity_defect,
    grad_H,
    grad_H_field,
    tanh_ridge,
)
from oulab.inequality import (
    dhstar_poincare,
    duality_convergence,
    duality_identity_defect,
    gradient_estimate_scan,
    poincare_ratio,
    sharpness_search,
    weighted_norm_counterexample,
)
from oulab.model import ModelSpec, derive, random_model
from oulab.polynomial import Polynomial, random_polynomial
from oulab.presets import LP_RATIOS, PRESETS, build_preset, sector_demo_matrices
from oulab.sampling import Budget
from oulab.scenario import EXIT_OK, run
from oulab.sector import SectorialMatrix, contour_resolvent, kron_sum_resolvent_oracle
from oulab.semigroup import ChaosIndex, apply_tensor_P, chaos_eigencheck, chaos_eigenfunction, decay_scan, mehler_polynomial

VERDICTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    VERDICTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, VERDICTS[n]


def _suite(seed=2024, n_models=10, per_model=20):
    """Random Hurwitz models (d = 1..4, full noise) with random polynomials of degree <= 4."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_models):
        d = 1 + k % 4
        dm = derive(random_model(rng, d, nonnormal=0.5 + k % 3))
        polys = [random_polynomial(rng, d, 1 + j % 4) for j in range(per_model)]
        out.append((dm, [f for f in polys if not f.is_constant()]))
    return out


@pytest.fixture(scope="module")
def suite():
    return _suite()


def test_c01_sharp_constant():
    t0 = time.perf_counter()
    worst = 0.0
    linear = True
    for d in (1, 2, 3):
        dm = derive(ModelSpec(-np.eye(d), np.eye(d)))
        res = sharpness_search(dm, 2, degree_cap=4, n_random=10)
        worst = max(worst, abs(float(res.best.ratio.value) - 1 / math.sqrt(2)))
        linear = linear and res.attained_by_linear
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-8 and linear and dt < 1.0,
           f"max |ratio - 1/sqrt2| = {worst:.2e}, attained by linear = {linear}, {dt:.2f} s")


def test_c02_poincare_bound(suite):
    t0 = time.perf_counter()
    n = 0
    worst = 0.0
    for dm, polys in suite:
        for f in polys:
            rep = poincare_ratio(dm, f, 2)
            worst = max(worst, float(rep.ratio.value) * math.sqrt(2 * dm.omega))
            n += 1
    dt = time.perf_counter() - t0
    record(2, n >= 200 and len(suite) >= 10 and worst <= 1 + 1e-8 and dt < 60,
           f"{n} polynomials on {len(suite)} models, max ratio*sqrt(2 omega) = {worst:.10f}, {dt:.1f} s")


def test_c03_form_identities(suite):
    worst_form = worst_b = 0.0
    for dm, polys in suite:
        for f, g in zip(polys, polys[1:] + polys[:1]):
            scale = 1.0 + np.abs(f.coefs).sum() * np.abs(g.coefs).sum()
            worst_form = max(worst_form, form_identity_defect(dm, f, g) / scale)
            if dm.m == dm.d:
                worst_b = max(worst_b, b_form_defect(dm, f, g) / scale)
    record(3, worst_form <= 1e-9 and worst_b <= 1e-9,
           f"form defect {worst_form:.2e}, B-form defect {worst_b:.2e} (scaled by coefficient mass)")


def test_c04_b_structure(suite):
    models = [dm for dm, _ in suite]
    for name in PRESETS:
        spec, _ = build_preset(name)
        models.append(derive(spec))
    worst = max(float(np.linalg.norm(dm.B + dm.B.T + np.eye(dm.m), 2)) for dm in models)
    record(4, worst <= 1e-10, f"max ||B + B^T + I|| = {worst:.2e} over {len(models)} models")


def test_c05_intertwining(suite):
    rng = np.random.default_rng(5)
    worst = 0.0
    for dm, polys in suite:
        X = rng.standard_normal((6, dm.d))
        for g in polys[:5]:
            for t in (0.1, 0.5, 1.0, 2.0):
                lhs = grad_H(mehler_polynomial(dm, t, g), X, dm.i)
                rhs = apply_tensor_P(dm, t, grad_H_field(g, dm.i), X).value
                worst = max(worst, np.abs(lhs - rhs).max() / max(1.0, np.abs(lhs).max()))
    record(5, worst <= 1e-8, f"max pointwise defect {worst:.2e}")


def test_c06_duality():
    rng = np.random.default_rng(6)
    worst = 0.0
    min_order = math.inf
    for k in range(6):
        dm = derive(random_model(rng, 1 + k % 3))
        f, g = random_polynomial(rng, dm.d, 2), random_polynomial(rng, dm.d, 2)
        worst = max(worst, duality_identity_defect(dm, f, g, 1.0, 256, "simpson"))
        conv = duality_convergence(dm, f, g, 1.0, steps=(8, 16, 32, 64), rule="midpoint")
        finite = [o for o in conv["orders"] if math.isfinite(o)]
        min_order = min(min_order, *finite) if finite else min_order
    record(6, worst <= 1e-6 and min_order >= 1.9,
           f"max defect at 256 steps {worst:.2e}, min observed order {min_order:.3f}")


def test_c07_gradient_estimate():
    times = [0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0]
    rng = np.random.default_rng(7)
    results = []
    for d in (1, 2):
        dm = derive(random_model(rng, d))
        for deg in (1, 2, 3):
            results.append(gradient_estimate_scan(dm, random_polynomial(rng, d, deg), 2, times))
        budget = Budget("mc", 50_000, 7)
        u = rng.standard_normal(d)
        results.append(gradient_estimate_scan(dm, cosine_ridge(u), 2, times, budget))
        results.append(gradient_estimate_scan(dm, tanh_ridge(u, 4.0), 2, times, budget))
    ok = all(s.bounded(3.0, 0.25) for s in results)
    ratio = max(s.constant / max(float(dict(s.rows)[0.25].value), 1e-300) for s in results)
    record(7, ok, f"{len(results)} functions, max sup/value(t=0.25) = {ratio:.3f}")


def test_c08_lp_ratios(tmp_path):
    unstable = []
    n = 0
    for name in PRESETS:
        rep = run({"preset": name, "experiments": [dict(LP_RATIOS)]}, out=tmp_path / name)
        for s in rep.data["experiments"][0]["results"]["suprema"]:
            n += 1
            if not (s["stable"] and math.isfinite(s["sup"])):
                unstable.append((name, s["p"]))
    record(8, not unstable, f"{n} (preset, p) suprema finite and stable under doubling; unstable: {unstable}")


def test_c09_dhstar(suite):
    worst_adj = 0.0
    worst_ratio = 0.0
    rng = np.random.default_rng(9)
    for dm, polys in suite:
        for g in polys[:8]:
            rep = dhstar_poincare(dm, g, 2)
            worst_ratio = max(worst_ratio, float(rep.ratio.value) * math.sqrt(2 * dm.omega))
            F = VectorTestFunction(tuple(random_polynomial(rng, dm.d, 2) for _ in range(dm.m)))
            worst_adj = max(worst_adj, adjointness_defect(dm, g, F))
    # declared uniform bound: twice the sharp p = 2 Poincare constant
    record(9, math.isfinite(worst_ratio) and worst_ratio <= 2.0 and worst_adj <= 1e-9,
           f"max ratio*sqrt(2 omega) = {worst_ratio:.6f}, adjointness defect {worst_adj:.2e}")


def test_c10_counterexample():
    t0 = time.perf_counter()
    res = weighted_norm_counterexample(20, 1.0, 0.1)
    dt = time.perf_counter() - t0
    record(10, res.found and res.growth > 1 and res.stable and dt < 10,
           f"r* = {res.r_star:.3g}, growth {res.growth:.4f}, abscissa {res.spectral_abscissa:.3f}, {dt:.3f} s")


def _spd(rng, n):
    G = rng.standard_normal((n, n))
    return G @ G.T / n + 0.5 * np.eye(n)


def test_c11_contour_resolvent():
    rng = np.random.default_rng(11)
    cases = []
    for dA, dB in ((1, 1), (2, 2), (3, 2), (4, 4), (4, 1)):
        cases.append((_spd(rng, dA), 0.1, _spd(rng, dB), 0.1))
    A, B = sector_demo_matrices()
    cases.append((A, 0.1, B, 0.45))
    N = np.array([[1.0, 0.8, 0.0], [0.0, 1.2, 0.5], [0.0, 0.0, 2.0]])
    cases.append((N, 0.3, B, 0.45))
    lam, lam2 = -1 + 2j, -1.5 + 2.5j
    worst = worst_ident = 0.0
    for A, ta, B, tb in cases:
        As, Bs = SectorialMatrix.certified(A, ta), SectorialMatrix.certified(B, tb)
        R1 = contour_resolvent(As, Bs, lam, nodes_per_segment=400).value
        R2 = contour_resolvent(As, Bs, lam2, nodes_per_segment=400).value
        O = kron_sum_resolvent_oracle(A, B, lam)
        worst = max(worst, np.linalg.norm(R1 - O, 2) / np.linalg.norm(O, 2))
        worst_ident = max(worst_ident, np.linalg.norm(R1 - R2 - (lam2 - lam) * R1 @ R2, 2))
    one = SectorialMatrix.certified([[1.0]], 0.1)
    scalar = abs(contour_resolvent(one, one, -1.0).value[0, 0] + 1 / 3)
    record(11, worst <= 1e-6 and worst_ident <= 1e-8 and scalar <= 1e-10,
           f"{len(cases)} cases, max relative error {worst:.2e}, identity defect {worst_ident:.2e}, "
           f"scalar error {scalar:.1e} (untruncated graded contours)")


def test_c12_chaos():
    worst = 0.0
    worst_rate = 0.0
    for d in (1, 2, 3):
        rng = np.random.default_rng(d)
        G = rng.standard_normal((d, d))
        dm = derive(ModelSpec(-(G @ G.T / d + 0.5 * np.eye(d)), np.eye(d)))
        for total in range(5):
            for idx in _compositions(total, d):
                worst = max(worst, chaos_eigencheck(dm, idx, 0.8))
        for n in (1, 2, 3, 4):
            h, _ = chaos_eigenfunction(dm, ChaosIndex(tuple([0] * (d - 1) + [n])))
            scan = decay_scan(dm, h, 2, [0.0, 0.25, 0.5, 1.0])
            worst_rate = max(worst_rate, abs(scan.rate - n * dm.omega) / (n * dm.omega))
    record(12, worst <= 1e-7 and worst_rate <= 0.01,
           f"max eigen-defect {worst:.2e}, max relative rate error {worst_rate:.2e}")


def _compositions(total, d):
    if d == 1:
        yield [total]
        return
    for k in range(total + 1):
        for rest in _compositions(total - k, d - 1):
            yield [k] + rest


def _strip(path):
    data = json.loads(path.read_text())
    data.pop("wall_time_s", None)
    return json.dumps(data, sort_keys=True)


TIMING_COLUMNS = {"runtime_ms", "wall_time_s"}


def _csv_without_timing(path):
    rows = list(csv.reader(open(path, newline="")))
    keep = [k for k, name in enumerate(rows[0]) if name not in TIMING_COLUMNS]
    return [[row[k] for k in keep] for row in rows]


def test_c13_determinism(tmp_path):
    differing = []
    for name in PRESETS:
        a = run({"preset": name}, out=tmp_path / name / "a")
        b = run({"preset": name}, out=tmp_path / name / "b", threads=4)
        if a.exit_code != EXIT_OK or b.exit_code != EXIT_OK:
            differing.append(f"{name}: exit {a.exit_code}/{b.exit_code}")
            continue
        if _strip(tmp_path / name / "a" / "report.json") != _strip(tmp_path / name / "b" / "report.json"):
            differing.append(name)
        for csv_file in sorted((tmp_path / name / "a").glob("*.csv")):
            if _csv_without_timing(csv_file) != _csv_without_timing(tmp_path / name / "b" / csv_file.name):
                differing.append(f"{name}/{csv_file.name}")
    record(13, not differing, f"{len(PRESETS)} presets run twice (1 vs 4 threads); differing: {differing}")
