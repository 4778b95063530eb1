"""Acceptance suite: the ten end-to-end criteria at their stated tolerances.

Each test records one PASS/FAIL line (printed in the terminal summary) and then asserts.
"""
import numpy as np
import pytest

from bubblekit import construct as cs
from bubblekit import geometry as geo
from bubblekit import linsolve as ls
from bubblekit import params as pm
from bubblekit import quadrature as qd
from bubblekit import reduced as rd
from bubblekit import spectral as spc
from bubblekit.bubble import BubbleProfile, pde_residual
from bubblekit.errors import HypothesisViolation

TORUS_MODEL = geo.HypersurfaceModel("torus", 8, (3.0, 1.0), "parallel", np.pi)


def report(log, number, passed, detail):
    log.append((number, bool(passed), detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return bool(passed)


@pytest.fixture(scope="module")
def torus(spectral_cache):
    sp = spectral_cache(7)
    sd = geo.shape_at(TORUS_MODEL, 0.0)
    traces = (sd.sum_aa, sd.sum_jj)
    table = qd.compute_constants(7, sp, traces)
    return sp, traces, table


def test_c01_bubble_residual_order(acceptance_log):
    rng = np.random.default_rng(1)
    slopes = {}
    for n in (7, 8, 9, 10):
        prof = BubbleProfile(n)
        x = rng.normal(size=(40, n))
        pts = x / np.linalg.norm(x, axis=1, keepdims=True) * rng.uniform(0.0, 10.0, size=(40, 1))
        errs = [np.max(np.abs(pde_residual(prof, pts, h))) for h in (0.04, 0.02, 0.01)]
        slopes[n] = np.diff(np.log(errs)) / np.log(0.5)
    ok = all(np.all(np.abs(s - 2.0) <= 0.1) for s in slopes.values())
    detail = "orders " + ", ".join(f"N={n}: {s.min():.3f}..{s.max():.3f}" for n, s in slopes.items())
    assert report(acceptance_log, 1, ok, detail)


def test_c02_integral_identities(acceptance_log, spectral_cache):
    worst, ratios = 0.0, []
    for n in (7, 8, 9, 10):
        table = qd.compute_constants(n, spectral_cache(n))
        rep = qd.verify_appendix_identities(n, table, tol=1e-8)
        worst = max(worst, max(r["relative"] for r in rep.values()))
        ratios.append(rep["(iv) int U^{p+1} = N C0"]["lhs"] / (n * table.values["C0"]))
    ok = worst < 1e-8 and all(abs(r - 1.0) < 1e-8 for r in ratios)
    assert report(acceptance_log, 2, ok, f"max relative residual {worst:.2e}, "
                                          f"max |ratio - 1| {max(abs(r - 1) for r in ratios):.2e}")


def test_c03_spectral_dual_method(acceptance_log, spectral_cache):
    pair = spectral_cache(7)
    rich = spc.richardson_fd(7)
    rel = abs(pair.lambda1 - rich["lambda1"]) / pair.lambda1
    rate = spc.decay_rate_fit(pair)
    rate_rel = abs(rate - np.sqrt(pair.lambda1)) / np.sqrt(pair.lambda1)
    count, _ = spc.count_positive_modes(7)
    ok = rel < 1e-6 and rate_rel < 0.02 and count == 1
    assert report(acceptance_log, 3, ok, f"lambda1 rel diff {rel:.2e}, decay fit {rate_rel:.2%}, "
                                          f"positive eigenvalues {count}")


def test_c04_a3_closed_form(acceptance_log, torus):
    _, _, table = torus
    rel = table.meta["A3_rel_diff_printed"]
    ok = rel < 1e-8
    report(acceptance_log, 4, ok, f"printed closed form vs quadrature rel diff {rel:.3e} "
                                  f"(corrected form {table.meta['A3_rel_diff_corrected']:.1e})")
    assert ok


def test_c05_parameter_system(acceptance_log, torus):
    _, traces, table = torus
    state = pm.solve_leading_order(table, traces)
    closed = pm.closed_form_root(table, traces)
    diff = max(abs(a - b) / max(abs(b), 1.0) for a, b in zip((state.mu0, state.dn0, state.e0), closed))
    signs = pm.check_jacobian_signs(state)
    try:
        pm.solve_leading_order(table, (1.0, 6.0))
        refused = False
    except HypothesisViolation:
        refused = True
    ok = diff < 1e-12 and signs["det_F0_positive"] and signs["AC_minus_B2_positive"] and refused
    report(acceptance_log, 5, ok, f"root vs closed form {diff:.1e}, det F0 {signs['det_F0']:.4g}, "
                                  f"AC-B^2 {signs['AC_minus_B2']:.4g}, sphere traces refused {refused}")
    assert ok


def test_c06_projection_asymptotics(acceptance_log, torus):
    sp, traces, table = torus
    eps = [2.0 ** -k * 1e-6 for k in range(4, 11)]
    lad = qd.projection_ladder(7, 1.0, 1.0, eps, table, sp, traces, e0=0.3)
    err = max(lad["rel_errors"]["N+1"], lad["rel_errors"]["N"])
    ok = err < 1e-2
    assert report(acceptance_log, 6, ok, f"extrapolated rel errors N+1 {lad['rel_errors']['N+1']:.2e}, "
                                          f"N {lad['rel_errors']['N']:.2e}")


def test_c07_projected_solver(acceptance_log, spectral_cache):
    sp = spectral_cache(7)
    refine = ls.measure_apriori_constant(7, 3, sp, [ls.AxialGrid(7, h, 100.0, 8.0) for h in (0.05, 0.025, 0.0125)])
    enlarge = ls.measure_apriori_constant(7, 6, sp, [ls.AxialGrid(7, 0.1, c, 8.0) for c in (25.0, 50.0, 100.0)],
                                          check_window=False)
    ok = refine["variation"] < 0.1 and enlarge["growth_detected"]
    report(acceptance_log, 7, ok, f"r=3 variation {refine['variation']:.2%}; r=6 constants "
                                  f"{', '.join(f'{c:.4f}' for c in enlarge['constants'])} "
                                  f"(growth detected {enlarge['growth_detected']})")
    assert ok


def test_c08_residual_ladder(acceptance_log, torus):
    sp, traces, table = torus
    frozen = cs.FrozenGeometry.from_model(TORUS_MODEL, 0.0)
    start = pm.closed_form_root(table, traces)
    lad = cs.residual_ladder(7, cs.dyadic_ladder(9, 13), start, frozen, sp)
    thresholds = {0: 0.85, 1: 1.8, 2: 2.6}
    ok = all(lad.slopes[I] >= thresholds[I] for I in (0, 1, 2))
    assert report(acceptance_log, 8, ok, ", ".join(f"slope I={I} {lad.slopes[I]:.3f} (>= {thresholds[I]})"
                                                   for I in (0, 1, 2)))


def test_c09_resonance(acceptance_log, torus):
    _, traces, table = torus
    state = pm.solve_leading_order(table, traces)
    sys_ = rd.ReducedSystem.from_state(state, TORUS_MODEL.k_lengths()[0], resolution=2048, eps=0.1)
    scan = rd.scan_resonance(sys_, np.geomspace(0.04, 0.1, 1500))
    matched = rd.match_resonances(scan)
    ok = (len(matched) >= 3 and all(m["ok"] for m in matched)
          and np.isfinite(scan.gap_constant) and scan.gap_constant < 10.0)
    assert report(acceptance_log, 9, ok, f"{sum(m['ok'] for m in matched)}/{len(matched)} minima on "
                                          f"m^2 rho^2 = D1 lambda1, gap constant {scan.gap_constant:.3f}")


def test_c10_metric_expansion(acceptance_log):
    models = {"sphere": geo.HypersurfaceModel("sphere", 4, (2.0,), "great_circle"),
              "torus": geo.HypersurfaceModel("torus", 4, (3.0, 1.0), "parallel", np.pi)}
    parts, ok = [], True
    for name, model in models.items():
        rep = geo.fermi_metric_expansion_check(model, 0.3)
        good = rep["slope"] >= 2.9 and rep["max_g_aN"] < 1e-8 and rep["max_g_NN_minus_1"] < 1e-8
        ok &= good
        parts.append(f"{name} slope {rep['slope']:.3f}, |g_aN| {rep['max_g_aN']:.1e}, "
                     f"|g_NN-1| {rep['max_g_NN_minus_1']:.1e}")
    assert report(acceptance_log, 10, ok, "; ".join(parts))
