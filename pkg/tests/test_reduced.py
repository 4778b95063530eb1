import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblekit import geometry as geo
from bubblekit import reduced as rd
from bubblekit.errors import DegenerateOperator, DomainError, HypothesisViolation

# corner entries of the N = 7 torus root, rounded; oracle values are recomputed from them
BASE = rd.ReducedSystem(dim_n=7, A=-25338.0, B=23993.0, C=-25009.5, c1=27575.9, c2=9191.97,
                        D1=1.0, D2=-17015.5, lambda1=7.786934367451314, mu0=11.3367,
                        eps=1e-2, length=4 * np.pi, resolution=128)


def grid(sys_):
    return np.arange(sys_.resolution) * sys_.length / sys_.resolution


def test_constant_rhs_is_algebraic():
    d, dn, _ = rd.solve_delta_dn(BASE, 1.5, -0.5)
    sol = np.linalg.solve([[BASE.A, BASE.B], [BASE.B, BASE.C]], [1.5, -0.5])
    assert np.allclose(d, sol[0], rtol=1e-12, atol=0)
    assert np.allclose(dn, sol[1], rtol=1e-12, atol=0)


@pytest.mark.parametrize("mode", [1, 5, 17])
@pytest.mark.parametrize("which", [1, 2])
def test_single_mode_matches_closed_form(mode, which):
    wave = np.cos(2 * np.pi * mode * grid(BASE) / BASE.length)
    h = (wave, 0 * wave) if which == 1 else (0 * wave, wave)
    d, dn, _ = rd.solve_delta_dn(BASE, *h)
    a, b = rd.modal_closed_form(BASE, mode, which)
    scale = max(abs(a), abs(b))
    assert np.max(np.abs(d - a * wave)) < 1e-12 * scale
    assert np.max(np.abs(dn - b * wave)) < 1e-12 * scale


def test_modal_matches_assembled(rng):
    y = grid(BASE)
    h1 = np.exp(np.sin(2 * np.pi * y / BASE.length)) + 0.1 * rng.standard_normal(y.size)
    h2 = np.cos(6 * np.pi * y / BASE.length)
    d, dn, _ = rd.solve_delta_dn(BASE, h1, h2)
    da, dna = rd.assembled_delta_dn(BASE, h1, h2)
    assert np.max(np.abs(d - da)) < 1e-12 * np.max(np.abs(da)) * 10
    assert np.max(np.abs(dn - dna)) < 1e-12 * np.max(np.abs(dna)) * 10


def test_bound_constant_stable_in_eps():
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "resolution": 256})
    sweep = rd.bound_sweep(sys_, [1e-3 * 2.0 ** j for j in range(7)] + [1e-1])
    assert sweep["variation"] < 0.2


def test_refuses_non_coercive():
    bad = rd.ReducedSystem(**{**BASE.__dict__, "B": 30000.0})
    with pytest.raises(HypothesisViolation, match="AC - B"):
        rd.solve_delta_dn(bad, 1.0, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, -0.1), st.floats(-10, -0.1), st.floats(-1, 1), st.floats(1e-4, 1.0))
def test_energy_positivity(a, c, t, eps):
    b = t * np.sqrt(a * c) * 0.999
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "A": a, "B": b, "C": c, "eps": eps})
    k, _ = sys_.wavenumbers()
    assert np.min(np.linalg.eigvalsh(rd.modal_blocks(sys_, k))) > 0


def test_zero_rhs_and_linearity(rng):
    d, dn, rep = rd.solve_delta_dn(BASE, 0.0, 0.0)
    assert np.all(d == 0) and np.all(dn == 0) and rep["bound_constant"] == 0.0
    f, g = rng.standard_normal((2, BASE.resolution))
    d1, n1, _ = rd.solve_delta_dn(BASE, f, g)
    d2, n2, _ = rd.solve_delta_dn(BASE, 2 * f, 2 * g)
    assert np.allclose(d2, 2 * d1, rtol=1e-12, atol=1e-18)


def test_extra_callback_fixed_point():
    y = grid(BASE)
    h1 = np.cos(2 * np.pi * y / BASE.length)

    def extra(d, dn):
        return 100.0 * np.tanh(d), 50.0 * dn
    d, dn, rep = rd.solve_delta_dn(BASE, h1, 0 * h1, extra=extra)
    assert rep["fixed_point_steps"] > 0
    # residual of the nonlinear system through the assembled operator
    r1, r2 = rd.assembled_delta_dn(BASE, h1 + BASE.eps * 100 * np.tanh(d), BASE.eps * 50 * dn)
    assert np.max(np.abs(r1 - d)) < 1e-12
    d0, _, _ = rd.solve_delta_dn(BASE, h1, 0 * h1, extra=lambda a, b: (0 * a, 0 * b))
    assert np.allclose(d0, rd.solve_delta_dn(BASE, h1, 0 * h1)[0], atol=1e-18)


# ----------------------------------------------------------------- d_bar
def test_dbar_delegates_to_jacobi():
    model = geo.HypersurfaceModel("torus", 3, (3.0, 1.0), "parallel", np.pi)
    op = geo.assemble_jacobi(model, 32)
    theta = 2 * np.pi * np.arange(32) / 32
    f = np.column_stack([np.cos(theta) + 0.2])
    d, rep = rd.solve_dbar(op, f)
    ref, _ = geo.solve_jacobi(op, -f)
    assert np.array_equal(d, ref)
    # -d'' + c d = f with c = 0.5, checked against the dense operator
    dense = np.linalg.solve(-op.matrix, f.reshape(-1))
    assert np.max(np.abs(d.reshape(-1) - dense)) < 1e-10
    assert rep["bound_constant"] > 0
    z, _ = rd.solve_dbar(op, np.zeros_like(f))
    assert np.all(z == 0)


def test_dbar_degenerate_raises():
    op = geo.assemble_jacobi(geo.HypersurfaceModel("sphere", 4, (2.0,), "great_circle"), 16)
    with pytest.raises(DegenerateOperator):
        rd.solve_dbar(op, np.ones((16, op.components)))


# ----------------------------------------------------------------- resonance
@pytest.fixture(scope="module")
def scan():
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "resolution": 512})
    return rd.scan_resonance(sys_, np.geomspace(0.08, 0.5, 800))


def test_resonances_match_prediction(scan):
    matched = rd.match_resonances(scan)
    assert len(matched) == len(scan.minima) > 5
    assert all(m["ok"] for m in matched)


def test_gap_constant_bounded(scan):
    # inverse norm rho^k stays of order one on certified points, on both halves of the ladder
    assert np.isfinite(scan.gap_constant) and scan.gap_constant < 10
    assert scan.info["gap_constants_first_half"] < 10


def test_scan_invariants(scan):
    assert np.all(scan.sigma >= 0)
    flat = np.ravel(scan.gaps)
    assert np.all(np.diff(flat) >= 0)
    # isolated minima: neighbours are strictly larger on the grid
    eps = np.array([m["eps"] for m in scan.minima])
    assert np.all(np.diff(eps) > 0)


def test_resonance_count_grows():
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "resolution": 512})
    counts = [len(rd.predicted_resonances(sys_, lo, 0.5)) for lo in (0.3, 0.15, 0.08)]
    assert counts[0] < counts[1] < counts[2]


def test_decoupled_singular_values_exact():
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "D2": 0.0, "eps": 0.2, "resolution": 64})
    mat = rd.l0_matrix(sys_, 64)
    sv = np.sort(np.linalg.svd(mat, compute_uv=False))
    modes = np.fft.fftfreq(64, 1 / 64)
    expected = np.sort(np.abs(sys_.D1 * sys_.lambda1 - modes ** 2 * sys_.rho ** 2))
    assert np.allclose(sv, expected, atol=1e-10 * expected.max())
    assert rd.smallest_singular_value(sys_) == pytest.approx(expected.min(), rel=1e-14)


def test_scan_resolution_guard():
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "resolution": 32})
    with pytest.raises(DomainError, match="resolve"):
        rd.scan_resonance(sys_, np.geomspace(0.01, 0.5, 10))


def test_scan_outputs(tmp_path, scan):
    path = tmp_path / "scan.csv"
    scan.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (scan.eps.size, 3)
    js = scan.to_json()
    assert js["schema"] == "resonance/1" and len(js["minima"]) == len(scan.minima)


def test_parallel_scan_deterministic():
    sys_ = rd.ReducedSystem(**{**BASE.__dict__, "resolution": 256})
    grid_ = np.geomspace(0.15, 0.5, 60)
    a = rd.scan_resonance(sys_, grid_)
    b = rd.scan_resonance(sys_, grid_, workers=2)
    assert np.array_equal(a.sigma, b.sigma)
