import numpy as np
import pytest

from bubblekit import quadrature as q
from bubblekit.bubble import TransformParams, radial_u, sphere_area
from bubblekit.errors import DomainError

TORUS_TRACES = (-0.5, 1.0)


@pytest.fixture(scope="module")
def table7(spectral_cache):
    return q.compute_constants(7, spectral_cache(7), TORUS_TRACES, d_n0=1.0)


def test_gaussian_measure():
    for n in (5, 7, 10):
        res = q.integrate_axial(q.full_space(n), lambda s, t: np.exp(-(s * s + t * t)))
        assert res.value == pytest.approx(np.pi ** (n / 2), rel=1e-10)


def test_half_space_gaussian():
    res = q.integrate_axial(q.half_space(7, 0.0), lambda s, t: np.exp(-(s * s + t * t)))
    assert res.value == pytest.approx(0.5 * np.pi ** 3.5, rel=1e-10)


def test_weights_positive():
    grid = q.full_space(7)
    for breaks in (grid.s_breaks(), grid.t_breaks()):
        _, w = q._composite(breaks, grid.nodes)
        assert np.all(w > 0)
        assert np.all(np.diff(breaks) > 0)


def test_single_harmonic_vanishes_and_modes_rejected():
    grid = q.full_space(7)
    assert q.integrate_axial(grid, lambda s, t: np.exp(-s * s - t * t), modes=(3,)).value == 0.0
    with pytest.raises(DomainError):
        q.integrate_axial(grid, lambda s, t: s, modes=(1, 1, 1))
    with pytest.raises(DomainError):
        q.integrate_axial(grid, lambda s, t: s, modes=(7,))


def test_odd_integrand_in_xi_n_vanishes():
    res = q.integrate_axial(q.full_space(7), lambda s, t: t * np.exp(-s * s - t * t))
    assert abs(res.value) < 1e-14


def test_error_estimate_honest():
    f = lambda s, t: (1 + s * s + t * t) ** -5.0
    coarse = q.integrate_axial(q.full_space(7, nodes=6), f)
    fine = q.integrate_axial(q.full_space(7, nodes=12), f)
    assert fine.error <= coarse.error / 4
    assert abs(fine.value - coarse.value) <= 10 * coarse.error + 1e-12 * abs(fine.value)


def test_monte_carlo_oracle():
    n = 7
    f = lambda r: radial_u(n, r) ** 2
    quad = q.integrate_axial(q.full_space(n), lambda s, t: f(np.sqrt(s * s + t * t)) * np.exp(-(s * s + t * t)))
    mc, se = q.monte_carlo_gaussian(f, n, samples=10_000_000)
    assert abs(quad.value - mc) < 3 * se


def test_moment_closed_form():
    for n in (7, 8):
        assert q.xi_n_moment(n) == pytest.approx(q.xi_n_moment_exact(n), rel=1e-10)


def test_constants_positive_and_isotropic(table7):
    v = table7.values
    for i in range(1, 8):
        assert v[f"A{i}"] > 0
    assert v["C0_tangential"] == pytest.approx(v["C0"], rel=1e-12)
    assert v["D1"] == pytest.approx(1.0, abs=1e-8)
    assert table7.meta["converged"]


def test_a1_flux_identity(table7):
    # int p U^{p-1} Z_{N+1} = -int Delta Z_{N+1} = boundary flux of the dilation kernel
    n = 7
    a = table7.values
    alpha = (n * (n - 2)) ** ((n - 2) / 4)
    expected = alpha ** 2 * 2.0 ** (2 - n) * (n - 2) / 2 * (n - 2) * sphere_area(n)
    assert a["A1"] == pytest.approx(expected, rel=1e-10)


def test_a2_dilation_identity(table7):
    # differentiating int U_lambda^p log U_lambda ... gives A2 = (N-2)^2/(4N) int U^{p+1}
    n = 7
    c0 = table7.values["C0"]
    assert table7.values["A2"] == pytest.approx((n - 2) ** 2 / (4 * n) * n * c0, rel=1e-10)


def test_a3_corrected_closed_form(table7):
    assert table7.meta["A3_rel_diff_corrected"] < 1e-8
    # the printed alpha exponent (N+2)/2 is not p+1; the mismatch is large and recorded
    assert table7.meta["A3_rel_diff_printed"] > 0.5


def test_a3_equals_a1(table7):
    assert table7.values["A3"] == pytest.approx(table7.values["A1"], rel=1e-10)


def test_d11_identity(table7):
    n = 7
    v = table7.values
    assert v["I11"] == pytest.approx(-v["A7"] / ((n - 2) / 2) / n, rel=1e-8)


def test_a7_two_resolutions(spectral_cache):
    from bubblekit import spectral
    coarse = q.compute_constants(7, spectral_cache(7))
    fine = q.compute_constants(7, spectral.solve_eigen_shooting(7, grid=spectral.RadialGrid(0.005, 40.0)))
    assert fine.values["A7"] == pytest.approx(coarse.values["A7"], rel=1e-6)


def test_compute_constants_rejects_mismatched_pair(spectral_cache):
    with pytest.raises(DomainError):
        q.compute_constants(8, spectral_cache(7))


@pytest.mark.parametrize("dim_n", [7, 8, 9, 10])
def test_appendix_identities(dim_n, spectral_cache):
    table = q.compute_constants(dim_n, spectral_cache(dim_n))
    rep = q.verify_appendix_identities(dim_n, table)
    for name, item in rep.items():
        assert item["passed"], (name, item)


def test_identity_ii_random_symmetric_h(table7, rng):
    h = rng.normal(size=(6, 6))
    rep = q.verify_appendix_identities(7, table7, h_matrix=h + h.T)
    assert rep["(ii) H_ij int d_ij U Z_{N+1} = 0"]["passed"]


def test_projection_ladder(table7, spectral_cache):
    eps = [2.0 ** -k * 1e-6 for k in range(4, 11)]
    lad = q.projection_ladder(7, 1.0, 1.0, eps, table7, spectral_cache(7), TORUS_TRACES, e0=0.3)
    assert lad["rel_errors"]["N+1"] < 1e-2
    assert lad["rel_errors"]["N"] < 1e-2
    assert lad["rel_errors"]["0"] < 1e-2
    assert lad["deviation_slope_N+1"] >= 1 + 1 / 5 - 0.1
    for row in lad["rows"]:
        assert row["P_l_max"] <= row["eps"] ** 2 * 1e-6


def test_project_h1_rejects_bad_window(table7, spectral_cache):
    with pytest.raises(DomainError):
        q.project_h1(7, TransformParams(1.0, 1.0, 0.5, 7), table7, spectral_cache(7), TORUS_TRACES)
