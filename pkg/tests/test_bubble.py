import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblekit.bubble import (
    BubbleProfile, KernelBasis, TransformParams, alpha_eps, balancing_factor, eval_bubble,
    eval_bubble_bar, eval_kernel, fd_laplacian, pde_residual, radial_potential, scaling_family,
)
from bubblekit.errors import DomainError


def random_points(rng, n, count, radius):
    x = rng.normal(size=(count, n))
    return radius * x / np.linalg.norm(x, axis=1, keepdims=True)


def test_alpha_and_origin():
    prof = BubbleProfile(7)
    assert prof.alpha_n == pytest.approx(35 ** 1.25, rel=1e-15)
    assert eval_bubble(prof, np.zeros(7)) == prof.alpha_n


def test_far_field_ratio():
    prof = BubbleProfile(8)
    for r in [1e3, 1e5]:
        xi = np.zeros(8)
        xi[0] = r
        assert eval_bubble(prof, xi) / r ** -6 == pytest.approx(prof.alpha_n, rel=1e-5)


def test_rejects_small_dimension():
    with pytest.raises(DomainError):
        BubbleProfile(2)


@pytest.mark.parametrize("dim_n", [7, 8, 9, 10])
def test_pde_residual_order_two(dim_n, rng):
    prof = BubbleProfile(dim_n)
    pts = random_points(rng, dim_n, 20, 2.0)
    errs = [np.max(np.abs(pde_residual(prof, pts, h))) for h in (0.04, 0.02, 0.01)]
    slopes = np.diff(np.log(errs)) / np.log(0.5)
    assert np.all(np.abs(slopes - 2.0) < 0.1)


def test_bubble_bar_closed_form():
    # plane shift eps d / (rho mu) = 1 gives U(0, 2) = alpha (1 + 4)^{-5/2}
    eps = 0.01
    rho = eps ** 1.2
    params = TransformParams(mu=1.0, d_n=rho / eps, eps=eps, dim_n=7)
    prof = BubbleProfile(7)
    assert params.plane_shift == pytest.approx(1.0)
    assert eval_bubble_bar(prof, params, np.zeros(7)) == pytest.approx(prof.alpha_n * 5 ** -2.5, rel=1e-13)


def test_bubble_bar_zero_shift_limit(rng):
    prof = BubbleProfile(7)
    pts = rng.normal(size=(5, 7))
    params = TransformParams(mu=1.0, d_n=1e-12, eps=0.1, dim_n=7)
    assert np.allclose(eval_bubble_bar(prof, params, pts), eval_bubble(prof, pts), rtol=1e-9)


def test_bubble_bar_rejects_nonpositive_shift():
    with pytest.raises(DomainError):
        eval_bubble_bar(BubbleProfile(7), TransformParams(1.0, 0.0, 0.1, 7), np.zeros(7))


@settings(max_examples=50, deadline=None)
@given(t=st.floats(-5, 5), s=st.floats(0.1, 3.0), y=st.floats(-2, 2))
def test_reflection_about_dirichlet_plane(t, s, y):
    prof = BubbleProfile(7)
    eps = 0.05
    rho = eps ** 1.2
    params = TransformParams(mu=1.0, d_n=s * rho / eps, eps=eps, dim_n=7)
    shift = params.plane_shift
    a = np.array([y, 0, 0, 0, 0, 0, -shift + t])
    b = np.array([y, 0, 0, 0, 0, 0, -shift - t])
    assert eval_bubble_bar(prof, params, a) == pytest.approx(eval_bubble(prof, b), rel=1e-12)
    plane = np.array([y, 0, 0, 0, 0, 0, -shift])
    assert eval_bubble_bar(prof, params, plane) == pytest.approx(eval_bubble(prof, plane), rel=1e-12)


def test_radial_symmetry(rng):
    prof = BubbleProfile(9)
    pts = rng.normal(size=(10, 9))
    q, _ = np.linalg.qr(rng.normal(size=(9, 9)))
    assert np.allclose(eval_bubble(prof, pts @ q.T), eval_bubble(prof, pts), rtol=1e-14)


def test_kernel_values_at_origin_and_unit_vector():
    n = 7
    prof = BubbleProfile(n)
    zero = np.zeros(n)
    assert eval_kernel(KernelBasis(n, n + 1), zero) == pytest.approx((n - 2) / 2 * prof.alpha_n)
    for j in range(1, n + 1):
        assert eval_kernel(KernelBasis(n, j), zero) == 0.0
    e1 = np.eye(n)[0]
    assert eval_kernel(KernelBasis(n, 1), e1) == pytest.approx(-(n - 2) * prof.alpha_n * 2 ** (-n / 2), rel=1e-14)


def test_kernel_index_range():
    with pytest.raises(DomainError):
        KernelBasis(7, 0)
    with pytest.raises(DomainError):
        KernelBasis(7, 9)


@pytest.mark.parametrize("dim_n", [7, 10])
def test_kernel_solves_linearized_equation(dim_n, rng):
    pts = random_points(rng, dim_n, 8, 1.3)
    r = np.linalg.norm(pts, axis=1)
    for j in range(1, dim_n + 2):
        basis = KernelBasis(dim_n, j)
        errs = []
        for h in (0.02, 0.01):
            lap = fd_laplacian(basis, pts, h)
            errs.append(np.max(np.abs(lap + radial_potential(dim_n, r) * basis(pts))))
        assert errs[1] < errs[0] / 3.5


def test_kernel_matches_gradient_fd(rng):
    n = 7
    prof = BubbleProfile(n)
    x = rng.normal(size=n)
    h = 1e-5
    for j in range(1, n + 1):
        e = np.eye(n)[j - 1] * h
        fd = (eval_bubble(prof, x + e) - eval_bubble(prof, x - e)) / (2 * h)
        assert eval_kernel(KernelBasis(n, j), x) == pytest.approx(fd, rel=1e-7)
    # dilation generator
    fd = (eval_bubble(prof, x * (1 + h)) - eval_bubble(prof, x * (1 - h))) / (2 * h)
    assert eval_kernel(KernelBasis(n, n + 1), x) == pytest.approx(fd + (n - 2) / 2 * eval_bubble(prof, x), rel=1e-7)


def test_scaling_family(rng):
    prof = BubbleProfile(7)
    pts = rng.normal(size=(10, 7))
    assert np.allclose(scaling_family(prof, 1.0, pts), eval_bubble(prof, pts), rtol=1e-14, atol=0)
    errs = []
    for h in (1e-2, 5e-3):
        d = (scaling_family(prof, 1 + h, pts) - scaling_family(prof, 1 - h, pts)) / (2 * h)
        errs.append(np.max(np.abs(d + eval_kernel(KernelBasis(7, 8), pts))))
    assert errs[1] < errs[0] / 3.5
    with pytest.raises(DomainError):
        scaling_family(prof, 0.0, pts)


def test_transform_params_rho_and_alpha():
    params = TransformParams(mu=1.0, d_n=1.0, eps=0.01, dim_n=7)
    assert params.rho == pytest.approx(0.01 ** 1.2)
    vals = [alpha_eps(e, 7) for e in (1e-2, 1e-4, 1e-6)]
    assert np.all(np.isfinite(vals))
    assert abs(vals[2]) < abs(vals[1]) < abs(vals[0])


def test_balancing_factor_balances_constants():
    n, eps = 7, 0.02
    p = (n + 2) / (n - 2)
    rho = eps ** ((n - 1) / (n - 2))
    c = balancing_factor(eps, n)
    # c U^p must equal rho^{(N-2) eps / 2} c^{p - eps} U^p (constants only)
    assert c == pytest.approx(rho ** ((n - 2) * eps / 2) * c ** (p - eps), rel=1e-13)
    assert c * (1 + alpha_eps(eps, n)) == pytest.approx(1.0, rel=1e-13)
