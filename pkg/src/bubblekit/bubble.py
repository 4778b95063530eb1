"""Standard bubble U on R^N, its reflected copy, and the linearization kernel.

All formulas are closed forms. Points are arrays whose last axis has length N.
Radial helpers (``radial_*``) take r = |xi| and are used by the quadrature and
construction modules, where integrands are functions of (s, t) = (|xi_bar|, xi_N).
"""
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from .errors import DomainError


def critical_exponent(dim_n):
    """p = (N+2)/(N-2)."""
    return (dim_n + 2.0) / (dim_n - 2.0)


def bubble_alpha(dim_n):
    """Normalization (N(N-2))^{(N-2)/4} making U an exact solution."""
    return (dim_n * (dim_n - 2.0)) ** ((dim_n - 2.0) / 4.0)


@dataclass(frozen=True)
class BubbleProfile:
    """Standard bubble U(xi) = alpha_N (1+|xi|^2)^{-(N-2)/2}.

    Parameters
    ----------
    dim_n : int
        Transverse dimension N >= 3.
    """

    dim_n: int
    alpha_n: float = field(init=False)

    def __post_init__(self):
        if int(self.dim_n) != self.dim_n or self.dim_n < 3:
            raise DomainError(f"dim_n must be an integer >= 3, got {self.dim_n}")
        object.__setattr__(self, "alpha_n", bubble_alpha(self.dim_n))

    @property
    def p(self):
        return critical_exponent(self.dim_n)


@dataclass(frozen=True)
class KernelBasis:
    """Bounded kernel element Z_j of -Delta - pU^{p-1}, 1 <= j <= N+1.

    Z_j = dU/dxi_j for j <= N and Z_{N+1} = xi.grad U + (N-2)/2 U.
    """

    dim_n: int
    index: int

    def __post_init__(self):
        if not 1 <= self.index <= self.dim_n + 1:
            raise DomainError(f"kernel index must be in [1, {self.dim_n + 1}], got {self.index}")

    def __call__(self, xi):
        return eval_kernel(self, xi)


@dataclass(frozen=True)
class TransformParams:
    """Scale and shift parameters of the blown-up variables.

    Parameters
    ----------
    mu : float
        Concentration scale in xi-units.
    d_n : float
        Normal distance parameter (> 0).
    eps : float
        Small parameter; rho = eps^{(N-1)/(N-2)} is derived, never stored.
    dim_n : int
    d_bar : array of length N-1, optional
        Tangential shift.
    """

    mu: float
    d_n: float
    eps: float
    dim_n: int
    d_bar: tuple = ()

    @property
    def rho(self):
        return self.eps ** ((self.dim_n - 1.0) / (self.dim_n - 2.0))

    @property
    def plane_shift(self):
        """Distance s = eps d_n / (rho mu) from the bubble centre to the Dirichlet plane."""
        return self.eps * self.d_n / (self.rho * self.mu)

    @property
    def alpha_eps(self):
        return alpha_eps(self.eps, self.dim_n)


def alpha_eps(eps, dim_n):
    """Printed rescaling constant rho^{(N-2)^2 eps / (8 - 2 eps (N-2))} - 1."""
    n = float(dim_n)
    rho = eps ** ((n - 1) / (n - 2))
    return rho ** ((n - 2) ** 2 * eps / (8 - 2 * eps * (n - 2))) - 1.0


def balancing_factor(eps, dim_n):
    """Constant c = 1 + alpha balancing Delta(cU) against rho^{(N-2)eps/2}(cU)^{p-eps}.

    The constants match when c^{p-1-eps} = rho^{-(N-2)eps/2}, i.e.
    c = rho^{-(N-2)^2 eps / (8 - 2 eps (N-2))}. Note the sign of the exponent is
    opposite to ``alpha_eps``.
    """
    n = float(dim_n)
    rho = eps ** ((n - 1) / (n - 2))
    return rho ** (-(n - 2) ** 2 * eps / (8 - 2 * eps * (n - 2)))


# ----------------------------------------------------------------- radial forms
def radial_u(dim_n, r):
    r = np.asarray(r, dtype=float)
    return bubble_alpha(dim_n) * (1.0 + r * r) ** (-(dim_n - 2.0) / 2.0)


def radial_du_over_r(dim_n, r):
    """U'(r)/r, so that dU/dxi_j = xi_j * radial_du_over_r."""
    r = np.asarray(r, dtype=float)
    return -(dim_n - 2.0) * bubble_alpha(dim_n) * (1.0 + r * r) ** (-dim_n / 2.0)


def radial_z_dilation(dim_n, r):
    """Z_{N+1} = alpha (N-2)/2 (1-r^2)(1+r^2)^{-N/2}."""
    r = np.asarray(r, dtype=float)
    a = bubble_alpha(dim_n)
    return a * (dim_n - 2.0) / 2.0 * (1.0 - r * r) * (1.0 + r * r) ** (-dim_n / 2.0)


def radial_potential(dim_n, r):
    """pU^{p-1} = p N (N-2) (1+r^2)^{-2}."""
    r = np.asarray(r, dtype=float)
    return critical_exponent(dim_n) * dim_n * (dim_n - 2.0) / (1.0 + r * r) ** 2


def radial_d2u(dim_n, r):
    """Second radial derivative U''(r)."""
    r = np.asarray(r, dtype=float)
    a = bubble_alpha(dim_n)
    q = 1.0 + r * r
    return -(dim_n - 2.0) * a * (q ** (-dim_n / 2.0) - dim_n * r * r * q ** (-dim_n / 2.0 - 1.0))


# ------------------------------------------------------------- point evaluation
def _as_points(profile_dim, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != profile_dim:
        raise DomainError(f"points must have last axis {profile_dim}, got shape {xi.shape}")
    return xi


def eval_bubble(profile, xi):
    """U(xi) = alpha_N (1+|xi|^2)^{-(N-2)/2}; xi has last axis N."""
    xi = _as_points(profile.dim_n, xi)
    r2 = np.sum(xi * xi, axis=-1)
    return profile.alpha_n * (1.0 + r2) ** (-(profile.dim_n - 2.0) / 2.0)


def eval_bubble_bar(profile, params, xi):
    """Reflected copy U(xi_bar, xi_N + 2 s), s the distance to the Dirichlet plane."""
    if params.d_n <= 0:
        raise DomainError(f"d_n must be positive, got {params.d_n}")
    if params.mu <= 0:
        raise DomainError(f"mu must be positive, got {params.mu}")
    xi = _as_points(profile.dim_n, xi).copy()
    xi[..., -1] += 2.0 * params.plane_shift
    return eval_bubble(profile, xi)


def eval_gradient(profile, xi):
    """Exact gradient of U, same shape as xi."""
    xi = _as_points(profile.dim_n, xi)
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    return xi * radial_du_over_r(profile.dim_n, r)[..., None]


def eval_kernel(basis, xi):
    """Closed-form Z_j(xi) for 1 <= j <= N+1."""
    n = basis.dim_n
    xi = _as_points(n, xi)
    r = np.sqrt(np.sum(xi * xi, axis=-1))
    if basis.index == n + 1:
        return radial_z_dilation(n, r)
    return xi[..., basis.index - 1] * radial_du_over_r(n, r)


def scaling_family(profile, lam, xi):
    """U_lambda(xi) = alpha_N (lambda / (lambda^2 + |xi|^2))^{(N-2)/2}."""
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    xi = _as_points(profile.dim_n, xi)
    r2 = np.sum(xi * xi, axis=-1)
    return profile.alpha_n * (lam / (lam * lam + r2)) ** ((profile.dim_n - 2.0) / 2.0)


def sphere_area(dim):
    """Area |S^{dim-1}| of the unit sphere in R^dim."""
    return 2.0 * pi ** (dim / 2.0) / gamma(dim / 2.0)


def fd_laplacian(func, xi, h):
    """Second-order (2N+1)-point Laplacian of func at points xi (last axis N)."""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    centre = func(xi)
    total = -2.0 * n * centre
    for j in range(n):
        step = np.zeros(n)
        step[j] = h
        total = total + func(xi + step) + func(xi - step)
    return total / (h * h)


def pde_residual(profile, xi, h):
    """Finite-difference residual Delta_h U + U^p at xi."""
    u = eval_bubble(profile, xi)
    return fd_laplacian(lambda x: eval_bubble(profile, x), xi, h) + u ** profile.p
