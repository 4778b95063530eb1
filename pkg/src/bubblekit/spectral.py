"""Positive eigenpair (lambda1, Z0) of Delta + pU^{p-1} on radial functions.

Two independent routes:

* ``solve_eigen_shooting``: bisection on the sign of the blow-up of the regular
  radial solution, then an outward/inward matched integration for Z0.
* ``solve_eigen_fd``: symmetric finite differences for psi = r^{(N-1)/2} phi with a
  Robin condition at the outer radius, largest eigenvalue of the tridiagonal matrix.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .bubble import radial_potential, radial_z_dilation, sphere_area
from .errors import BracketError, ConvergenceError, DomainError


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid r_i = i h, 0 <= i <= r_max / h."""

    h: float = 0.01
    r_max: float = 40.0

    @property
    def nodes(self):
        m = int(round(self.r_max / self.h))
        return self.h * np.arange(m + 1)


@dataclass(frozen=True)
class SpectralPair:
    """Eigenvalue lambda1 and unit-L2(R^N) radial eigenfunction Z0 on a grid.

    Attributes
    ----------
    dim_n : int
    lambda1 : float
    r : ndarray
        Radial nodes, r[0] = 0.
    z0 : ndarray
        Z0(r) at the nodes, normalized so that |S^{N-1}| int Z0^2 r^{N-1} dr = 1.
    info : dict
        Method metadata and diagnostics.
    """

    dim_n: int
    lambda1: float
    r: np.ndarray
    z0: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def h(self):
        return float(self.r[1] - self.r[0])

    @property
    def r_max(self):
        return float(self.r[-1])

    def __call__(self, r):
        """Z0 at arbitrary radii: spline inside the grid, asymptotic tail outside."""
        r = np.asarray(r, dtype=float)
        spline = self._spline()
        out = np.empty_like(r)
        inside = r <= self.r_max
        out[inside] = spline(r[inside])
        if np.any(~inside):
            out[~inside] = self._tail(r[~inside])
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return self._spline()(np.minimum(r, self.r_max), 1)

    def _spline(self):
        cache = self.info.setdefault("_spline", [])
        if not cache:
            cache.append(CubicSpline(self.r, self.z0, bc_type=((1, 0.0), "not-a-knot")))
        return cache[0]

    def _tail(self, r):
        k = np.sqrt(self.lambda1)
        m = (self.dim_n - 1.0) * (self.dim_n - 3.0) / 4.0
        shape = lambda x: x ** (-(self.dim_n - 1.0) / 2.0) * np.exp(-k * x) * (1 + m / (2 * k * x))
        return self.z0[-1] * shape(r) / shape(self.r_max)

    def l2_norm(self):
        return np.sqrt(sphere_area(self.dim_n) * simpson(self.z0 ** 2 * self.r ** (self.dim_n - 1), x=self.r))

    def save(self, stem):
        """Write ``stem.csv`` (r, Z0) and ``stem.json`` (header)."""
        np.savetxt(f"{stem}.csv", np.column_stack([self.r, self.z0]), delimiter=",",
                   header="r,z0", comments="", fmt="%.17g")
        header = {"dim_n": self.dim_n, "lambda1": self.lambda1, "h": self.h, "r_max": self.r_max,
                  "nodes": int(self.r.size),
                  "info": {k: v for k, v in self.info.items() if not k.startswith("_")}}
        with open(f"{stem}.json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, stem):
        with open(f"{stem}.json") as fh:
            header = json.load(fh)
        data = np.loadtxt(f"{stem}.csv", delimiter=",", skiprows=1)
        return cls(header["dim_n"], header["lambda1"], data[:, 0], data[:, 1], dict(header["info"]))


def _check_dim(dim_n):
    if int(dim_n) != dim_n or dim_n < 5:
        raise DomainError(f"spectral solver needs integer N >= 5, got {dim_n}")


def _radial_rhs(dim_n, lam):
    def rhs(r, y):
        phi, dphi = y
        return [dphi, -(dim_n - 1.0) / r * dphi - (radial_potential(dim_n, r) - lam) * phi]
    return rhs


def _regular_start(dim_n, lam, r0):
    # phi = 1 + c2 r^2 + c4 r^4 from the series of the regular solution
    v0 = radial_potential(dim_n, 0.0)
    v2 = -2.0 * v0  # V(r) = v0 (1 - 2 r^2 + ...)
    c2 = (lam - v0) / (2.0 * dim_n)
    c4 = ((lam - v0) * c2 - v2) / (4.0 * (dim_n + 2.0))
    return [1 + c2 * r0 ** 2 + c4 * r0 ** 4, 2 * c2 * r0 + 4 * c4 * r0 ** 3]


def _blowup_sign(dim_n, lam, r_end, rtol):
    r0 = 1e-3
    event = lambda r, y: abs(y[0]) - 1e6
    event.terminal = True
    sol = solve_ivp(_radial_rhs(dim_n, lam), (r0, r_end), _regular_start(dim_n, lam, r0),
                    method="DOP853", rtol=rtol, atol=1e-300, events=event)
    return np.sign(sol.y[0, -1])


def _asymptotic_tail(dim_n, lam, r):
    k = np.sqrt(lam)
    m = (dim_n - 1.0) * (dim_n - 3.0) / 4.0
    f = 1 + m / (2 * k * r)
    df = -m / (2 * k * r * r)
    psi = np.exp(-k * r) * f
    dpsi = np.exp(-k * r) * (df - k * f)
    a = (dim_n - 1.0) / 2.0
    phi = r ** (-a) * psi
    dphi = r ** (-a) * dpsi - a * r ** (-a - 1) * psi
    return phi, dphi


def bisect_lambda1(dim_n, tol=1e-13, r_end=25.0, bracket=None, max_iter=200):
    """Locate lambda1 by bisection on the blow-up sign of the regular solution."""
    _check_dim(dim_n)
    lo, hi = bracket if bracket is not None else (0.5, radial_potential(dim_n, 0.0))
    s_lo = _blowup_sign(dim_n, lo, r_end, 1e-12)
    s_hi = _blowup_sign(dim_n, hi, r_end, 1e-12)
    if s_lo == s_hi:
        raise BracketError(f"no sign change of the shooting solution on [{lo}, {hi}] for N={dim_n}")
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        s_mid = _blowup_sign(dim_n, mid, r_end, 1e-12)
        if s_mid == s_lo:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * mid:
            return 0.5 * (lo + hi), it + 1
    raise ConvergenceError(f"bisection for lambda1 did not converge in {max_iter} steps")


def matched_eigenfunction(dim_n, lam, grid, r_match=4.0):
    """Z0 on the grid from an outward regular branch and an inward decaying branch."""
    r = grid.nodes
    inner = r[(r > 0) & (r <= r_match)]
    outer = r[r >= r_match][::-1]
    r0 = 1e-3
    sol_in = solve_ivp(_radial_rhs(dim_n, lam), (r0, r_match), _regular_start(dim_n, lam, r0),
                       method="DOP853", rtol=1e-13, atol=1e-300, t_eval=inner, dense_output=True)
    start = _asymptotic_tail(dim_n, lam, grid.r_max)
    sol_out = solve_ivp(_radial_rhs(dim_n, lam), (grid.r_max, r_match), start,
                        method="DOP853", rtol=1e-13, atol=1e-300, t_eval=outer)
    scale = sol_in.y[0, -1] / sol_out.y[0, -1]
    phi = np.empty_like(r)
    phi[0] = 1.0
    phi[1:inner.size + 1] = sol_in.y[0]
    phi[inner.size:] = scale * sol_out.y[0][::-1]
    # derivative mismatch at the junction measures how well lam solves the problem
    jump = sol_in.y[1, -1] - scale * sol_out.y[1, -1]
    return phi, abs(jump / sol_in.y[1, -1])


def normalize_radial(dim_n, r, phi):
    norm2 = sphere_area(dim_n) * simpson(phi ** 2 * r ** (dim_n - 1), x=r)
    return phi / np.sqrt(norm2)


def ode_residual(dim_n, lam, r, phi):
    """Sup of |phi'' + (N-1)/r phi' + (pU^{p-1} - lam) phi| via 6th-order differences."""
    h = r[1] - r[0]
    i = np.arange(3, r.size - 3)
    f = lambda k: phi[i + k]
    d1 = (f(3) - 9 * f(2) + 45 * f(1) - 45 * f(-1) + 9 * f(-2) - f(-3)) / (60 * h)
    d2 = (2 * f(3) - 27 * f(2) + 270 * f(1) - 490 * f(0) + 270 * f(-1) - 27 * f(-2) + 2 * f(-3)) / (180 * h * h)
    res = d2 + (dim_n - 1.0) / r[i] * d1 + (radial_potential(dim_n, r[i]) - lam) * phi[i]
    return float(np.max(np.abs(res)))


def solve_eigen_shooting(dim_n, tol=1e-5, grid=None):
    """lambda1 by shooting bisection and Z0 by matched integration.

    Parameters
    ----------
    dim_n : int
        N >= 5.
    tol : float
        Bound on the sup-norm ODE residual of the returned Z0 on the grid.
    grid : RadialGrid, optional
        Defaults to h = 0.01, r_max = 40.
    """
    _check_dim(dim_n)
    if tol <= 0:
        raise DomainError("tol must be positive")
    grid = grid or RadialGrid()
    lam, iters = bisect_lambda1(dim_n)
    phi, jump = matched_eigenfunction(dim_n, lam, grid)
    r = grid.nodes
    z0 = normalize_radial(dim_n, r, phi)
    residual = ode_residual(dim_n, lam, r, z0)
    if residual > tol:
        raise ConvergenceError(f"ODE residual {residual:.3e} exceeds tol {tol:.1e}")
    info = {"method": "shooting", "bisection_steps": iters, "ode_residual": residual,
            "derivative_jump": jump}
    return SpectralPair(dim_n, float(lam), r, z0, info)


def _fd_top_eigs(dim_n, h, r_max, lam_robin, count=2):
    m = int(round(r_max / h))
    r = h * np.arange(1, m + 1)
    centrifugal = (dim_n - 1.0) * (dim_n - 3.0) / (4.0 * r * r)
    diag = -2.0 / h ** 2 - centrifugal + radial_potential(dim_n, r)
    off = np.full(m - 1, 1.0 / h ** 2)
    # Robin psi'/psi = -sqrt(lam) + (N-1)/(2R) by a ghost node, symmetrized by sqrt(2)
    kappa = -np.sqrt(lam_robin) + (dim_n - 1.0) / (2.0 * r_max)
    diag[-1] += 2.0 * h * kappa / h ** 2
    off[-1] *= np.sqrt(2.0)
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(m - count, m - 1))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    psi = vecs[:, 0].copy()
    psi[-1] *= np.sqrt(2.0)
    return vals, r, psi


def solve_eigen_fd(dim_n, grid=None, lam_guess=None):
    """Largest eigenvalue of the discretized radial operator and its eigenvector.

    One outer pass updates the Robin coefficient with the computed eigenvalue.
    Raises DomainError if the grid is too coarse (relative |lambda(h) - lambda(2h)| > 1e-3).
    """
    _check_dim(dim_n)
    grid = grid or RadialGrid()
    if grid.h > 0.02 or grid.r_max < 30:
        raise DomainError(f"grid must have h <= 0.02 and r_max >= 30, got h={grid.h}, r_max={grid.r_max}")
    lam = lam_guess if lam_guess is not None else dim_n + 1.0
    for _ in range(2):
        vals, r, psi = _fd_top_eigs(dim_n, grid.h, grid.r_max, lam)
        lam = vals[0]
    coarse, _, _ = _fd_top_eigs(dim_n, 2 * grid.h, grid.r_max, lam)
    if abs(coarse[0] - lam) > 1e-3 * abs(lam):
        raise DomainError(f"grid too coarse: lambda(h)={lam:.6g}, lambda(2h)={coarse[0]:.6g}")
    phi = psi * r ** (-(dim_n - 1.0) / 2.0)
    phi = np.concatenate([[(4 * phi[0] - phi[1]) / 3.0], phi])  # even extension to r = 0
    rr = np.concatenate([[0.0], r])
    phi *= np.sign(phi[1])
    z0 = normalize_radial(dim_n, rr, phi)
    info = {"method": "fd", "second_eigenvalue": float(vals[1]), "coarse_lambda": float(coarse[0]),
            "eigvec_min": float(np.min(psi * np.sign(psi[0])))}
    return SpectralPair(dim_n, float(lam), rr, z0, info)


def richardson_fd(dim_n, h=0.01, r_max=40.0):
    """Three-level FD ladder (h, h/2, h/4) with Richardson extrapolation of order 2.

    Returns a dict with the eigenvalue ladder, convergence ratio and extrapolated values
    of the first two eigenvalues.
    """
    lams, seconds = [], []
    lam = dim_n + 1.0
    for level in range(3):
        pair = solve_eigen_fd(dim_n, RadialGrid(h / 2 ** level, r_max), lam_guess=lam)
        lam = pair.lambda1
        lams.append(pair.lambda1)
        seconds.append(pair.info["second_eigenvalue"])
    ratio = (lams[0] - lams[1]) / (lams[1] - lams[2])
    extrap = lams[2] + (lams[2] - lams[1]) / 3.0
    second = seconds[2] + (seconds[2] - seconds[1]) / 3.0
    return {"lambdas": lams, "ratio": ratio, "lambda1": extrap, "seconds": seconds,
            "second_extrapolated": second, "h": [h / 2 ** i for i in range(3)]}


def count_positive_modes(dim_n, h=0.01, r_max=40.0):
    """Number of discrete eigenvalues above the discretization floor 20 h^2."""
    vals, _, _ = _fd_top_eigs(dim_n, h, r_max, dim_n + 1.0, count=4)
    return int(np.sum(vals > 20 * h * h)), vals


def decay_rate_fit(pair, lo=15.0, hi=30.0):
    """Slope of -log Z0 - ((N-1)/2) log r against r on [lo, hi]."""
    mask = (pair.r >= lo) & (pair.r <= hi)
    r = pair.r[mask]
    y = -np.log(pair.z0[mask]) - (pair.dim_n - 1.0) / 2.0 * np.log(r)
    slope = np.polyfit(r, y, 1)[0]
    return float(slope)


def tail_bound(pair):
    """Range of log Z0 + sqrt(lambda1) r + ((N-1)/2) log r on [r_max/2, r_max]."""
    mask = pair.r >= pair.r_max / 2
    r = pair.r[mask]
    g = np.log(pair.z0[mask]) + np.sqrt(pair.lambda1) * r + (pair.dim_n - 1.0) / 2.0 * np.log(r)
    return float(g.max() - g.min())


def inner_product_radial(dim_n, r, f, g):
    """|S^{N-1}| int f g r^{N-1} dr by Simpson on the grid."""
    return sphere_area(dim_n) * simpson(f * g * r ** (dim_n - 1), x=r)


def orthogonality_dilation(pair):
    """int Z0 Z_{N+1} over R^N (should vanish)."""
    return inner_product_radial(pair.dim_n, pair.r, pair.z0, radial_z_dilation(pair.dim_n, pair.r))
