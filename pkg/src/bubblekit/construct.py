"""Approximate solutions v_I at frozen points of K and the residual-order ladder.

At a frozen point of K with parameters constant along K (true on the symmetric models,
where the traces do not depend on the point), every tangential-derivative term of the
error operator vanishes and S_eps acts on axisymmetric fields f(s, t), s = |xi_bar|,
t = xi_N. With x = eps d + rho mu t (distance to K in the original scale),

    S(v) = -Delta v - mu^{(N-2) eps / 2} v_+^{p - eps} - P(v),
    P(v) = (2 h x + q x^2) Delta_bar v - rho mu (tr H + tr H^2 x) d_t v + c_s s d_s v,

where H_ij = h delta_ij on the normal block, Q(H)_ij = q delta_ij and
c_s = rho^2 mu^2 (drift - ricci / 3) collects the curvature drift terms. Terms of order
eps^2, eps rho, rho^2 are kept (truncation 2); the bounded coefficient functions with no
closed form and the cubic remainder are left out and only their size is logged.

Analytic layers U - U_bar + eps e chi Z0 are differentiated in closed form; numerical
layers w_I use the finite-volume Laplacian and the stencils of ``linsolve``.
"""
import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import root

from .bubble import critical_exponent, radial_d2u, radial_du_over_r, radial_potential, radial_u
from .errors import ConvergenceError, DomainError
from .geometry import shape_at
from .linsolve import (AxialGrid, AxiField, Perturbation, ProjectedProblem, _apply_dirichlet, _unknown_mask,
                       apply_perturbation, assemble_full, kernel_fields, orthogonalize_rhs, solve_projected)

GAMMA_DEFAULT = 0.75
MODE0_KERNELS = (0, -2, -1)  # Z0, Z_N, Z_{N+1} in kernel_labels order


# ----------------------------------------------------------------------------- geometry
@dataclass(frozen=True)
class FrozenGeometry:
    """Curvature scalars at a frozen point of K with an isotropic normal block.

    Attributes
    ----------
    h_bar : float
        H_ij = h_bar delta_ij on the normal block.
    trace, trace_sq : float
        tr H and tr H^2 over all boundary directions.
    q : float
        Q(H)_ij = q delta_ij (the x_N^2 factor taken out).
    ricci : float
        sum_i R_{i11i} over the normal block.
    drift : float
        2/3 sum_l R_{mllj} + sum_a R_{jaam} - Gamma Gamma = drift delta_mj.
    """

    dim_n: int
    h_bar: float = 0.0
    trace: float = 0.0
    trace_sq: float = 0.0
    q: float = 0.0
    ricci: float = 0.0
    drift: float = 0.0
    h_aa: float = 0.0
    h_jj: float = 0.0

    @classmethod
    def flat(cls, dim_n):
        return cls(dim_n)

    @classmethod
    def from_model(cls, model, y, tol=1e-7):
        sd = shape_at(model, y)
        k = sd.k
        big = sd.H
        nn = big.shape[0] - k
        if nn < 2:
            raise DomainError("need at least two normal directions")
        block = big[k:, k:]
        h = np.trace(block) / nn
        mixed = big[k:, :k]
        if np.max(np.abs(block - h * np.eye(nn))) > tol or np.max(np.abs(mixed), initial=0.0) > tol:
            raise DomainError("frozen-point evaluation needs H_ij = h delta_ij and H_aj = 0")
        if sd.gamma.size and np.max(np.abs(sd.gamma)) > 1e-5:
            raise DomainError("frozen-point evaluation needs a parallel normal frame")
        sq = big @ big
        qmat = 3.0 * sq[k:, k:] + 3.0 * mixed @ mixed.T
        r = sd.curvature
        ricci = float(sum(r[k + i, k, k, k + i] for i in range(nn)))
        drift_mat = 2.0 / 3.0 * np.einsum("mllj->mj", r[k:, k:, k:, k:]) + sd.jacobi_coefficient()
        for name, mat in (("Q(H)", qmat), ("drift", drift_mat)):
            c = np.trace(mat) / nn
            if np.max(np.abs(mat - c * np.eye(nn))) > 1e-5 * max(1.0, abs(c)):
                raise DomainError(f"{name} block is not isotropic")
        return cls(nn + 1, float(h), float(np.trace(big)), float(np.trace(sq)), float(np.trace(qmat) / nn),
                   ricci, float(np.trace(drift_mat) / nn), sd.sum_aa, sd.sum_jj)

    @property
    def traces(self):
        return self.h_aa, self.h_jj


# ----------------------------------------------------------------------------- solution
@dataclass(frozen=True)
class GridSpec:
    """Axial grid used at every eps; plane_cells fixes the node count below the centre."""

    h: float = 0.1
    cap: float = 40.0
    core: float = 2.0
    flat_shift: float = 8.0

    def build(self, dim_n, plane_shift, plane_cells):
        return AxialGrid(dim_n, self.h, self.cap, plane_shift, self.core, plane_cells)

    def cells_for(self, plane_shift):
        return max(8, int(round(plane_shift / self.h)))


@dataclass(frozen=True)
class ApproxSolution:
    """v_I = U - U_bar + w_1 + ... + w_I + eps e chi Z0 at one frozen point of K.

    The chi of the Z0 term equals 1 for |xi| <= S/2 and 0 for |xi| >= S (S the plane
    shift), so it vanishes on the Dirichlet plane. ``gamma`` and ``outer_radii`` record the
    outer cutoff of the global construction (radii 2 eps^-gamma and 4 eps^-gamma), which
    is not applied in the local residual.
    """

    dim_n: int
    eps: float
    mu: float
    d_n: float
    e: float
    geometry: FrozenGeometry
    spectral: object = field(repr=False)
    grid: AxialGrid = field(repr=False)
    layers: tuple = ()
    truncation: int = 2
    operator: str = "full"
    gamma: float = GAMMA_DEFAULT

    def __post_init__(self):
        if self.truncation not in (0, 1, 2):
            raise DomainError("truncation must be 0, 1 or 2")
        if self.operator not in ("leading", "full"):
            raise DomainError("operator must be 'leading' or 'full'")
        if not 0.5 < self.gamma < 1.0:
            raise DomainError("gamma must lie in (1/2, 1)")
        if self.mu <= 0 or self.d_n <= 0:
            raise DomainError("mu and d_n must be positive")

    @property
    def order(self):
        return len(self.layers)

    @property
    def rho(self):
        return self.eps ** ((self.dim_n - 1.0) / (self.dim_n - 2.0))

    @property
    def plane_shift(self):
        return self.grid.plane_shift

    @property
    def outer_radii(self):
        if self.eps == 0:
            return (np.inf, np.inf)
        return (2.0 * self.eps ** -self.gamma, 4.0 * self.eps ** -self.gamma)

    def params(self):
        return {"mu": self.mu, "d_n": self.d_n, "e": self.e}


def plane_shift(dim_n, eps, mu, d_n):
    """S = eps d / (rho mu) = eps^{-1/(N-2)} d / mu."""
    return eps ** (-1.0 / (dim_n - 2.0)) * d_n / mu


def make_solution(dim_n, eps, params, geometry, spectral, grid_spec=None, plane_cells=None, **kw):
    """v_0 at the given (mu, d_n, e); plane_cells defaults to the grid spacing count."""
    grid_spec = grid_spec or GridSpec()
    mu, d_n, e = params
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    shift = grid_spec.flat_shift if eps == 0 else plane_shift(dim_n, eps, mu, d_n)
    cells = plane_cells or grid_spec.cells_for(shift)
    grid = grid_spec.build(dim_n, shift, cells)
    if geometry.dim_n != dim_n or spectral.dim_n != dim_n:
        raise DomainError("dimension mismatch between geometry, spectral pair and N")
    return ApproxSolution(dim_n, eps, mu, d_n, e, geometry, spectral, grid, **kw)


# ----------------------------------------------------------------------------- analytic layers
def _smoothstep(x):
    """C^3 step 0 -> 1 on [0, 1] with first and second derivatives."""
    x = np.clip(x, 0.0, 1.0)
    val = x ** 4 * (35 - 84 * x + 70 * x * x - 20 * x ** 3)
    d1 = 140 * x ** 3 * (1 - x) ** 3
    d2 = 420 * x * x * (1 - x) ** 2 * (1 - 2 * x)
    return val, d1, d2


def z0_cutoff(r, shift):
    """chi(r) = 1 - step((r - S/2) / (S/2)) and its first two derivatives."""
    r1 = 0.5 * shift
    width = shift - r1
    val, d1, d2 = _smoothstep((r - r1) / width)
    return 1.0 - val, -d1 / width, -d2 / width ** 2


def _radial_ops(dim_n, f, g, fpp, s, t, tc):
    """Delta, Delta_bar, d_t, s d_s of F(r), r = |(s, t - tc)|, from F, G = F'/r and F''."""
    tau = t - tc
    r2 = s * s + tau * tau
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(r2 > 0, s * s / r2, 0.0)
    return {"val": f,
            "lap": fpp + (dim_n - 1.0) * g,
            "lap_bar": fpp * w + g * (dim_n - 1.0 - w),
            "dt": g * tau,
            "sds": g * s * s}


def _bubble_ops(dim_n, s, t, tc):
    r = np.sqrt(s * s + (t - tc) ** 2)
    return _radial_ops(dim_n, radial_u(dim_n, r), radial_du_over_r(dim_n, r), radial_d2u(dim_n, r), s, t, tc)


def _z0_ops(v, s, t):
    n = v.dim_n
    sp = v.spectral
    r = np.sqrt(s * s + t * t)
    chi, chi1, chi2 = z0_cutoff(r, v.plane_shift)
    z, z1 = sp(r), sp.derivative(r)
    pot = radial_potential(n, r)
    small = r < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        z1_over_r = np.where(small, (sp.lambda1 - pot) * z / n, z1 / np.where(small, 1.0, r))
    z2 = (sp.lambda1 - pot) * z - (n - 1.0) * z1_over_r
    f = chi * z
    with np.errstate(invalid="ignore", divide="ignore"):
        g = chi * z1_over_r + np.where(small, 0.0, chi1 * z / np.where(small, 1.0, r))
    fpp = chi2 * z + 2 * chi1 * z1 + chi * z2
    return _radial_ops(n, f, g, fpp, s, t, 0.0)


def analytic_parts(v):
    """Values and derivatives of U - U_bar + eps e chi Z0 at every grid node."""
    ss, tt = v.grid.mesh()
    out = _bubble_ops(v.dim_n, ss, tt, 0.0)
    if v.eps > 0:
        bar = _bubble_ops(v.dim_n, ss, tt, -2.0 * v.plane_shift)
        out = {k: out[k] - bar[k] for k in out}
        if v.e != 0:
            z = _z0_ops(v, ss, tt)
            out = {k: out[k] + v.eps * v.e * z[k] for k in out}
    return out


def layer_sum(v):
    total = np.zeros(v.grid.shape)
    for w in v.layers:
        total = total + w.mode(0)
    return total


def values(v):
    """Nodal values of v (analytic layers plus numerical layers)."""
    return analytic_parts(v)["val"] + layer_sum(v)


# ----------------------------------------------------------------------------- error operator
def coefficients(v, truncation=None):
    """Callables (a_bar, b_t, c_sds) of P and the dropped-term log."""
    trunc = v.truncation if truncation is None else truncation
    g = v.geometry
    eps, rho, mu, d = v.eps, v.rho, v.mu, v.d_n
    q1 = 1.0 if trunc >= 1 else 0.0
    q2 = 1.0 if trunc >= 2 else 0.0

    def x(t):
        return eps * d + rho * mu * t

    def a_bar(s, t):
        return q1 * 2.0 * g.h_bar * x(t) + q2 * g.q * x(t) ** 2 + 0.0 * s

    def b_t(s, t):
        return -rho * mu * (q1 * g.trace + q2 * g.trace_sq * x(t)) + 0.0 * s

    def c_s(s, t):
        # coefficient of d_s: c * s (so the term is c s d_s v)
        return q2 * rho ** 2 * mu ** 2 * (g.drift - g.ricci / 3.0) * s + 0.0 * t

    return a_bar, b_t, c_s


def _perturbation_of_p(v, truncation, sign):
    a_bar, b_t, c_s = coefficients(v, truncation)
    return Perturbation(b_t=lambda s, t: sign * b_t(s, t), b_bar=lambda s, t: sign * a_bar(s, t),
                        b_s=lambda s, t: sign * c_s(s, t))


def nonlinearity(v, vals):
    n = v.dim_n
    p = critical_exponent(n)
    return v.mu ** ((n - 2) * v.eps / 2.0) * np.maximum(vals, 0.0) ** (p - v.eps)


def apply_error_operator(v, truncation=None):
    """S_eps(v) at interior nodes (zero on Dirichlet nodes) and a truncation log.

    Raises
    ------
    DomainError
        If v carries layers built against a different truncation.
    """
    trunc = v.truncation if truncation is None else truncation
    if v.order > 0 and trunc != v.truncation:
        raise DomainError(f"v of order {v.order} was built against truncation {v.truncation}, "
                          f"cannot evaluate with truncation {trunc}")
    grid = v.grid
    ss, tt = grid.mesh()
    an = analytic_parts(v)
    w = layer_sum(v)
    full, mass = assemble_full(grid, 0, potential=np.zeros(grid.shape))
    minus_lap_w = (full @ w.ravel()).reshape(grid.shape) / mass
    a_bar, b_t, c_s = coefficients(v, trunc)
    p_analytic = a_bar(ss, tt) * an["lap_bar"] + b_t(ss, tt) * an["dt"] + c_s(ss, tt) / np.where(ss > 0, ss, 1.0) * an["sds"]
    p_numeric = apply_perturbation(grid, 0, _perturbation_of_p(v, trunc, 1.0), w)
    vals = an["val"] + w
    res = -an["lap"] + minus_lap_w - nonlinearity(v, vals) - p_analytic - p_numeric
    mask = _unknown_mask(grid, 0)
    res = np.where(mask, res, 0.0)
    rho, mu = v.rho, v.mu
    xmax = v.eps * v.d_n + rho * mu * grid.cap
    log = {"truncation": trunc,
           "kept": ["eps", "rho"][:trunc] + (["eps^2", "eps rho", "rho^2"] if trunc >= 2 else []),
           "dropped": ["bounded coefficient functions D_Nl^ij", "cubic remainder B(v)",
                       "eps^3, eps^2 rho, eps^4 blocks (vanish for d_bar = 0)"],
           "cubic_remainder_bound": float(_cubic_bound(v)), "x_max": float(xmax)}
    return AxiField(grid, {0: res}), log


def _cubic_bound(v):
    """Declared size sup (1+|xi|^2)^2 x^3 |D^2 U| of the cubic remainder."""
    ss, tt = v.grid.mesh()
    r = np.sqrt(ss * ss + tt * tt)
    x = np.abs(v.eps * v.d_n + v.rho * v.mu * tt) + v.rho * v.mu * ss
    d2 = np.abs(radial_d2u(v.dim_n, r)) + np.abs(radial_du_over_r(v.dim_n, r))
    return np.max((1 + r * r) ** 2 * x ** 3 * d2)


def weighted_residual(v, r=4):
    """||S_eps(v)||_{eps, r} over the interior nodes."""
    res, _ = apply_error_operator(v)
    return res.weighted_norm(r)


# ----------------------------------------------------------------------------- layers
def linear_operator(v):
    """(potential dict, Perturbation) of the operator used for the next layer.

    'leading': -Delta - pU^{p-1} - 2 x h Delta_bar + rho mu tr H d_t.
    'full': the exact linearization of S_eps at v.
    """
    if v.operator == "leading":
        return None, _perturbation_of_p(v, min(v.truncation, 1), -1.0)
    n = v.dim_n
    p = critical_exponent(n)
    vals = values(v)
    pot = v.mu ** ((n - 2) * v.eps / 2.0) * (p - v.eps) * np.maximum(vals, 0.0) ** (p - 1 - v.eps)
    return {0: pot}, _perturbation_of_p(v, v.truncation, -1.0)


def kernel_projections(field_, spectral):
    """Gram-normalized components of field along the uncut Z0, Z_N, Z_{N+1}."""
    kernels = kernel_fields(field_.grid, spectral, with_cutoff=False)
    zs = [kernels[j] for j in MODE0_KERNELS]
    gram = np.array([[a.inner(b) for b in zs] for a in zs])
    rhs = np.array([field_.inner(z) for z in zs])
    return np.linalg.solve(gram, rhs), np.sqrt(np.diag(gram))


def build_next_layer(v, orth_threshold=0.25, check=True, r=3, zero_tol=1e-9):
    """Solve L w = -S(v) with the projected solver and append w.

    The right-hand side is first made orthogonal to the uncut kernels; the removed
    components c_j are reported relative to ||S(v)||_2. With the parameters solved at the
    matching level they are small; otherwise DomainError names the offending kernel.
    A residual with sup below zero_tol (round-off of an exact solution) gives w = 0.

    Returns
    -------
    (ApproxSolution, report)
    """
    res, _ = apply_error_operator(v)
    h0 = (-1.0) * res
    if h0.weighted_norm(0) < zero_tol:
        h0 = AxiField(v.grid, {0: np.zeros(v.grid.shape)})
    h, orth = orthogonalize_rhs(h0, v.spectral, with_cutoff=False)
    coef = np.array(orth["coefficients"])
    kernels = kernel_fields(v.grid, v.spectral, with_cutoff=False)
    scale = h0.l2_norm() or 1.0
    rel = np.array([abs(c) * (z.l2_norm() if z is not None else 0.0) / scale for c, z in zip(coef, kernels)])
    labels = ["Z0"] + [f"Z{j}" for j in range(1, v.dim_n + 2)]
    if check and np.max(rel) > orth_threshold:
        j = int(np.argmax(rel))
        raise DomainError(f"residual has a large component along {labels[j]} (relative {rel[j]:.3g}); "
                          "parameters are not solved at this level")
    pot, pert = linear_operator(v)
    size = pert.size(v.grid)
    prob = ProjectedProblem(v.grid, r, h, v.spectral, perturbation=pert, delta=max(2.0 * size, 0.1),
                            potential=pot, kernel_cutoff=False)
    if h.l2_norm() == 0:
        w = AxiField(v.grid, {0: np.zeros(v.grid.shape)})
        lam, rep = np.zeros(v.dim_n + 2), {"relative_residual": 0.0}
    else:
        w, lam, rep = solve_projected(prob)
    new = replace(v, layers=v.layers + (w,))
    report = {"orth_coefficients": coef.tolist(), "orth_relative": rel.tolist(), "multipliers": lam.tolist(),
              "solve_relative_residual": rep["relative_residual"], "w_norm_2": w.weighted_norm(2),
              "perturbation_size": size}
    return new, report


def build_to_order(v, order, check=False):
    """Append layers until v has the requested order (same parameters throughout)."""
    reports = []
    while v.order < order:
        v, rep = build_next_layer(v, check=check)
        reports.append(rep)
    return v, reports


# ----------------------------------------------------------------------------- parameters
def level_defect(dim_n, eps, params, order, geometry, spectral, grid_spec, plane_cells, **kw):
    """Kernel components of S(v_order) at the given parameters, scaled by 1/eps."""
    v = make_solution(dim_n, eps, params, geometry, spectral, grid_spec, plane_cells, **kw)
    v, _ = build_to_order(v, order)
    res, _ = apply_error_operator(v)
    comp, _ = kernel_projections(res, spectral)
    return comp / eps, v


def solve_level_parameters(dim_n, eps, start, order, geometry, spectral, grid_spec=None, xtol=1e-12, fd_step=1e-5,
                           **kw):
    """(mu, d_n, e) such that S(v_order) has no component along Z0, Z_N, Z_{N+1}.

    Unknowns are (log mu, log d_n, e / e_start - 1) so mu and d_n stay positive; the
    defect is preconditioned by the inverse of its finite-difference Jacobian at the start.

    Raises
    ------
    ConvergenceError
        If the root finder fails.
    """
    grid_spec = grid_spec or GridSpec()
    cells = grid_spec.cells_for(plane_shift(dim_n, eps, start[0], start[1]))
    e_ref = start[2] if start[2] != 0 else 1.0
    calls = [0]

    def to_params(y):
        return float(np.exp(y[0])), float(np.exp(y[1])), float(e_ref * (1.0 + y[2]))

    def defect(y):
        calls[0] += 1
        try:
            comp, _ = level_defect(dim_n, eps, to_params(y), order, geometry, spectral, grid_spec, cells, **kw)
        except DomainError:
            return np.full(3, 1e30)
        return comp

    y0 = np.array([np.log(start[0]), np.log(start[1]), 0.0 if start[2] != 0 else start[2]])
    f0 = defect(y0)
    jac = np.empty((3, 3))
    for k in range(3):
        dy = np.zeros(3)
        dy[k] = fd_step
        jac[:, k] = (defect(y0 + dy) - f0) / fd_step
    try:
        precond = np.linalg.inv(jac)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"kernel defect Jacobian is singular at eps={eps}") from exc
    sol = root(lambda y: precond @ defect(y), y0, method="hybr", options={"xtol": xtol})
    params = to_params(sol.x)
    comp, v = level_defect(dim_n, eps, params, order, geometry, spectral, grid_spec, cells, **kw)
    if not np.all(np.abs(comp * eps) < 1e-8):
        raise ConvergenceError(f"level-{order} parameter solve failed at eps={eps}: {sol.message}")
    return params, v, {"calls": calls[0], "defect": (comp * eps).tolist(), "plane_cells": cells,
                       "jacobian_condition": float(np.linalg.cond(jac))}


def dyadic_ladder(first=9, last=13):
    """eps = 2^-first, ..., 2^-last (the window where the level solves stay local)."""
    return [2.0 ** -k for k in range(first, last + 1)]


# ----------------------------------------------------------------------------- ladder
@dataclass
class ResidualReport:
    """Weighted residual norms per eps and order, fitted slopes and kernel projections."""

    eps: list
    orders: list
    norms: dict
    slopes: dict
    projections: dict
    params: dict
    layer_norms: dict
    meta: dict = field(default_factory=dict)

    def passes(self, thresholds=None):
        thresholds = thresholds or {0: 0.85, 1: 1.8, 2: 2.6}
        return {I: bool(self.slopes[I] >= thresholds[I]) for I in self.orders if I in thresholds}

    def to_json(self):
        return {"schema": "residual_ladder/1", "eps": self.eps, "orders": self.orders,
                "norms": {str(k): v for k, v in self.norms.items()},
                "slopes": {str(k): v for k, v in self.slopes.items()},
                "projections": {str(k): v for k, v in self.projections.items()},
                "params": {str(k): v for k, v in self.params.items()},
                "layer_norms": {str(k): v for k, v in self.layer_norms.items()}, "meta": self.meta}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eps", "order", "norm", "slope"])
            for I in self.orders:
                for e, nrm in zip(self.eps, self.norms[I]):
                    wr.writerow([repr(e), I, repr(nrm), repr(self.slopes[I])])


def fit_slope(eps, norms):
    return float(np.polyfit(np.log(eps), np.log(norms), 1)[0])


def residual_ladder(dim_n, eps_list, start, geometry, spectral, orders=(0, 1, 2), grid_spec=None,
                    solve_level0=False, **kw):
    """Residual norms ||S(v_I)||_{eps,4} at level-solved parameters over an eps ladder.

    Parameters
    ----------
    start : (mu, d_n, e)
        Leading-order parameters; v_0 uses them unless solve_level0 is set, and every
        level solve starts from the previous level's root.
    """
    grid_spec = grid_spec or GridSpec()
    norms = {I: [] for I in orders}
    projections = {I: [] for I in orders}
    params = {I: [] for I in orders}
    layer_norms = {I: [] for I in orders if I > 0}
    for eps in eps_list:
        current = tuple(start)
        for I in orders:
            if I == 0 and not solve_level0:
                v = make_solution(dim_n, eps, current, geometry, spectral, grid_spec, **kw)
                info = {}
            else:
                current, v, info = solve_level_parameters(dim_n, eps, current, I, geometry, spectral, grid_spec, **kw)
            res, _ = apply_error_operator(v)
            norms[I].append(res.weighted_norm(4))
            comp, _ = kernel_projections(res, spectral)
            projections[I].append(comp.tolist())
            params[I].append(list(current))
            if I > 0:
                layer_norms[I].append(v.layers[-1].weighted_norm(2))
    slopes = {I: fit_slope(eps_list, norms[I]) for I in orders}
    meta = {"dim_n": dim_n, "grid": {"h": grid_spec.h, "cap": grid_spec.cap, "core": grid_spec.core},
            "geometry": geometry.__dict__, "operator": kw.get("operator", "full"),
            "truncation": kw.get("truncation", 2)}
    return ResidualReport(list(map(float, eps_list)), list(orders), norms, slopes, projections, params,
                          layer_norms, meta)


# ----------------------------------------------------------------------------- checks
def dirichlet_values(v):
    """max |v| on the plane: the U - U_bar pair alone and the full v."""
    ss, tt = v.grid.mesh()
    an = analytic_parts(v)
    ubar_pair = _bubble_ops(v.dim_n, ss, tt, 0.0)["val"] - _bubble_ops(v.dim_n, ss, tt, -2.0 * v.plane_shift)["val"]
    return {"pair": float(np.max(np.abs(ubar_pair[:, 0]))),
            "full": float(np.max(np.abs(an["val"][:, 0] + layer_sum(v)[:, 0])))}


def positivity(v):
    """min of v over interior nodes within |xi| < plane shift / 2... and overall."""
    vals = values(v)
    mask = _unknown_mask(v.grid, 0)
    return float(np.min(vals[mask]))


def h1_projection_check(v):
    """int S(v_0) Z_{N+1} with the uncut kernel on the grid (compare with quadrature.project_h1)."""
    if v.order != 0:
        raise DomainError("projection check applies to v_0")
    res, _ = apply_error_operator(v)
    kernels = kernel_fields(v.grid, v.spectral, with_cutoff=False)
    return {"P_N+1": res.inner(kernels[-1]), "P_N": res.inner(kernels[-2]), "P_0": res.inner(kernels[0])}


def to_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=float)
