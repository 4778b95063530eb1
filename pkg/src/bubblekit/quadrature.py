"""Axially reduced quadrature over R^N and the half-space domain, projection constants.

Integrands are functions of (s, t) = (|xi_bar|, xi_N) times an angular factor built from
at most two first-harmonic directions omega_j = xi_j / |xi_bar| (1 <= j <= N-1). The
measure is |S^{N-2}| s^{N-2} ds dt. The tensor rule is composite Gauss-Legendre on
geometrically graded panels; the error estimate is the change under panel splitting.
"""
from dataclasses import dataclass, field

import numpy as np

from .bubble import (
    TransformParams, bubble_alpha, critical_exponent, radial_du_over_r, radial_potential, radial_u,
    radial_z_dilation, sphere_area,
)
from .errors import DomainError, QuadratureError


@dataclass(frozen=True)
class QuadratureGrid:
    """Panel layout of the (s, t) tensor rule.

    Parameters
    ----------
    dim_n : int
    t_min, t_max : float
        Limits in xi_N (infinite values are truncated at ``cap``).
    s_max : float
        Limit in |xi_bar| (truncated at ``cap``).
    nodes : int
        Gauss nodes per panel.
    first : float
        Width of the innermost panels; widths double outward.
    cap : float
        Truncation radius for infinite limits.
    """

    dim_n: int
    t_min: float = -np.inf
    t_max: float = np.inf
    s_max: float = np.inf
    nodes: int = 20
    first: float = 0.25
    cap: float = 1e6

    def s_breaks(self):
        top = min(self.s_max, self.cap)
        return _graded(0.0, top, self.first)

    def t_breaks(self):
        lo, hi = max(self.t_min, -self.cap), min(self.t_max, self.cap)
        if lo >= hi:
            raise DomainError(f"empty t interval [{lo}, {hi}]")
        if lo >= 0:
            return _graded(lo, hi, self.first, origin=lo)
        if hi <= 0:
            return -_graded(-hi, -lo, self.first, origin=-hi)[::-1]
        neg = -_graded(0.0, -lo, self.first)[::-1]
        pos = _graded(0.0, hi, self.first)
        return np.concatenate([neg[:-1], pos])


def _graded(lo, hi, first, origin=0.0):
    """Breakpoints in [lo, hi] with widths doubling away from ``origin``."""
    pts = [lo]
    width = first
    x = lo
    while x + width < hi:
        x += width
        pts.append(x)
        width *= 2.0
    pts.append(hi)
    out = np.array(pts)
    # merge a tiny last panel into its neighbour
    if out.size > 2 and (out[-1] - out[-2]) < 0.25 * (out[-2] - out[-3]):
        out = np.delete(out, -2)
    return out


def _composite(breaks, n):
    x, w = np.polynomial.legendre.leggauss(n)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _split(breaks):
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    out = np.empty(2 * breaks.size - 1)
    out[0::2] = breaks
    out[1::2] = mids
    return out


def angular_factor(dim_n, modes):
    """Sphere average of prod(omega_j for j in modes) over S^{N-2}."""
    modes = tuple(modes)
    if len(modes) > 2:
        raise DomainError("only angular modes of degree <= 1 (at most two first harmonics) are supported")
    for j in modes:
        if not 1 <= j <= dim_n - 1:
            raise DomainError(f"tangential direction index must be in [1, {dim_n - 1}], got {j}")
    if len(modes) == 0:
        return 1.0
    if len(modes) == 1:
        return 0.0
    return 1.0 / (dim_n - 1.0) if modes[0] == modes[1] else 0.0


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    converged: bool
    coarse_error: float = 0.0

    def __float__(self):
        return float(self.value)


def _tensor_sum(dim_n, s_breaks, t_breaks, n, integrand):
    s, ws = _composite(s_breaks, n)
    t, wt = _composite(t_breaks, n)
    S, T = np.meshgrid(s, t, indexing="ij")
    vals = integrand(S, T)
    ws = ws * s ** (dim_n - 2)
    return sphere_area(dim_n - 1) * float(ws @ vals @ wt)


def integrate_axial(grid, integrand, modes=(), strict=False):
    """Integral of integrand(s, t) * prod(omega_j) over the grid domain.

    Returns a QuadResult whose value is the refined (split-panel) sum and whose error is
    |Q(split) - Q|. ``converged`` is False when that difference does not fall below the
    difference between Q and a half-node rule; with ``strict`` this raises.
    """
    fac = angular_factor(grid.dim_n, modes)
    if fac == 0.0:
        return QuadResult(0.0, 0.0, True)
    sb, tb = grid.s_breaks(), grid.t_breaks()
    n = grid.nodes
    q_half = _tensor_sum(grid.dim_n, sb, tb, max(n // 2, 2), integrand)
    q = _tensor_sum(grid.dim_n, sb, tb, n, integrand)
    q_fine = _tensor_sum(grid.dim_n, _split(sb), _split(tb), n, integrand)
    err = abs(q_fine - q) * fac
    coarse = abs(q - q_half) * fac
    floor = 1e-14 * abs(q_fine * fac) + 1e-300
    converged = err <= max(coarse, floor) or err <= 1e3 * floor
    if strict and not converged:
        raise QuadratureError(f"refinement not converging: err {err:.3e} vs coarse {coarse:.3e}")
    return QuadResult(q_fine * fac, err, converged, coarse)


def full_space(dim_n, **kw):
    return QuadratureGrid(dim_n, **kw)


def half_space(dim_n, plane_shift, s_max=np.inf, **kw):
    """Domain hat-D: xi_N > -plane_shift, |xi_bar| < s_max."""
    return QuadratureGrid(dim_n, t_min=-plane_shift, s_max=s_max, **kw)


def monte_carlo_gaussian(func, dim_n, samples=10_000_000, seed=20240601, chunk=1_000_000):
    """Monte Carlo estimate of int func(|xi|) exp(-|xi|^2) d xi over R^N.

    Samples xi ~ N(0, I/2) so that the integral equals pi^{N/2} E[func(|xi|)].
    Returns (estimate, standard error).
    """
    rng = np.random.default_rng(seed)
    total, total2, count = 0.0, 0.0, 0
    while count < samples:
        m = min(chunk, samples - count)
        xi = rng.normal(scale=np.sqrt(0.5), size=(m, dim_n))
        v = func(np.sqrt(np.sum(xi * xi, axis=1)))
        total += float(np.sum(v))
        total2 += float(np.sum(v * v))
        count += m
    mean = total / count
    var = total2 / count - mean * mean
    scale = np.pi ** (dim_n / 2.0)
    return scale * mean, scale * np.sqrt(var / count)


# ------------------------------------------------------------------ integrand kit
class AxialKit:
    """Closed-form axial pieces of U and its derivatives for a given N."""

    def __init__(self, dim_n):
        self.n = dim_n
        self.alpha = bubble_alpha(dim_n)
        self.p = critical_exponent(dim_n)

    def r(self, s, t):
        return np.sqrt(s * s + t * t)

    def u(self, s, t):
        return radial_u(self.n, self.r(s, t))

    def g(self, s, t):
        """U'(r)/r."""
        return radial_du_over_r(self.n, self.r(s, t))

    def gp_over_r(self, s, t):
        """g'(r)/r = N(N-2) alpha (1+r^2)^{-N/2-1}."""
        q = 1.0 + s * s + t * t
        return self.n * (self.n - 2.0) * self.alpha * q ** (-self.n / 2.0 - 1.0)

    def potential(self, s, t):
        return radial_potential(self.n, self.r(s, t))

    def z_dil(self, s, t):
        return radial_z_dilation(self.n, self.r(s, t))

    def d_n(self, s, t):
        return t * self.g(s, t)

    def d11_avg(self, s, t):
        """Angular average of d^2 U / d xi_1^2 over the xi_bar sphere."""
        return self.g(s, t) + s * s / (self.n - 1.0) * self.gp_over_r(s, t)

    def dnn(self, s, t):
        return self.g(s, t) + t * t * self.gp_over_r(s, t)

    def u_bar(self, s, t, shift):
        return radial_u(self.n, np.sqrt(s * s + (t + 2.0 * shift) ** 2))


# ------------------------------------------------------------------ constants
@dataclass(frozen=True)
class ConstantsTable:
    """Projection constants and their quadrature error estimates.

    Attributes
    ----------
    dim_n : int
    values : dict
        A1..A7, C0, D1, D2 and auxiliary integrals (c1, c2, I11, lambda1, ...).
    errors : dict
        Per-constant error estimates.
    meta : dict
        Grid metadata, traces, d_n0.
    """

    dim_n: int
    values: dict
    errors: dict
    meta: dict = field(default_factory=dict)

    def __getattr__(self, name):
        values = object.__getattribute__(self, "values")
        if name in values:
            return values[name]
        raise AttributeError(name)

    def to_json(self):
        return {"N": self.dim_n, **{k: float(v) for k, v in self.values.items()},
                "errors": {k: float(v) for k, v in self.errors.items()}, "meta": self.meta}


def xi_n_moment(dim_n, nodes=20):
    """int xi_N^2 (1+|xi|^2)^{-(N+4)/2} by quadrature (exact value |S^{N-1}| / (N (N+2)))."""
    grid = full_space(dim_n, nodes=nodes)
    return integrate_axial(grid, lambda s, t: t * t * (1.0 + s * s + t * t) ** (-(dim_n + 4) / 2.0)).value


def xi_n_moment_exact(dim_n):
    return sphere_area(dim_n) / (dim_n * (dim_n + 2.0))


def a3_printed_closed_form(dim_n, nodes=20):
    """The printed closed form p alpha^{(N+2)/2} (N-2)^2 / 2^{N-1} * int xi_N^2 (1+|xi|^2)^{-(N+4)/2}."""
    n = dim_n
    return critical_exponent(n) * bubble_alpha(n) ** ((n + 2) / 2.0) * (n - 2) ** 2 / 2 ** (n - 1) * xi_n_moment(n, nodes)


def a3_corrected_closed_form(dim_n, nodes=20):
    """Same formula with the exponent of alpha equal to p + 1 = 2N/(N-2)."""
    n = dim_n
    p = critical_exponent(n)
    return p * bubble_alpha(n) ** (p + 1) * (n - 2) ** 2 / 2 ** (n - 1) * xi_n_moment(n, nodes)


def compute_constants(dim_n, spectral, geometry_traces=(0.0, 0.0), d_n0=None, nodes=20, rtol_a3=1e-8):
    """Build the constants table for dimension N.

    Parameters
    ----------
    dim_n : int
    spectral : SpectralPair
        Must match dim_n.
    geometry_traces : (H_aa_sum, H_jj_sum)
    d_n0 : float, optional
        Normal shift entering D2; D2 is NaN when omitted.
    """
    if spectral.dim_n != dim_n:
        raise DomainError(f"spectral pair has N={spectral.dim_n}, expected {dim_n}")
    n = dim_n
    kit = AxialKit(n)
    grid = full_space(n, nodes=nodes)
    z0 = lambda s, t: spectral(np.sqrt(s * s + t * t))
    p = kit.p
    a = kit.alpha
    logu = lambda s, t: np.log(kit.u(s, t))
    upow = lambda s, t: kit.u(s, t) ** p

    q = {}
    q["int_pot_zdil"] = integrate_axial(grid, lambda s, t: kit.potential(s, t) * kit.z_dil(s, t))
    q["int_uplogu_zdil"] = integrate_axial(grid, lambda s, t: upow(s, t) * logu(s, t) * kit.z_dil(s, t))
    q["int_pot_t_dn"] = integrate_axial(grid, lambda s, t: kit.potential(s, t) * t * kit.d_n(s, t))
    q["int_pot_z0"] = integrate_axial(grid, lambda s, t: kit.potential(s, t) * z0(s, t))
    q["int_uplogu_z0"] = integrate_axial(grid, lambda s, t: upow(s, t) * logu(s, t) * z0(s, t))
    q["C0"] = integrate_axial(grid, lambda s, t: kit.d_n(s, t) ** 2)
    q["C0_tangential"] = integrate_axial(grid, lambda s, t: (s * kit.g(s, t)) ** 2, modes=(1, 1))
    q["int_up_z0"] = integrate_axial(grid, lambda s, t: upow(s, t) * z0(s, t))
    q["D1"] = integrate_axial(grid, lambda s, t: z0(s, t) ** 2)
    q["I11"] = integrate_axial(grid, lambda s, t: kit.d11_avg(s, t) * z0(s, t))
    q["c1"] = integrate_axial(grid, lambda s, t: kit.z_dil(s, t) ** 2)

    vals, errs = {}, {}
    def put(name, factor, key):
        vals[name] = factor * q[key].value
        errs[name] = abs(factor) * q[key].error

    put("A1", -a * 2.0 ** (2 - n), "int_pot_zdil")
    put("A2", 1.0, "int_uplogu_zdil")
    put("A3", -a * (n - 2) * 2.0 ** (1 - n), "int_pot_t_dn")
    put("A4", a * 2.0 ** (2 - n), "int_pot_z0")
    put("A5", 1.0, "int_uplogu_z0")
    put("A6", 1.0, "C0")
    put("A7", (n - 2) / 2.0, "int_up_z0")
    put("C0", 1.0, "C0")
    put("C0_tangential", 1.0, "C0_tangential")
    put("D1", 1.0, "D1")
    put("I11", 1.0, "I11")
    put("c1", 1.0, "c1")
    put("c2", 1.0, "C0")
    h_aa, h_jj = geometry_traces
    if d_n0 is None:
        vals["D2"], errs["D2"] = float("nan"), float("nan")
    else:
        vals["D2"] = 2.0 * h_jj * d_n0 * vals["I11"]
        errs["D2"] = abs(2.0 * h_jj * d_n0) * errs["I11"]
    vals["lambda1"] = spectral.lambda1
    errs["lambda1"] = 0.0

    corrected = a3_corrected_closed_form(n, nodes)
    printed = a3_printed_closed_form(n, nodes)
    rel = abs(vals["A3"] - corrected) / abs(corrected)
    if rel > rtol_a3:
        raise QuadratureError(f"A3 quadrature {vals['A3']:.12g} disagrees with its closed form {corrected:.12g}")
    meta = {"nodes": nodes, "cap": grid.cap, "H_aa_sum": h_aa, "H_jj_sum": h_jj, "d_n0": d_n0,
            "A3_closed_form_corrected": corrected, "A3_closed_form_printed": printed,
            "A3_rel_diff_corrected": rel,
            "A3_rel_diff_printed": abs(vals["A3"] - printed) / abs(printed),
            "converged": all(r.converged for r in q.values())}
    return ConstantsTable(n, vals, errs, meta)


def with_d2(table, h_jj_sum, d_n0):
    """Copy of the table with D2 = 2 H_jj_sum d_n0 int d11 U Z0."""
    vals = dict(table.values)
    errs = dict(table.errors)
    vals["D2"] = 2.0 * h_jj_sum * d_n0 * vals["I11"]
    errs["D2"] = abs(2.0 * h_jj_sum * d_n0) * errs["I11"]
    meta = dict(table.meta, H_jj_sum=h_jj_sum, d_n0=d_n0)
    return ConstantsTable(table.dim_n, vals, errs, meta)


# ------------------------------------------------------------------ identities
def verify_appendix_identities(dim_n, table, tol=1e-8, h_matrix=None, nodes=20):
    """Residuals of the integral identities (i)-(v) used in the projection computations.

    Returns a dict name -> {lhs, rhs, residual, scale, relative, passed}.
    """
    n = dim_n
    kit = AxialKit(n)
    grid = full_space(n, nodes=nodes)
    p = kit.p
    if h_matrix is None:
        h_matrix = np.diag(np.r_[np.ones(n - 2), 0.0])
    h_matrix = np.asarray(h_matrix, dtype=float)
    if h_matrix.shape != (n - 1, n - 1) or not np.allclose(h_matrix, h_matrix.T):
        raise DomainError("h_matrix must be a symmetric (N-1)x(N-1) matrix")
    tr = float(np.trace(h_matrix))
    c0 = table.values["C0"]
    rep = {}

    def record(name, lhs, rhs, scale):
        resid = abs(lhs - rhs)
        rel = resid / scale
        rep[name] = {"lhs": lhs, "rhs": rhs, "residual": resid, "scale": scale,
                     "relative": rel, "passed": bool(rel < tol)}

    up_z = integrate_axial(grid, lambda s, t: kit.u(s, t) ** p * kit.z_dil(s, t)).value
    up_abs_z = integrate_axial(grid, lambda s, t: kit.u(s, t) ** p * np.abs(kit.z_dil(s, t))).value
    record("(i) int U^p Z_{N+1} = 0", up_z, 0.0, up_abs_z)

    # H_ij d_ij U = tr(H) g + xi_bar^T H xi_bar g'/r; only the diagonal pairs survive averaging
    diag = integrate_axial(grid, lambda s, t: kit.g(s, t) * kit.z_dil(s, t)).value
    pair = integrate_axial(grid, lambda s, t: s * s * kit.gp_over_r(s, t) * kit.z_dil(s, t), modes=(1, 1)).value
    off = integrate_axial(grid, lambda s, t: s * s * kit.gp_over_r(s, t) * kit.z_dil(s, t), modes=(1, 2)).value
    lhs = tr * diag + tr * pair + (np.sum(h_matrix) - tr) * off
    scale = abs(tr) * integrate_axial(grid, lambda s, t: np.abs(kit.d11_avg(s, t) * kit.z_dil(s, t))).value + 1e-300
    record("(ii) H_ij int d_ij U Z_{N+1} = 0", lhs, 0.0, scale)

    diag3 = integrate_axial(grid, lambda s, t: t * kit.g(s, t) * kit.d_n(s, t)).value
    pair3 = integrate_axial(grid, lambda s, t: t * s * s * kit.gp_over_r(s, t) * kit.d_n(s, t), modes=(1, 1)).value
    lhs3 = tr * (diag3 + pair3)
    rhs3 = 0.5 * tr * c0
    record("(iii) int xi_N H_ij d_ij U d_N U = H_jj C0 / 2", lhs3, rhs3, abs(rhs3))

    upp1 = integrate_axial(grid, lambda s, t: kit.u(s, t) ** (p + 1)).value
    record("(iv) int U^{p+1} = N C0", upp1, n * c0, abs(n * c0))

    tang = integrate_axial(grid, lambda s, t: (s * kit.g(s, t)) ** 2, modes=(1, 1)).value
    mixed = integrate_axial(grid, lambda s, t: (s * kit.g(s, t)) ** 2, modes=(1, 2)).value
    mixed_n = integrate_axial(grid, lambda s, t: s * kit.g(s, t) * kit.d_n(s, t), modes=(1,)).value
    record("(v) int d_j U d_l U = delta_jl C0 (j=l<N)", tang, c0, c0)
    record("(v) int d_j U d_l U = 0 (j!=l<N)", mixed, 0.0, c0)
    record("(v) int d_j U d_N U = 0 (j<N)", mixed_n, 0.0, c0)
    return rep


# ------------------------------------------------------------------ h1 projections
def h1_integrand(kit, params, spectral, traces, e0, mode):
    """Mode-0 integrand of h1 (angular-averaged) and the kernel element it pairs with."""
    n = kit.n
    p = kit.p
    eps, mu, d = params.eps, params.mu, params.d_n
    rho = params.rho
    shift = params.plane_shift
    h_aa, h_jj = traces
    tr_full = h_aa + h_jj

    def h1(s, t):
        u = kit.u(s, t)
        up = u ** p
        hij_dij = h_jj * kit.d11_avg(s, t)
        out = kit.potential(s, t) * kit.u_bar(s, t, shift)
        out = out + eps * (up * np.log(u) - (n - 2) / 2.0 * up * np.log(mu) - 2.0 * d * hij_dij
                           - spectral.lambda1 * e0 * spectral(kit.r(s, t)))
        out = out - rho * mu * (2.0 * t * hij_dij - tr_full * kit.d_n(s, t))
        return out

    if mode == "N+1":
        return lambda s, t: h1(s, t) * kit.z_dil(s, t)
    if mode == "N":
        return lambda s, t: h1(s, t) * kit.d_n(s, t)
    if mode == "0":
        return lambda s, t: h1(s, t) * spectral(kit.r(s, t))
    raise DomainError(f"unknown projection {mode}")


def project_h1(dim_n, params, table, spectral, geometry_traces, e0=0.0, delta=1.0, nodes=20):
    """Numerical projections of h1 on Z_{N+1}, Z_N, Z_0, Z_l over hat-D and their predictions.

    The domain is xi_N > -plane_shift, |xi_bar| < delta / rho.

    Returns
    -------
    dict with keys P_N+1, P_N, P_0, P_l (list), their error estimates, and
    'predicted' leading-order values.
    """
    n = dim_n
    if params.dim_n != n:
        raise DomainError("params dimension mismatch")
    shift = params.plane_shift
    s_max = delta / params.rho
    if s_max < 4 * shift or shift < 2.0:
        raise DomainError(f"domain truncation inconsistent with eps={params.eps}: "
                          f"plane shift {shift:.3g}, |xi_bar| bound {s_max:.3g}")
    kit = AxialKit(n)
    grid = half_space(n, shift, s_max=s_max, nodes=nodes)
    out = {}
    for key in ("N+1", "N", "0"):
        res = integrate_axial(grid, h1_integrand(kit, params, spectral, geometry_traces, e0, key))
        out["P_" + key] = res.value
        out["err_" + key] = res.error
    # tangential kernels pair a mode-0 h1 with a single first harmonic
    out["P_l"] = [integrate_axial(grid, lambda s, t: s, modes=(l,)).value for l in range(1, n)]
    h_aa, h_jj = geometry_traces
    ratio = params.mu / params.d_n
    eps = params.eps
    v = table.values
    out["predicted"] = {
        "P_N+1": eps * (-v["A1"] * ratio ** (n - 2) + v["A2"]),
        "P_N": eps ** (1 + 1.0 / (n - 2)) * (v["A3"] * ratio ** (n - 1) + v["A6"] * params.mu * h_aa),
        "P_0": eps * (v["A4"] * ratio ** (n - 2) + v["A5"] - v["A7"] * np.log(params.mu)
                      - spectral.lambda1 * e0 - 2.0 * h_jj * params.d_n * v["I11"]),
    }
    out["plane_shift"] = shift
    return out


def projection_ladder(dim_n, mu, d_n, eps_list, table, spectral, geometry_traces, e0=0.0, nodes=20):
    """Normalized projections over an eps ladder with extrapolation in s^{-2}.

    The leading correction to each normalized projection is even in the inverse plane
    shift s, so a quadratic fit in x = s^{-2} extrapolates to the eps -> 0 limit.
    """
    n = dim_n
    rows = []
    for eps in eps_list:
        params = TransformParams(mu, d_n, eps, n)
        P = project_h1(n, params, table, spectral, geometry_traces, e0=e0, nodes=nodes)
        rows.append({"eps": eps, "shift": P["plane_shift"],
                     "N+1": P["P_N+1"] / eps, "N": P["P_N"] / eps ** (1 + 1.0 / (n - 2)),
                     "0": P["P_0"] / eps,
                     "abs_dev_N+1": abs(P["P_N+1"] - P["predicted"]["P_N+1"]),
                     "P_l_max": max(abs(v) for v in P["P_l"])})
    v = table.values
    ratio = mu / d_n
    h_aa, h_jj = geometry_traces
    formula = {"N+1": -v["A1"] * ratio ** (n - 2) + v["A2"],
               "N": v["A3"] * ratio ** (n - 1) + v["A6"] * mu * h_aa,
               "0": (v["A4"] * ratio ** (n - 2) + v["A5"] - v["A7"] * np.log(mu)
                     - spectral.lambda1 * e0 - 2.0 * h_jj * d_n * v["I11"])}
    x = np.array([r["shift"] for r in rows]) ** -2.0
    limits, rel_errors = {}, {}
    for key in ("N+1", "N", "0"):
        y = np.array([r[key] for r in rows])
        coef = np.polyfit(x, y, 2 if len(rows) > 3 else 1)
        limits[key] = float(coef[-1])
        rel_errors[key] = abs(limits[key] - formula[key]) / abs(formula[key])
    eps = np.array(eps_list)
    dev = np.array([r["abs_dev_N+1"] for r in rows])
    slope = float(np.polyfit(np.log(eps), np.log(dev), 1)[0])
    return {"rows": rows, "formula": formula, "limits": limits, "rel_errors": rel_errors,
            "deviation_slope_N+1": slope}
