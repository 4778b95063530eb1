"""Reduced equations on K: the (delta, d_N) block, the tangential shift d_bar, and the e-equation.

Orientation. The printed (delta, d_N) rows pair -c' Delta_K with a negative-definite
matrix [[A, B], [B, C]], which makes some Fourier modes singular. The module solves

    c1' Delta_K delta + A delta + B d_N = h1
    c2' Delta_K d_N  + B delta + C d_N = h2

with c1' = c1 eps^{1+2/(N-2)} mu0 and c2' = c2 eps mu0. Its modal matrix
[[A - c1' k^2, B], [B, C - c2' k^2]] is negative definite for every wave number k, so
minus it is the coercive form reported by ``modal_blocks``. On constants both readings
reduce to A delta + B d_N = h1, B delta + C d_N = h2.

The e-equation L0 e = Delta_K e + D1 lambda1 e + D2 d_N is studied on a circle K of
length 2 pi / rho, where Delta_K has eigenvalues -m^2 rho^2.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, DomainError, HypothesisViolation
from .geometry import fourier_first_derivative, fourier_second_derivative, solve_jacobi


@dataclass(frozen=True)
class ReducedSystem:
    """Coefficients of the reduced linear system on a circle K.

    Parameters
    ----------
    dim_n : int
    A, B, C : float
        Corner entries; A < 0, C < 0, AC - B^2 > 0 are required by the solvers.
    c1, c2 : float
        Energy coefficients (int Z_{N+1}^2 and int (d_N U)^2).
    D1, D2, lambda1 : float
    mu0 : float
    eps : float
    length : float
        Length of K in the original variable.
    resolution : int
        Number of Fourier points on K (even).
    """

    dim_n: int
    A: float
    B: float
    C: float
    c1: float
    c2: float
    D1: float
    D2: float
    lambda1: float
    mu0: float
    eps: float
    length: float = 2 * np.pi
    resolution: int = 128

    def __post_init__(self):
        if self.resolution % 2:
            raise DomainError("resolution must be even")
        if self.eps <= 0 or self.length <= 0:
            raise DomainError("eps and length must be positive")

    @classmethod
    def from_state(cls, state, length, resolution=128, eps=None):
        """Corner entries from the leading root; C uses A3 as in the reduced equations."""
        v = state.table.values
        n = state.dim_n
        mu, d = state.mu0, state.dn0
        return cls(
            dim_n=n,
            A=-(n - 2) * v["A1"] * mu ** (n - 3) / d ** (n - 2),
            B=(n - 2) * v["A1"] * mu ** (n - 2) / d ** (n - 1),
            C=-(n - 1) * v["A3"] * mu ** (n - 1) / d ** n,
            c1=v["c1"], c2=v["c2"], D1=v["D1"],
            D2=2.0 * state.traces[1] * d * v["I11"],
            lambda1=v["lambda1"], mu0=mu, eps=state.eps if eps is None else eps,
            length=length, resolution=resolution)

    def with_eps(self, eps):
        return replace(self, eps=eps)

    @property
    def rho(self):
        return self.eps ** ((self.dim_n - 1.0) / (self.dim_n - 2.0))

    @property
    def c1_eff(self):
        return self.c1 * self.eps ** (1.0 + 2.0 / (self.dim_n - 2)) * self.mu0

    @property
    def c2_eff(self):
        return self.c2 * self.eps * self.mu0

    def coercivity(self):
        return {"A": self.A, "C": self.C, "AC_minus_B2": self.A * self.C - self.B ** 2,
                "coercive": bool(self.A < 0 and self.C < 0 and self.A * self.C - self.B ** 2 > 0)}

    def wavenumbers(self):
        modes = np.fft.fftfreq(self.resolution, 1.0 / self.resolution)
        return 2 * np.pi * modes / self.length, modes


def _require_coercive(sys_):
    rep = sys_.coercivity()
    if not rep["coercive"]:
        raise HypothesisViolation(
            f"(delta, d_N) block is not coercive: A = {sys_.A:.6g}, C = {sys_.C:.6g}, "
            f"AC - B^2 = {rep['AC_minus_B2']:.6g}")


def modal_blocks(sys_, k):
    """Coercive 2x2 blocks [[c1' k^2 - A, -B], [-B, c2' k^2 - C]] for wave numbers k."""
    k2 = np.asarray(k, dtype=float) ** 2
    out = np.empty(k2.shape + (2, 2))
    out[..., 0, 0] = sys_.c1_eff * k2 - sys_.A
    out[..., 0, 1] = out[..., 1, 0] = -sys_.B
    out[..., 1, 1] = sys_.c2_eff * k2 - sys_.C
    return out


def solve_delta_dn(sys_, h1, h2, extra=None, iters=50, tol=1e-12):
    """Fourier-diagonal solve of the (delta, d_N) block.

    Parameters
    ----------
    h1, h2 : arrays on the Fourier grid of K (or scalars)
    extra : callable (delta, d_N) -> (m1, m2), optional
        Bounded nonlinear/compact terms added as eps * (m1, m2) on the right-hand side,
        solved by fixed-point iteration. Defaults to zero.

    Returns
    -------
    delta, d_N, report
    """
    _require_coercive(sys_)
    m = sys_.resolution
    h1 = np.broadcast_to(np.asarray(h1, dtype=float), (m,)).copy()
    h2 = np.broadcast_to(np.asarray(h2, dtype=float), (m,)).copy()
    k, _ = sys_.wavenumbers()
    blocks = modal_blocks(sys_, k)
    # coercive form Q (delta, d) = -(h1, h2)
    inv = np.linalg.inv(blocks)

    def linear(r1, r2):
        rhat = -np.stack([np.fft.fft(r1), np.fft.fft(r2)], axis=-1)
        sol = np.einsum("kij,kj->ki", inv, rhat)
        return np.real(np.fft.ifft(sol[:, 0])), np.real(np.fft.ifft(sol[:, 1]))

    delta, dn = linear(h1, h2)
    steps = 0
    if extra is not None:
        for steps in range(1, iters + 1):
            m1, m2 = extra(delta, dn)
            new = linear(h1 + sys_.eps * np.asarray(m1), h2 + sys_.eps * np.asarray(m2))
            change = max(np.max(np.abs(new[0] - delta)), np.max(np.abs(new[1] - dn)))
            delta, dn = new
            if change <= tol * max(1.0, np.max(np.abs(delta)), np.max(np.abs(dn))):
                break
        else:
            raise ConvergenceError("fixed-point iteration for the (delta, d_N) block did not converge")
    d1 = fourier_first_derivative(m, sys_.length)
    n = sys_.dim_n
    lhs = (np.max(np.abs(delta)) + np.max(np.abs(dn))
           + sys_.eps ** (0.5 + 1.0 / (n - 2)) * np.max(np.abs(d1 @ delta))
           + sys_.eps ** 0.5 * np.max(np.abs(d1 @ dn)))
    rhs = np.max(np.abs(h1)) + np.max(np.abs(h2))
    report = {"bound_lhs": float(lhs), "bound_rhs": float(rhs),
              "bound_constant": float(lhs / rhs) if rhs > 0 else 0.0, "fixed_point_steps": steps,
              "min_block_eigenvalue": float(np.min(np.linalg.eigvalsh(blocks)))}
    return delta, dn, report


def assembled_delta_dn(sys_, h1, h2):
    """Dense full-matrix solve of the same system (oracle for the modal solve)."""
    _require_coercive(sys_)
    m = sys_.resolution
    lap = fourier_second_derivative(m, sys_.length)
    eye = np.eye(m)
    big = np.block([[sys_.c1_eff * lap + sys_.A * eye, sys_.B * eye],
                    [sys_.B * eye, sys_.c2_eff * lap + sys_.C * eye]])
    rhs = np.concatenate([np.broadcast_to(h1, (m,)), np.broadcast_to(h2, (m,))])
    sol = np.linalg.solve(big, rhs)
    return sol[:m], sol[m:]


def modal_closed_form(sys_, mode, which=1):
    """Amplitudes (a, b) with delta = a cos(k y), d_N = b cos(k y) for h_which = cos(k y)."""
    k = 2 * np.pi * mode / sys_.length
    mat = np.array([[sys_.A - sys_.c1_eff * k * k, sys_.B], [sys_.B, sys_.C - sys_.c2_eff * k * k]])
    rhs = np.array([1.0, 0.0]) if which == 1 else np.array([0.0, 1.0])
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] ** 2
    a = (mat[1, 1] * rhs[0] - mat[0, 1] * rhs[1]) / det
    b = (mat[0, 0] * rhs[1] - mat[1, 0] * rhs[0]) / det
    return a, b


def bound_constant(sys_, modes=None):
    """Sup of the a-priori bound ratio over single-mode right-hand sides in either row."""
    m = sys_.resolution
    y = np.arange(m) * sys_.length / m
    modes = range(m // 2) if modes is None else modes
    best = 0.0
    for mode in modes:
        wave = np.cos(2 * np.pi * mode * y / sys_.length)
        for h1, h2 in ((wave, 0.0 * wave), (0.0 * wave, wave), (wave, wave)):
            best = max(best, solve_delta_dn(sys_, h1, h2)[2]["bound_constant"])
    return best


def bound_sweep(sys_, eps_values, modes=None):
    """Bound constants over an eps sweep; variation = (max - min) / min."""
    cs = np.array([bound_constant(sys_.with_eps(e), modes) for e in eps_values])
    return {"eps": list(map(float, eps_values)), "C": cs.tolist(),
            "variation": float((cs.max() - cs.min()) / cs.min())}


# ------------------------------------------------------------------ tangential shift
def solve_dbar(jacobi_op, f):
    """Solve -Delta_K d + c d = f through the Jacobi operator (Delta_K - c) d = -f."""
    d, report = solve_jacobi(jacobi_op, -np.asarray(f, dtype=float))
    return d, report


# ------------------------------------------------------------------ resonance
@dataclass
class ResonanceScan:
    """Smallest singular values of L0 over an eps grid, resonances and certified gaps."""

    eps: np.ndarray
    sigma: np.ndarray
    in_gap: np.ndarray
    minima: list = field(default_factory=list)
    predicted: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    gap_constant: float = float("nan")
    info: dict = field(default_factory=dict)

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.eps, self.sigma, self.in_gap.astype(int)]), delimiter=",",
                   header="eps,smallest_singular_value,in_gap", comments="", fmt=["%.12e", "%.12e", "%d"])

    def to_json(self):
        return {"schema": "resonance/1", "minima": self.minima, "predicted": self.predicted,
                "gaps": self.gaps, "gap_constant": self.gap_constant, "info": self.info}


def l0_symbols(sys_, modes):
    """Modal symbols D1 lambda1 - m^2 rho^2 of L0 on the circle of radius 1/rho."""
    modes = np.asarray(modes, dtype=float)
    return sys_.D1 * sys_.lambda1 - modes ** 2 * sys_.rho ** 2


def smallest_singular_value(sys_, coupled=True, max_mode=None):
    """Smallest singular value of the per-mode (delta, d_N, e) operator (or L0 alone).

    The coupled per-mode matrix is [[A - c1' k^2, B, 0], [B, C - c2' k^2, 0], [0, D2, L0(m)]]
    with k = m rho (K_rho has radius 1/rho).
    """
    if max_mode is None:
        max_mode = sys_.resolution // 2 - 1
    modes = np.arange(max_mode + 1)
    sym = l0_symbols(sys_, modes)
    if not coupled or sys_.D2 == 0:
        return float(np.min(np.abs(sym)))
    k = modes * sys_.rho
    mats = np.zeros((modes.size, 3, 3))
    mats[:, :2, :2] = -modal_blocks(sys_, k)
    mats[:, 2, 1] = sys_.D2
    mats[:, 2, 2] = sym
    return float(np.min(np.linalg.svd(mats, compute_uv=False)))


def l0_matrix(sys_, resolution):
    """Dense spectral discretization of Delta_{K_rho} + D1 lambda1 (decoupled L0)."""
    lap = fourier_second_derivative(resolution, 2 * np.pi / sys_.rho)
    return lap + sys_.D1 * sys_.lambda1 * np.eye(resolution)


def predicted_resonances(sys_, eps_lo, eps_hi):
    """eps with m^2 rho(eps)^2 = D1 lambda1, inside [eps_lo, eps_hi]."""
    n = sys_.dim_n
    root = np.sqrt(sys_.D1 * sys_.lambda1)
    out = []
    m = 1
    while True:
        rho = root / m
        eps = rho ** ((n - 2.0) / (n - 1.0))
        if eps < eps_lo:
            break
        if eps <= eps_hi:
            out.append({"mode": m, "eps": float(eps)})
        m += 1
    return out


def scan_resonance(sys_, eps_grid, kappa=0.5, coupled=True, k_dim=1, workers=1):
    """Resonance scan of L0 over eps_grid.

    Gaps are certified where the smallest singular value exceeds kappa times half the local
    eigenvalue spacing, sqrt(D1 lambda1) rho (the largest distance to the spectrum). The
    reported gap constant is the sup over certified points of (inverse norm) * rho^k in the weighted norm
    |e| + rho |grad e| + rho^2 |grad^2 e|.

    Raises
    ------
    DomainError
        If the Fourier resolution cannot represent the modes up to the resonant ones.
    """
    eps_grid = np.sort(np.asarray(eps_grid, dtype=float))
    root = np.sqrt(sys_.D1 * sys_.lambda1)
    need = int(np.ceil(2 * root / sys_.with_eps(eps_grid[0]).rho))
    if sys_.resolution // 2 - 1 < need:
        raise DomainError(f"resolution {sys_.resolution} cannot resolve mode {need} needed at eps={eps_grid[0]:.3g}")

    def sigma(e):
        return smallest_singular_value(sys_.with_eps(e), coupled)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            sig = np.array(list(pool.map(sigma, eps_grid)))
    else:
        sig = np.array([sigma(e) for e in eps_grid])
    rhos = np.array([sys_.with_eps(e).rho for e in eps_grid])
    spacing = root * rhos
    in_gap = sig >= kappa * spacing
    minima = []
    for i in range(1, len(eps_grid) - 1):
        if sig[i] < sig[i - 1] and sig[i] <= sig[i + 1]:
            res = minimize_scalar(sigma, bounds=(eps_grid[i - 1], eps_grid[i + 1]), method="bounded",
                                  options={"xatol": 1e-12 * eps_grid[i]})
            minima.append({"eps": float(res.x), "sigma": float(res.fun), "grid_eps": float(eps_grid[i])})
    predicted = predicted_resonances(sys_, eps_grid[0], eps_grid[-1])
    # weighted inverse norm on certified points: sup_m (1 + rho |m rho| + rho^2 (m rho)^2) / |symbol|
    consts = []
    for e, ok in zip(eps_grid, in_gap):
        if not ok:
            continue
        s = sys_.with_eps(e)
        modes = np.arange(s.resolution // 2)
        kk = modes * s.rho
        weight = 1.0 + s.rho * kk + s.rho ** 2 * kk ** 2
        inv = np.max(weight / np.abs(l0_symbols(s, modes)))
        consts.append(inv * s.rho ** k_dim)
    gaps = []
    start = None
    for i, ok in enumerate(in_gap):
        if ok and start is None:
            start = i
        if (not ok or i == len(in_gap) - 1) and start is not None:
            stop = i if ok else i - 1
            gaps.append([float(eps_grid[start]), float(eps_grid[stop])])
            start = None
    info = {"kappa": kappa, "coupled": coupled, "k": k_dim, "resolution": sys_.resolution,
            "gap_constants_first_half": float(max(consts[:len(consts) // 2], default=np.nan)),
            "gap_constants_second_half": float(max(consts[len(consts) // 2:], default=np.nan))}
    return ResonanceScan(eps_grid, sig, in_gap, minima, predicted, gaps,
                         float(max(consts)) if consts else float("nan"), info)


def match_resonances(scan, rel_tol=None):
    """Pair each predicted resonance with the nearest detected minimum.

    rel_tol defaults to the local relative grid spacing of the scan.
    """
    found = np.array([m["eps"] for m in scan.minima])
    out = []
    for pred in scan.predicted:
        if found.size == 0:
            out.append({**pred, "detected": None, "rel_error": np.inf, "ok": False})
            continue
        j = int(np.argmin(np.abs(found - pred["eps"])))
        rel = abs(found[j] - pred["eps"]) / pred["eps"]
        i = int(np.clip(np.searchsorted(scan.eps, pred["eps"]), 1, len(scan.eps) - 1))
        tol = rel_tol if rel_tol is not None else (scan.eps[i] - scan.eps[i - 1]) / scan.eps[i]
        out.append({**pred, "detected": float(found[j]), "rel_error": float(rel), "ok": bool(rel <= tol)})
    return out
