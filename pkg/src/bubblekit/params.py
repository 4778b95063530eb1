"""Algebraic systems fixing the concentration scale mu, normal shift d_N and dilation weight e.

The leading system (rows indexed by the kernels Z_{N+1}, Z_N, Z_0) is

    F1 = -A1 (mu/d)^{N-2} + A2
    F2 =  A1 (mu/d)^{N-1} + (A1 A6 / A3) mu H_aa
    F3 =  A4 (mu/d)^{N-2} + A5 - A7 log mu - lambda1 e - 2 H_jj d I11

with I11 = int d^2_11 U Z0. For eps > 0 an additive remainder (g1, g2, g3)(mu, d, e, eps)
is supplied by a callback; the default one uses numerically projected h1 values, so the
eps-system is exactly "projections of h1 vanish".
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .bubble import TransformParams
from .errors import ConvergenceError, DegenerateOperator, DomainError, HypothesisViolation


@dataclass(frozen=True)
class NewtonConfig:
    """Newton settings.

    Parameters
    ----------
    max_iters : int
    abs_tol : float
        Residual tolerance per component.
    step_tol : float
        Relative step size at which the iteration is declared stationary.
    damping : {'halving', 'none'}
        Halve the step while the residual norm increases.
    initial : {'closed_form', 'user'}
    guess : tuple, optional
        (mu, d, e) used when initial == 'user'.
    """

    max_iters: int = 60
    abs_tol: float = 1e-8
    step_tol: float = 1e-13
    damping: str = "halving"
    initial: str = "closed_form"
    guess: tuple = None

    def __post_init__(self):
        if self.abs_tol <= 0 or self.step_tol <= 0 or self.max_iters < 1:
            raise DomainError("Newton tolerances and iteration cap must be positive")
        if self.damping not in ("halving", "none"):
            raise DomainError(f"unknown damping policy {self.damping}")
        if self.initial not in ("closed_form", "user"):
            raise DomainError(f"unknown initial guess source {self.initial}")
        if self.initial == "user" and self.guess is None:
            raise DomainError("initial='user' needs a guess")


@dataclass(frozen=True)
class ParameterState:
    """Root of the parameter system and its higher-order corrections.

    Attributes
    ----------
    mu0, dn0, e0 : float
    eps : float
    table : ConstantsTable
    traces : (H_aa_sum, H_jj_sum)
    corrections : dict
        level -> {'mu', 'dn', 'e', 'bound_C'}.
    info : dict
        Iterations, residual, closed-form values.
    """

    mu0: float
    dn0: float
    e0: float
    eps: float
    table: object = field(repr=False)
    traces: tuple
    corrections: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def dim_n(self):
        return self.table.dim_n

    @property
    def lambda1(self):
        return self.table.values["lambda1"]

    def to_json(self):
        return {"eps": self.eps, "mu0": self.mu0, "dn0": self.dn0, "e0": self.e0,
                "H_aa_sum": self.traces[0], "H_jj_sum": self.traces[1],
                "corrections": {str(k): v for k, v in self.corrections.items()},
                "info": {k: v for k, v in self.info.items() if np.isscalar(v) or isinstance(v, (list, dict))}}


# ---------------------------------------------------------------- leading system
def leading_system(x, table, traces):
    """F(mu, d, e) without remainder."""
    mu, d, e = x
    v = table.values
    n = table.dim_n
    h_aa, h_jj = traces
    ratio = mu / d
    return np.array([
        -v["A1"] * ratio ** (n - 2) + v["A2"],
        v["A1"] * ratio ** (n - 1) + v["A1"] * v["A6"] / v["A3"] * mu * h_aa,
        v["A4"] * ratio ** (n - 2) + v["A5"] - v["A7"] * np.log(mu) - v["lambda1"] * e
        - 2.0 * h_jj * d * v["I11"],
    ])


def leading_jacobian(x, table, traces):
    """Analytic derivative of ``leading_system`` with respect to (mu, d, e)."""
    mu, d, _ = x
    v = table.values
    n = table.dim_n
    h_aa, h_jj = traces
    a1 = v["A1"]
    return np.array([
        [-(n - 2) * a1 * mu ** (n - 3) / d ** (n - 2), (n - 2) * a1 * mu ** (n - 2) / d ** (n - 1), 0.0],
        [(n - 1) * a1 * mu ** (n - 2) / d ** (n - 1) + a1 * v["A6"] / v["A3"] * h_aa,
         -(n - 1) * a1 * mu ** (n - 1) / d ** n, 0.0],
        [(n - 2) * v["A4"] * mu ** (n - 3) / d ** (n - 2) - v["A7"] / mu,
         -(n - 2) * v["A4"] * mu ** (n - 2) / d ** (n - 1) - 2.0 * h_jj * v["I11"],
         -v["lambda1"]],
    ])


def printed_f0(x, table, traces):
    """Corner-entry form of the Jacobian at a root, with the a32 entry as printed.

    The printed a32 multiplies the curvature term by d_N; the derivative of F does not.
    """
    mu, d, _ = x
    v = table.values
    n = table.dim_n
    _, h_jj = traces
    a1 = v["A1"]
    big_a = -(n - 2) * a1 * mu ** (n - 3) / d ** (n - 2)
    big_b = (n - 2) * a1 * mu ** (n - 2) / d ** (n - 1)
    big_c = -(n - 1) * a1 * mu ** (n - 1) / d ** n
    a31 = (n - 2) * v["A4"] * mu ** (n - 3) / d ** (n - 2) - v["A7"] / mu
    a32 = -(n - 2) * v["A4"] * mu ** (n - 2) / d ** (n - 1) - 2.0 * h_jj * d * v["I11"]
    return np.array([[big_a, big_b, 0.0], [big_b, big_c, 0.0], [a31, a32, -v["lambda1"]]])


def det_f0_printed_formula(table, mu, d, h_aa):
    """-lambda1 (N-2) A1^2 mu^{N-2} / d^{N-1} H_aa, linear in H_aa."""
    v = table.values
    n = table.dim_n
    return -v["lambda1"] * (n - 2) * v["A1"] ** 2 * mu ** (n - 2) / d ** (n - 1) * h_aa


def closed_form_root(table, traces):
    """Explicit (mu0, d0, e0) of the leading system; requires H_aa_sum < 0."""
    v = table.values
    n = table.dim_n
    h_aa, h_jj = traces
    if not h_aa < 0:
        raise HypothesisViolation(
            f"tangential mean curvature sum H_aa = {h_aa:.6g} is not negative; no positive root exists")
    q = v["A2"] / v["A1"]
    mu0 = -q ** ((n - 1.0) / (n - 2.0)) * v["A3"] / v["A6"] / h_aa
    d0 = -q * v["A3"] / v["A6"] / h_aa
    e0 = (-2.0 * d0 * h_jj * v["I11"] + v["A2"] * v["A4"] / v["A1"] + v["A5"]
          - v["A7"] * np.log(mu0)) / v["lambda1"]
    return mu0, d0, e0


# ---------------------------------------------------------------- remainders
class ProjectedRemainder:
    """Remainder of the eps-system from numerical projections of h1.

    g(mu, d, e, eps) = normalized projection - leading_system, so that the full system
    reads "normalized projections of h1 on Z_{N+1}, Z_N, Z_0 vanish". The Z_N row is
    scaled by A1/A3 to match the leading form.
    """

    def __init__(self, table, spectral, traces, nodes=20):
        self.table = table
        self.spectral = spectral
        self.traces = traces
        self.nodes = nodes
        self.calls = 0

    def projections(self, x, eps):
        from .quadrature import project_h1
        mu, d, e = x
        n = self.table.dim_n
        self.calls += 1
        res = project_h1(n, TransformParams(mu, d, eps, n), self.table, self.spectral, self.traces,
                         e0=e, nodes=self.nodes)
        v = self.table.values
        return np.array([res["P_N+1"] / eps,
                         v["A1"] / v["A3"] * res["P_N"] / eps ** (1.0 + 1.0 / (n - 2)),
                         res["P_0"] / eps])

    def __call__(self, x, eps):
        if eps == 0:
            return np.zeros(3)
        return self.projections(x, eps) - leading_system(x, self.table, self.traces)


# ---------------------------------------------------------------- solvers
def _check_traces(traces):
    h_aa, _ = traces
    if not h_aa < 0:
        raise HypothesisViolation(
            f"tangential mean curvature sum H_aa = {h_aa:.6g} is not negative; no positive root exists")


def solve_leading_order(table, traces, eps=0.0, cfg=None, remainder=None):
    """Newton iteration on F(mu, d, e) + remainder(mu, d, e, eps) = 0.

    The Jacobian is that of the leading system; the remainder is treated as a
    perturbation (its derivative is O(s^{-2}) relative), so the iteration is a
    chord-type Newton with fast linear convergence for eps > 0 and exact Newton at eps = 0.

    Parameters
    ----------
    table : ConstantsTable
    traces : (H_aa_sum, H_jj_sum)
    eps : float
    cfg : NewtonConfig
    remainder : callable (x, eps) -> 3-vector, optional
        Required when eps > 0.
    """
    cfg = cfg or NewtonConfig()
    _check_traces(traces)
    if eps < 0:
        raise DomainError("eps must be non-negative")
    if eps > 0 and remainder is None:
        raise DomainError("eps > 0 needs a remainder callback (e.g. ProjectedRemainder)")
    closed = closed_form_root(table, traces)
    x = np.array(closed if cfg.initial == "closed_form" else cfg.guess, dtype=float)

    def full(z):
        out = leading_system(z, table, traces)
        if eps > 0:
            out = out + remainder(z, eps)
        return out

    fx = full(x)
    history = [float(np.max(np.abs(fx)))]
    converged = False
    for it in range(1, cfg.max_iters + 1):
        step = np.linalg.solve(leading_jacobian(x, table, traces), fx)
        lam = 1.0
        while True:
            trial = x - lam * step
            if trial[0] > 0 and trial[1] > 0:
                ft = full(trial)
                if cfg.damping == "none" or np.max(np.abs(ft)) <= history[-1] or lam < 1e-3:
                    break
            elif cfg.damping == "none":
                raise ConvergenceError("Newton step left the positive quadrant")
            lam *= 0.5
            if lam < 1e-6:
                raise ConvergenceError("damped Newton could not keep mu, d positive")
        x, fx = trial, ft
        history.append(float(np.max(np.abs(fx))))
        rel_step = lam * np.max(np.abs(step) / np.maximum(np.abs(x), 1.0))
        if history[-1] <= cfg.abs_tol or rel_step <= cfg.step_tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Newton did not converge in {cfg.max_iters} iterations "
                               f"(residual {history[-1]:.3e})")
    info = {"iterations": it, "residual": fx.tolist(), "residual_history": history,
            "closed_form": list(closed), "residual_below_tol": bool(history[-1] <= cfg.abs_tol)}
    return ParameterState(float(x[0]), float(x[1]), float(x[2]), float(eps), table, tuple(traces), {}, info)


def fd_jacobian(func, x, rel=1e-6):
    """Central-difference Jacobian with relative steps."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = rel * max(abs(x[j]), 1.0)
        e = np.zeros_like(x)
        e[j] = h
        cols.append((func(x + e) - func(x - e)) / (2 * h))
    return np.column_stack(cols)


def correction_matrix(state):
    """M = [[1, -mu/d], [A6 H_aa - (N-1) A3 mu^{N-2}/d^{N-1}, (N-1) A3 mu^{N-1}/d^N]]."""
    v = state.table.values
    n = state.dim_n
    mu, d = state.mu0, state.dn0
    h_aa = state.traces[0]
    return np.array([
        [1.0, -mu / d],
        [v["A6"] * h_aa - (n - 1) * v["A3"] * mu ** (n - 2) / d ** (n - 1), (n - 1) * v["A3"] * mu ** (n - 1) / d ** n],
    ])


def check_jacobian_signs(state, lambda1=None, rtol=1e-6):
    """Sign and determinant report for F0 and M at the leading root.

    Raises
    ------
    ConvergenceError
        If the analytic and finite-difference Jacobians disagree beyond rtol.
    """
    table = state.table
    if lambda1 is not None and abs(lambda1 - table.values["lambda1"]) > 1e-12 * abs(lambda1):
        table = replace(table, values=dict(table.values, lambda1=lambda1))
    x = np.array([state.mu0, state.dn0, state.e0])
    analytic = leading_jacobian(x, table, state.traces)
    numeric = fd_jacobian(lambda z: leading_system(z, table, state.traces), x)
    mismatch = float(np.max(np.abs(analytic - numeric)) / np.max(np.abs(analytic)))
    if mismatch > rtol:
        raise ConvergenceError(f"analytic and FD Jacobians differ by {mismatch:.3e} (relative)")
    printed = printed_f0(x, table, state.traces)
    big_a, big_b, big_c = printed[0, 0], printed[0, 1], printed[1, 1]
    m = correction_matrix(state)
    v = table.values
    det_m_formula = v["A6"] * state.traces[0] * state.mu0 / state.dn0
    det_f0 = float(np.linalg.det(analytic))
    return {
        "F0": analytic.tolist(),
        "F0_printed": printed.tolist(),
        "fd_mismatch": mismatch,
        "printed_vs_analytic": float(np.max(np.abs(printed - analytic)) / np.max(np.abs(analytic))),
        "det_F0": det_f0,
        "det_F0_printed_formula": float(det_f0_printed_formula(table, state.mu0, state.dn0, state.traces[0])),
        "det_F0_positive": det_f0 > 0,
        "AC_minus_B2": float(big_a * big_c - big_b ** 2),
        "AC_minus_B2_positive": bool(big_a * big_c - big_b ** 2 > 0),
        "det_M": float(np.linalg.det(m)),
        "det_M_formula": float(det_m_formula),
        "det_M_nonzero": bool(abs(np.linalg.det(m)) > 0),
    }


def solve_correction_step(state, level, rhs, eps=None):
    """Linear correction (mu_i, d_i, e_i) at the given level.

    Solves M (mu_i, d_i) = eps (R1~, R2) with R1~ = d^{N-2} / ((N-2) A1 mu^{N-3}) R1, then
    back-substitutes the linearized third row a31 mu_i + a32 d_i - lambda1 e_i = eps R3.

    Returns a new ParameterState with ``corrections[level]`` filled, including the
    constant C = max|correction| / eps^level.
    """
    if level < 1:
        raise DomainError("correction levels start at 1")
    eps = state.eps if eps is None else eps
    if eps <= 0:
        raise DomainError("correction steps need eps > 0")
    r1, r2, r3 = (float(r) for r in rhs)
    v = state.table.values
    n = state.dim_n
    mu, d = state.mu0, state.dn0
    m = correction_matrix(state)
    det = np.linalg.det(m)
    if abs(det) < 1e-14 * np.max(np.abs(m)) ** 2:
        raise DegenerateOperator("correction matrix M is singular")
    r1t = d ** (n - 2) / ((n - 2) * v["A1"] * mu ** (n - 3)) * r1
    mu_i, d_i = np.linalg.solve(m, eps * np.array([r1t, r2]))
    jac = leading_jacobian(np.array([mu, d, state.e0]), state.table, state.traces)
    e_i = (jac[2, 0] * mu_i + jac[2, 1] * d_i - eps * r3) / v["lambda1"]
    size = max(abs(mu_i), abs(d_i), abs(e_i))
    corr = dict(state.corrections)
    corr[level] = {"mu": float(mu_i), "dn": float(d_i), "e": float(e_i), "eps": float(eps),
                   "bound_C": float(size / eps ** level)}
    return replace(state, corrections=corr)


# ---------------------------------------------------------------- eps structure
def epsilon_ladder(table, traces, eps_list, remainder, cfg=None):
    """Solve the eps-system along a ladder, warm-starting from the previous root."""
    cfg = cfg or NewtonConfig(abs_tol=1e-6, step_tol=1e-11)
    base = solve_leading_order(table, traces, 0.0)
    states = []
    guess = (base.mu0, base.dn0, base.e0)
    for eps in sorted(eps_list):
        st = solve_leading_order(table, traces, eps, replace(cfg, initial="user", guess=tuple(guess)), remainder)
        guess = (st.mu0, st.dn0, st.e0)
        states.append(st)
    return base, states


def fit_epsilon_structure(eps, values, base, exponent):
    """Least-squares line values - base = c * eps^exponent + b; returns slope, intercept, R^2.

    Also returns the exponent q of the best power law |values - base| ~ eps^q.
    """
    eps = np.asarray(eps, dtype=float)
    y = np.asarray(values, dtype=float) - base
    x = eps ** exponent
    coef = np.polyfit(x, y, 1)
    pred = np.polyval(coef, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    power = float(np.polyfit(np.log(eps), np.log(np.abs(y)), 1)[0]) if np.all(y != 0) else float("nan")
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "r2": r2, "power": power}
