"""Model boundaries with an embedded submanifold K: shape operator, curvature, Fermi charts, Jacobi operator.

Sign convention (used by every other module): nu is the inner unit normal of the domain,
L[e] = -grad_e nu, and H_{alpha beta} = e_alpha . L[e_beta] in an orthonormal frame
(X_1..X_k tangent to K, E_1..E_{N-1} tangent to the boundary and normal to K). With this
choice the unit sphere has H = +Id and the inner equator of a solid torus has a negative
curvature along K.

The boundary curvature tensor is taken from the Gauss equation
R_{abcd} = H_ac H_bd - H_ad H_bc.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateOperator, DomainError

SIGN_CONVENTION = "H_ab = e_a . L[e_b], L[e] = -grad_e nu, nu the inner unit normal"

SUPPORTED_K = {
    "sphere": ("great_circle", "latitude", "clifford"),
    "torus": ("parallel",),
    "ellipsoid": ("principal",),
}


@dataclass(frozen=True)
class HypersurfaceModel:
    """Exactly parametrized boundary of a model domain in R^n with embedded K.

    Parameters
    ----------
    kind : {'sphere', 'torus', 'ellipsoid'}
    n : int
        Ambient dimension.
    params : tuple
        sphere: (R,); torus: (R_major, r_minor); ellipsoid: semi-axes (length n).
    k_kind : str
        sphere: 'great_circle', 'latitude' (height h in k_param), 'clifford' (n=4, k=2);
        torus: 'parallel' (fiber angle v0 in k_param, pi = inner equator);
        ellipsoid: 'principal' (ellipse in the x1-x2 plane).
    k_param : float
    """

    kind: str
    n: int
    params: tuple
    k_kind: str
    k_param: float = 0.0

    def __post_init__(self):
        if self.kind not in SUPPORTED_K:
            raise DomainError(f"unknown model kind {self.kind}")
        if self.k_kind not in SUPPORTED_K[self.kind]:
            raise DomainError(f"K kind {self.k_kind} not supported on {self.kind}")
        if self.n < 3:
            raise DomainError("ambient dimension must be >= 3")
        if self.k_kind == "clifford" and self.n != 4:
            raise DomainError("the Clifford torus lives in S^3 (n = 4)")
        if self.kind == "torus":
            big, small = self.params
            if not 0 < small < big:
                raise DomainError("torus needs 0 < r_minor < R_major")
        if self.kind == "ellipsoid" and len(self.params) != self.n:
            raise DomainError("ellipsoid needs n semi-axes")
        if self.k_kind == "latitude" and not abs(self.k_param) < self.params[0]:
            raise DomainError("latitude height must satisfy |h| < R")

    # ------------------------------------------------------------------ sizes
    @property
    def k(self):
        return 2 if self.k_kind == "clifford" else 1

    @property
    def dim_n(self):
        """Transverse dimension N = n - k."""
        return self.n - self.k

    def param(self, y):
        """K parameter as a length-k array; a scalar is broadcast to every circle."""
        return np.broadcast_to(np.asarray(y, dtype=float), (self.k,)).copy()

    # ------------------------------------------------------------------ implicit description
    def level(self, x):
        """g(x) with the domain {g < 0}."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere":
            return np.sum(x * x, axis=-1) - self.params[0] ** 2
        if self.kind == "torus":
            big, small = self.params
            rho = np.hypot(x[..., 0], x[..., 1])
            return (rho - big) ** 2 + np.sum(x[..., 2:] ** 2, axis=-1) - small ** 2
        axes = np.asarray(self.params, dtype=float)
        return np.sum((x / axes) ** 2, axis=-1) - 1.0

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere":
            return 2.0 * x
        if self.kind == "torus":
            big, _ = self.params
            rho = np.hypot(x[0], x[1])
            out = 2.0 * x.copy()
            out[:2] = 2.0 * (rho - big) * x[:2] / rho
            return out
        return _fd_grad(self.level, x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere":
            return 2.0 * np.eye(self.n)
        if self.kind == "torus":
            big, _ = self.params
            rho = np.hypot(x[0], x[1])
            radial = x[:2] / rho
            hess = 2.0 * np.eye(self.n)
            proj = np.outer(radial, radial)
            hess[:2, :2] = 2.0 * (proj + (rho - big) / rho * (np.eye(2) - proj))
            return hess
        return _fd_hessian(self.level, x)

    def inner_normal(self, x):
        gr = self.grad(x)
        return -gr / np.linalg.norm(gr)

    def project(self, x, iters=50):
        """Closest-point style projection onto the boundary by Newton along the gradient."""
        x = np.asarray(x, dtype=float).copy()
        for _ in range(iters):
            gr = self.grad(x)
            step = self.level(x) / (gr @ gr)
            x -= step * gr
            if abs(step) * np.linalg.norm(gr) < 1e-15 * max(1.0, np.linalg.norm(x)):
                break
        return x

    # ------------------------------------------------------------------ K
    def k_lengths(self):
        """Lengths of the closed coordinate circles of K."""
        if self.k_kind == "great_circle":
            return (2 * np.pi * self.params[0],)
        if self.k_kind == "latitude":
            return (2 * np.pi * np.sqrt(self.params[0] ** 2 - self.k_param ** 2),)
        if self.k_kind == "clifford":
            return (2 * np.pi * self.params[0] / np.sqrt(2),) * 2
        if self.k_kind == "parallel":
            big, small = self.params
            return (2 * np.pi * (big + small * np.cos(self.k_param)),)
        raise DomainError("K length is not closed-form for the ellipsoid")

    def k_point(self, y):
        """Point of K at (unit-speed for closed forms) parameter y."""
        y = self.param(y)
        out = np.zeros(self.n)
        if self.k_kind == "great_circle":
            big = self.params[0]
            out[0], out[1] = big * np.cos(y[0] / big), big * np.sin(y[0] / big)
        elif self.k_kind == "latitude":
            a = np.sqrt(self.params[0] ** 2 - self.k_param ** 2)
            out[0], out[1] = a * np.cos(y[0] / a), a * np.sin(y[0] / a)
            out[-1] = self.k_param
        elif self.k_kind == "clifford":
            c = self.params[0] / np.sqrt(2)
            out[:] = [c * np.cos(y[0] / c), c * np.sin(y[0] / c), c * np.cos(y[1] / c), c * np.sin(y[1] / c)]
        elif self.k_kind == "parallel":
            big, small = self.params
            rad = big + small * np.cos(self.k_param)
            out[0], out[1] = rad * np.cos(y[0] / rad), rad * np.sin(y[0] / rad)
            out[2] = small * np.sin(self.k_param)
        else:
            axes = self.params
            out[0], out[1] = axes[0] * np.cos(y[0]), axes[1] * np.sin(y[0])
        return out

    def k_tangents(self, y):
        """Orthonormal tangent vectors X_a of K (n x k)."""
        y = self.param(y)
        cols = []
        for a in range(self.k):
            cols.append(_fd_deriv(lambda s: self.k_point(_bump(y, a, s)), 0.0))
        tang = np.column_stack(cols)
        q, _ = np.linalg.qr(tang)
        return q * np.sign(np.diag(q.T @ tang))

    def normal_frame(self, y):
        """Frame E_1..E_{N-1} of the boundary tangent space normal to K (n x (N-1)).

        Closed-form frames are invariant under the symmetry group of the model, hence
        parallel along K for the normal connection.
        """
        y = self.param(y)
        p = self.k_point(y)
        n = self.n
        if self.k_kind == "great_circle":
            return np.eye(n)[:, 2:]
        if self.k_kind == "latitude":
            big = self.params[0]
            up = np.eye(n)[:, -1]
            merid = up - (p @ up) * p / big ** 2
            merid /= np.linalg.norm(merid)
            return np.column_stack([merid] + [np.eye(n)[:, j] for j in range(2, n - 1)])
        if self.k_kind == "clifford":
            c = self.params[0] / np.sqrt(2)
            a, b = y[0] / c, y[1] / c
            return np.array([[np.cos(a), np.sin(a), -np.cos(b), -np.sin(b)]]).T / np.sqrt(2)
        if self.k_kind == "parallel":
            theta = y[0] / (self.params[0] + self.params[1] * np.cos(self.k_param))
            v = self.k_param
            merid = np.zeros(n)
            merid[0], merid[1], merid[2] = -np.sin(v) * np.cos(theta), -np.sin(v) * np.sin(theta), np.cos(v)
            return np.column_stack([merid] + [np.eye(n)[:, j] for j in range(3, n)])
        # ellipsoid: complete (tangent of K, inner normal) with Gram-Schmidt
        nu = self.inner_normal(p)
        tang = self.k_tangents(y)
        basis = np.column_stack([tang, nu, np.eye(n)])
        q, _ = np.linalg.qr(basis)
        frame = q[:, 2:n]
        return frame

    def adapted_frame(self, y):
        return np.column_stack([self.k_tangents(y), self.normal_frame(y)])

    # ------------------------------------------------------------------ geodesics
    def exp_normal(self, y, xbar):
        """Boundary geodesic from K(y) with initial velocity sum xbar_i E_i(y)."""
        p = self.k_point(y)
        v = self.normal_frame(y) @ np.asarray(xbar, dtype=float)
        speed = np.linalg.norm(v)
        if self.kind == "sphere":
            big = self.params[0]
            return np.cos(speed / big) * p + np.sinc(speed / (big * np.pi)) * v
        if self.kind == "torus":
            big, small = self.params
            radial = p.copy()
            radial[2:] = 0.0
            radial *= big / np.linalg.norm(radial)
            w = (p - radial) / small
            return radial + small * (np.cos(speed / small) * w + np.sinc(speed / (small * np.pi)) * v / small)
        return self._exp_ode(p, v)

    def _exp_ode(self, p, v):
        def rhs(_, state):
            x, vel = state[:self.n], state[self.n:]
            gr = self.grad(x)
            acc = -(vel @ self.hessian(x) @ vel) / (gr @ gr) * gr
            return np.concatenate([vel, acc])
        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([p, v]), method="DOP853", rtol=1e-12, atol=1e-14)
        return self.project(sol.y[:self.n, -1])

    def fermi_map(self, coords):
        """Upsilon(y, xbar, x_N) = F(y, xbar) + x_N nu(F(y, xbar))."""
        coords = np.asarray(coords, dtype=float)
        k, big_n = self.k, self.dim_n
        y, xbar, xn = coords[:k], coords[k:k + big_n - 1], coords[-1]
        f = self.exp_normal(y, xbar)
        return f + xn * self.inner_normal(f)


def _bump(y, a, s):
    out = np.array(y, dtype=float)
    out[a] += s
    return out


def _fd_deriv(func, x0, h=1e-3):
    return (-func(x0 + 2 * h) + 8 * func(x0 + h) - 8 * func(x0 - h) + func(x0 - 2 * h)) / (12 * h)


def _fd_second(func, x0, h=1e-3):
    return (-func(x0 + 2 * h) + 16 * func(x0 + h) - 30 * func(x0) + 16 * func(x0 - h)
            - func(x0 - 2 * h)) / (12 * h * h)


def _fd_grad(func, x, h=1e-5):
    n = x.size
    return np.array([(func(x + h * e) - func(x - h * e)) / (2 * h) for e in np.eye(n)])


def _fd_hessian(func, x, h=1e-4):
    n = x.size
    out = np.empty((n, n))
    eye = np.eye(n)
    for i in range(n):
        for j in range(i, n):
            ei, ej = h * eye[i], h * eye[j]
            val = (func(x + ei + ej) - func(x + ei - ej) - func(x - ei + ej) + func(x - ei - ej)) / (4 * h * h)
            out[i, j] = out[j, i] = val
    return out


# ---------------------------------------------------------------------- shape data
@dataclass(frozen=True)
class ShapeData:
    """Second fundamental form, connection forms and curvature at a point of K.

    Attributes
    ----------
    H : (n-1, n-1) array
        In the adapted frame (K tangents first).
    k : int
    sum_aa, sum_jj : float
        Traces over K directions and over normal directions.
    gamma : (k, k, N-1) array
        gamma[a, b, i] = <grad_{X_a} X_b, E_i>.
    curvature : (n-1,)*4 array
        Gauss-equation curvature tensor of the boundary.
    """

    H: np.ndarray
    k: int
    sum_aa: float
    sum_jj: float
    gamma: np.ndarray
    curvature: np.ndarray
    point: np.ndarray = field(repr=False)
    frame: np.ndarray = field(repr=False)

    @property
    def mean_curvature_trace(self):
        return float(np.trace(self.H))

    def minimality_residual(self):
        """max_i |sum_a Gamma^a_a(E_i)|."""
        return float(np.max(np.abs(np.einsum("aai->i", self.gamma)))) if self.gamma.size else 0.0

    def jacobi_coefficient(self):
        """c_ml = sum_a R_{m a a l} - sum_{a,c} Gamma^c_a(E_m) Gamma^a_c(E_l)."""
        k = self.k
        r = self.curvature
        ricci_part = np.einsum("maal->ml", r[k:, :k, :k, k:])
        second = np.einsum("aci,cal->il", self.gamma, self.gamma)
        return ricci_part - second


def gauss_curvature(h):
    return np.einsum("ac,bd->abcd", h, h) - np.einsum("ad,bc->abcd", h, h)


def shape_at(model, y, tol=1e-9):
    """ShapeData at K(y); raises DomainError if K(y) is not on the boundary."""
    p = model.k_point(y)
    if abs(model.level(p)) > tol * max(1.0, np.linalg.norm(p) ** 2):
        raise DomainError("point of K is not on the boundary")
    frame = model.adapted_frame(y)
    gr = model.grad(p)
    # L[e] = grad_e (grad g / |grad g|) restricted to tangent directions
    h = frame.T @ model.hessian(p) @ frame / np.linalg.norm(gr)
    h = 0.5 * (h + h.T)
    k = model.k
    gamma = connection_forms(model, y)
    return ShapeData(h, k, float(np.trace(h[:k, :k])), float(np.trace(h[k:, k:])), gamma,
                     gauss_curvature(h), p, frame)


def connection_forms(model, y):
    """gamma[a, b, i] = <d_{X_a} X_b, E_i> from second derivatives of the K parametrization."""
    y = model.param(y)
    k = model.k
    frame = model.normal_frame(y)
    out = np.zeros((k, k, frame.shape[1]))
    for a in range(k):
        for b in range(k):
            if a == b:
                acc = _fd_second(lambda s: model.k_point(_bump(y, a, s)), 0.0)
            else:
                acc = _fd_deriv(lambda s: _fd_deriv(lambda u: model.k_point(_bump(_bump(y, a, s), b, u)), 0.0), 0.0)
            out[a, b] = frame.T @ acc
    return out


def shape_by_normal_differences(model, y, h=1e-3):
    """Independent route: -d nu / d e_alpha by centred differences along the boundary."""
    p = model.k_point(y)
    frame = model.adapted_frame(y)
    m = frame.shape[1]
    out = np.empty((m, m))
    for a in range(m):
        plus = model.inner_normal(model.project(p + h * frame[:, a]))
        minus = model.inner_normal(model.project(p - h * frame[:, a]))
        out[:, a] = -frame.T @ (plus - minus) / (2 * h)
    return out


# ---------------------------------------------------------------------- Fermi metric
def fermi_metric(model, coords, h=1e-3):
    """Pullback metric of the Fermi chart by 4th-order differences of Upsilon."""
    coords = np.asarray(coords, dtype=float)
    jac = np.column_stack([
        _fd_deriv(lambda s: model.fermi_map(_bump(coords, j, s)), 0.0, h) for j in range(coords.size)
    ])
    return jac.T @ jac


def expected_gij(shape, xbar, xn, curvature_sign=1.0):
    """delta - 2 x_N H_ij + (1/3) R_istj x_s x_t + x_N^2 (H^2)_ij on the normal block."""
    k = shape.k
    h = shape.H
    hn = h[k:, k:]
    r = curvature_sign * shape.curvature[k:, k:, k:, k:]
    quad = np.einsum("istj,s,t->ij", r, xbar, xbar) / 3.0
    h2 = (h @ h)[k:, k:]
    return np.eye(hn.shape[0]) - 2 * xn * hn + quad + xn * xn * h2


def fermi_metric_expansion_check(model, y=0.0, direction=None, levels=range(3, 8)):
    """Remainder of the second-order metric expansion over a dyadic ladder |x| = 2^{-m}.

    Returns a dict with per-level remainders, fitted slopes for both curvature-sign
    readings, and the sup of |g_aN|, |g_iN|, |g_NN - 1|.
    """
    k, big_n = model.k, model.dim_n
    y = np.broadcast_to(np.asarray(y, dtype=float), (k,)).copy()
    if direction is None:
        direction = np.linspace(1.0, 0.4, big_n)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    shape = shape_at(model, y)
    sizes, rem_plus, rem_minus, cross, nn = [], [], [], [], []
    for m in levels:
        size = 2.0 ** -m
        x = size * direction
        coords = np.concatenate([y, x])
        g = fermi_metric(model, coords)
        if np.linalg.det(g) <= 1e-12:
            raise DomainError("Fermi chart folds over (degenerate Jacobian)")
        gij = g[k:k + big_n - 1, k:k + big_n - 1]
        rem_plus.append(np.max(np.abs(gij - expected_gij(shape, x[:-1], x[-1], 1.0))))
        rem_minus.append(np.max(np.abs(gij - expected_gij(shape, x[:-1], x[-1], -1.0))))
        cross.append(np.max(np.abs(g[-1, :-1])))
        nn.append(abs(g[-1, -1] - 1.0))
        sizes.append(size)
    logs = np.log(sizes)
    slope_plus = float(np.polyfit(logs, np.log(rem_plus), 1)[0])
    slope_minus = float(np.polyfit(logs, np.log(rem_minus), 1)[0])
    base = fermi_metric(model, np.concatenate([y, np.zeros(big_n)]))
    off_block = max(np.max(np.abs(base[:k, k:])), np.max(np.abs(base[k:-1, -1])))
    if max(rem_plus) < 1e-10:
        reading = "exact"
    else:
        reading = "gauss" if slope_plus >= 2.9 else ("opposite" if slope_minus >= 2.9 else "none")
    return {"sizes": sizes, "remainder": rem_plus, "remainder_opposite_sign": rem_minus,
            "slope": slope_plus, "slope_opposite_sign": slope_minus, "reading": reading,
            "max_g_aN": float(max(cross)), "max_g_NN_minus_1": float(max(nn)),
            "base_off_block": float(off_block)}


# ---------------------------------------------------------------------- Jacobi operator
def fourier_second_derivative(m, length):
    """Spectral second-derivative matrix on m equispaced points of a circle of given length."""
    if m % 2:
        raise DomainError("Fourier grid size must be even")
    h = 2 * np.pi / m
    idx = np.arange(m)
    diff = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = -0.5 * (-1.0) ** diff / np.sin(0.5 * h * diff) ** 2
    np.fill_diagonal(d2, -np.pi ** 2 / (3 * h * h) - 1.0 / 6.0)
    return d2 * (2 * np.pi / length) ** 2


def fourier_first_derivative(m, length):
    h = 2 * np.pi / m
    idx = np.arange(m)
    diff = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = 0.5 * (-1.0) ** diff / np.tan(0.5 * h * diff)
    np.fill_diagonal(d1, 0.0)
    return d1 * (2 * np.pi / length)


@dataclass(frozen=True)
class JacobiOperator:
    """Discrete Delta_K d_l - c_ml d_m on a circle (k=1) or flat 2-torus (k=2).

    Attributes
    ----------
    lengths : tuple
        Circle lengths of K.
    resolution : int
        Fourier points per circle.
    coeff : (points, N-1, N-1) array
        c_ml at every grid point.
    matrix : ndarray
        Assembled operator acting on the stacked field (point-major).
    """

    lengths: tuple
    resolution: int
    coeff: np.ndarray
    matrix: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)

    @property
    def components(self):
        return self.coeff.shape[1]

    def apply(self, d):
        return (self.matrix @ np.asarray(d).reshape(-1)).reshape(np.shape(d))

    def eigenvalues(self):
        return np.sort(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T)))

    def smallest_abs_eigenvalue(self):
        return float(np.min(np.abs(self.eigenvalues())))

    def is_constant(self):
        return bool(np.allclose(self.coeff, self.coeff[0], rtol=1e-10, atol=1e-12))

    def mode_symbols(self):
        """Fourier symbols -|m|^2 (2 pi / L)^2 - eigenvalues of c for constant coefficients."""
        modes = np.fft.fftfreq(self.resolution, 1.0 / self.resolution)
        grids = np.meshgrid(*[(2 * np.pi * modes / length) ** 2 for length in self.lengths], indexing="ij")
        lap = -sum(grids)
        cvals = np.linalg.eigvalsh(self.coeff[0])
        return lap[..., None] - cvals, modes


def constant_jacobi(c, lengths, resolution):
    """Operator with a constant coefficient matrix c (scalar or (N-1)x(N-1))."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    lengths = tuple(lengths)
    points = resolution ** len(lengths)
    coeff = np.repeat(c[None], points, axis=0)
    return _assemble(lengths, resolution, coeff)


def _assemble(lengths, resolution, coeff):
    if len(lengths) == 1:
        lap = fourier_second_derivative(resolution, lengths[0])
    elif len(lengths) == 2:
        eye = np.eye(resolution)
        lap = (np.kron(fourier_second_derivative(resolution, lengths[0]), eye)
               + np.kron(eye, fourier_second_derivative(resolution, lengths[1])))
    else:
        raise DomainError("unsupported K topology: only circles and flat 2-tori")
    comps = coeff.shape[1]
    big_lap = np.kron(lap, np.eye(comps))
    block = np.zeros_like(big_lap)
    for i in range(coeff.shape[0]):
        block[i * comps:(i + 1) * comps, i * comps:(i + 1) * comps] = coeff[i]
    return JacobiOperator(lengths, resolution, coeff, big_lap - block, lap)


def assemble_jacobi(model, resolution=32):
    """Jacobi operator of K in the model boundary with Fourier differentiation."""
    if model.kind == "ellipsoid":
        raise DomainError("unsupported K topology: Jacobi operator needs a closed-form circle or torus K")
    lengths = model.k_lengths()
    axes = [np.arange(resolution) * length / resolution for length in lengths]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lengths))
    coeff = np.array([shape_at(model, y).jacobi_coefficient() for y in pts])
    return _assemble(lengths, resolution, coeff)


def solve_jacobi(op, f, kernel_tol=1e-8):
    """Solve Delta_K d - c d = f; Fourier-diagonal for constant c, dense otherwise.

    Returns (d, report) with the residual and the derivative-bound constant C in
    |d| + |d'| + |d''| <= C |f| (sup norms).
    """
    f = np.asarray(f, dtype=float)
    comps = op.components
    shape = f.shape
    flat = f.reshape(-1, comps)
    eigs = op.eigenvalues()
    scale = max(1.0, float(np.max(np.abs(np.diag(op.laplacian)))))
    if np.min(np.abs(eigs)) < kernel_tol * scale:
        raise DegenerateOperator(f"Jacobi operator has a kernel: {_kernel_mode(op)}")
    if op.is_constant():
        d = _fourier_solve(op, flat)
        method = "fourier"
    else:
        d = np.linalg.solve(op.matrix, flat.reshape(-1)).reshape(flat.shape)
        method = "dense"
    resid = np.max(np.abs(op.matrix @ d.reshape(-1) - flat.reshape(-1)))
    fnorm = np.max(np.abs(flat))
    report = {"method": method, "residual": float(resid), "relative_residual": float(resid / fnorm) if fnorm else 0.0}
    if len(op.lengths) == 1 and fnorm > 0:
        d1 = fourier_first_derivative(op.resolution, op.lengths[0])
        total = np.max(np.abs(d)) + np.max(np.abs(d1 @ d)) + np.max(np.abs(op.laplacian @ d))
        report["bound_constant"] = float(total / fnorm)
    return d.reshape(shape), report


def _fourier_solve(op, flat):
    m = op.resolution
    dims = (m,) * len(op.lengths)
    c = op.coeff[0]
    modes = np.fft.fftfreq(m, 1.0 / m)
    grids = np.meshgrid(*[(2 * np.pi * modes / length) ** 2 for length in op.lengths], indexing="ij")
    lap = -sum(grids)
    fh = np.fft.fftn(flat.reshape(dims + (op.components,)), axes=tuple(range(len(dims))))
    out = np.empty_like(fh)
    comps = op.components
    for idx in np.ndindex(*dims):
        out[idx] = np.linalg.solve(lap[idx] * np.eye(comps) - c, fh[idx])
    return np.real(np.fft.ifftn(out, axes=tuple(range(len(dims))))).reshape(flat.shape)


def _kernel_mode(op):
    vals, vecs = np.linalg.eigh(0.5 * (op.matrix + op.matrix.T))
    i = int(np.argmin(np.abs(vals)))
    vec = vecs[:, i].reshape((op.resolution,) * len(op.lengths) + (op.components,))
    spec = np.abs(np.fft.fftn(vec, axes=tuple(range(len(op.lengths))))).sum(axis=-1)
    idx = np.unravel_index(int(np.argmax(spec)), spec.shape)
    modes = np.fft.fftfreq(op.resolution, 1.0 / op.resolution)
    mode = tuple(int(modes[j]) for j in idx)
    return f"eigenvalue {vals[i]:.3e} at Fourier mode {mode if len(mode) > 1 else mode[0]}"
