"""Projected linear problem for -Delta - pU^{p-1} on a half-space in axial variables.

Fields on R^N are written as f(s, t) Y(theta) with s = |xi_bar|, t = xi_N and Y an
angular mode on S^{N-2}: mode 0 (Y = 1) or mode 1 (Y = xi_1 / s). The domain is the
box 0 <= s <= cap, -S <= t <= cap with Dirichlet data at t = -S (the plane), on the
outer faces, and at s = 0 for mode 1.

The discretization is a vertex-centred finite-volume scheme with the radial weight
s^{N-2}, which gives a symmetric stiffness matrix A and a diagonal mass matrix M.
The constrained problem

    L phi = h + sum_j lambda_j chi Z_j,    <phi, chi Z_j> = 0,

is solved as one sparse saddle-point system.
"""
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bubble import radial_du_over_r, radial_potential, radial_u, radial_z_dilation, sphere_area
from .errors import ConvergenceError, DegenerateOperator, DomainError, HypothesisViolation

# ----------------------------------------------------------------------------- grid


def _graded_nodes(length, h, core):
    """Nodes 0 = x_0 < ... = length: spacing h up to core, then growing by (1 + h)."""
    nodes = [0.0]
    step = h
    while nodes[-1] < length:
        if nodes[-1] >= core:
            step *= 1.0 + h
        nodes.append(nodes[-1] + step)
    nodes = np.array(nodes)
    nodes[-1] = length
    if nodes[-1] - nodes[-2] < 0.5 * (nodes[-2] - nodes[-3]):
        nodes = np.delete(nodes, -2)
    return nodes


@dataclass(frozen=True)
class AxialGrid:
    """Graded tensor grid on [0, cap] x [-plane_shift, cap].

    Parameters
    ----------
    dim_n : int
    h : float
        Core spacing; the far-field stretching factor is 1 + h, so halving h refines
        both regions.
    cap : float
        Outer truncation.
    plane_shift : float
        Distance S from the bubble centre to the Dirichlet plane t = -S.
    core : float
        Radius of the uniformly spaced core.
    plane_cells : int
        If positive, [-plane_shift, 0] is split into this many equal cells instead of
        the graded default, so the nodes depend smoothly on plane_shift.
    """

    dim_n: int
    h: float = 0.1
    cap: float = 100.0
    plane_shift: float = 8.0
    core: float = 2.0
    plane_cells: int = 0
    s: np.ndarray = field(init=False, repr=False, compare=False)
    t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 < self.h <= 0.5:
            raise DomainError("core spacing h must lie in (0, 0.5]")
        if self.plane_shift <= 0 or self.cap <= self.core:
            raise DomainError("need plane_shift > 0 and cap > core")
        object.__setattr__(self, "s", _graded_nodes(self.cap, self.h, self.core))
        if self.plane_cells > 0:
            # fixed cell count: nodes move smoothly with the plane shift
            down = np.linspace(0.0, self.plane_shift, self.plane_cells + 1)
        else:
            down = _graded_nodes(self.plane_shift, self.h, self.core)
        up = _graded_nodes(self.cap, self.h, self.core)
        object.__setattr__(self, "t", np.concatenate([-down[::-1], up[1:]]))

    @property
    def shape(self):
        return self.s.size, self.t.size

    def refined(self):
        return replace(self, h=self.h / 2.0)

    def mesh(self):
        return np.meshgrid(self.s, self.t, indexing="ij")

    def cell_volumes(self):
        """Per-node volumes: s-part int sigma^{N-2} d sigma over the dual cell, t-part dual length."""
        n = self.dim_n
        s, t = self.s, self.t
        sm = np.concatenate([[0.0], 0.5 * (s[1:] + s[:-1]), [s[-1]]])
        vs = (sm[1:] ** (n - 1) - sm[:-1] ** (n - 1)) / (n - 1.0)
        tm = np.concatenate([[t[0]], 0.5 * (t[1:] + t[:-1]), [t[-1]]])
        vt = tm[1:] - tm[:-1]
        return vs, vt


def angular_mass(dim_n, mode):
    """int_{S^{N-2}} Y^2 for Y = 1 (mode 0) or Y = xi_1/s (mode 1)."""
    area = sphere_area(dim_n - 1)
    return area if mode == 0 else area / (dim_n - 1.0)


def angular_eigenvalue(dim_n, mode):
    return mode * (mode + dim_n - 3.0)


# ----------------------------------------------------------------------------- fields
@dataclass(frozen=True)
class AxiField:
    """Axial profiles per angular mode, on the full node set (boundary nodes included).

    Attributes
    ----------
    grid : AxialGrid
    values : dict
        mode -> (len(s), len(t)) array.
    """

    grid: AxialGrid
    values: dict

    def __post_init__(self):
        for mode, arr in self.values.items():
            if mode not in (0, 1):
                raise DomainError("only angular modes 0 and 1 are represented")
            if np.shape(arr) != self.grid.shape:
                raise DomainError("field shape does not match the grid")

    @classmethod
    def from_function(cls, grid, func, mode=0):
        ss, tt = grid.mesh()
        vals = np.asarray(func(ss, tt), dtype=float)
        return cls(grid, {mode: _apply_dirichlet(grid, vals, mode)})

    def mode(self, m):
        return self.values.get(m, np.zeros(self.grid.shape))

    def __add__(self, other):
        modes = set(self.values) | set(other.values)
        return AxiField(self.grid, {m: self.mode(m) + other.mode(m) for m in modes})

    def __mul__(self, scalar):
        return AxiField(self.grid, {m: scalar * v for m, v in self.values.items()})

    __rmul__ = __mul__

    def weighted_norm(self, r):
        """sup (1+|xi|^2)^{r/2} |w| (the angular factor of mode 1 has sup 1)."""
        ss, tt = self.grid.mesh()
        weight = (1.0 + ss * ss + tt * tt) ** (r / 2.0)
        return float(max(np.max(np.abs(weight * v)) for v in self.values.values()))

    def inner(self, other):
        """Discrete L^2(R^N) product."""
        vs, vt = self.grid.cell_volumes()
        vol = np.outer(vs, vt)
        return float(sum(angular_mass(self.grid.dim_n, m) * np.sum(vol * self.mode(m) * other.mode(m))
                         for m in set(self.values) & set(other.values)))

    def l2_norm(self):
        return np.sqrt(self.inner(self))

    def boundary_max(self):
        """Largest |value| on Dirichlet nodes (zero by construction)."""
        out = 0.0
        for m, v in self.values.items():
            out = max(out, np.max(np.abs(v[-1])), np.max(np.abs(v[:, 0])), np.max(np.abs(v[:, -1])))
            if m == 1:
                out = max(out, np.max(np.abs(v[0])))
        return float(out)

    def to_text(self, path):
        """Columnar text (s, t, mode, value) preceded by a JSON header line."""
        g = self.grid
        header = {"schema": "axifield/1", "dim_n": g.dim_n, "h": g.h, "cap": g.cap,
                  "plane_shift": g.plane_shift, "core": g.core,
                  "plane_cells": g.plane_cells, "modes": sorted(self.values)}
        ss, tt = g.mesh()
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(header) + "\n")
            for m in sorted(self.values):
                block = np.column_stack([ss.ravel(), tt.ravel(), np.full(ss.size, m), self.values[m].ravel()])
                np.savetxt(fh, block, fmt="%.17g")

    @classmethod
    def from_text(cls, path):
        with open(path) as fh:
            header = json.loads(fh.readline()[2:])
        grid = AxialGrid(header["dim_n"], header["h"], header["cap"], header["plane_shift"], header["core"],
                         header.get("plane_cells", 0))
        data = np.loadtxt(path, comments="#", ndmin=2)
        values = {}
        for m in header["modes"]:
            values[m] = data[data[:, 2] == m, 3].reshape(grid.shape)
        return cls(grid, values)


def _apply_dirichlet(grid, vals, mode):
    vals = np.array(vals, dtype=float)
    vals[-1] = 0.0
    vals[:, 0] = 0.0
    vals[:, -1] = 0.0
    if mode == 1:
        vals[0] = 0.0
    return vals


def _unknown_mask(grid, mode):
    mask = np.ones(grid.shape, dtype=bool)
    mask[-1] = False
    mask[:, 0] = False
    mask[:, -1] = False
    if mode == 1:
        mask[0] = False
    return mask


# ----------------------------------------------------------------------------- kernels
def cutoff(grid):
    """chi(|xi|): 1 for |xi| <= R, 0 for |xi| >= 2R, smooth in between; R = min(S, cap)/2."""
    radius = 0.5 * min(grid.plane_shift, grid.cap)
    ss, tt = grid.mesh()
    x = np.sqrt(ss * ss + tt * tt) / radius - 1.0
    out = np.zeros_like(x)
    inside = x <= 0
    out[inside] = 1.0
    mid = (x > 0) & (x < 1)
    a = np.exp(-1.0 / x[mid])
    b = np.exp(-1.0 / (1.0 - x[mid]))
    out[mid] = b / (a + b)
    return out


def kernel_labels(dim_n):
    """Constraint order: Z_0, Z_1..Z_{N-1} (tangential), Z_N, Z_{N+1}."""
    return ["Z0"] + [f"Z{j}" for j in range(1, dim_n)] + [f"Z{dim_n}", f"Z{dim_n + 1}"]


def kernel_fields(grid, spectral, with_cutoff=True):
    """chi Z_j for all N+2 constraints; tangential j >= 2 are None (orthogonal by symmetry)."""
    n = grid.dim_n
    if spectral.dim_n != n:
        raise DomainError("spectral pair dimension does not match the grid")
    ss, tt = grid.mesh()
    rr = np.sqrt(ss * ss + tt * tt)
    chi = cutoff(grid) if with_cutoff else np.ones(grid.shape)
    g = radial_du_over_r(n, rr)
    out = [AxiField(grid, {0: _apply_dirichlet(grid, chi * spectral(rr), 0)})]
    out.append(AxiField(grid, {1: _apply_dirichlet(grid, chi * ss * g, 1)}))
    out.extend([None] * (n - 2))
    out.append(AxiField(grid, {0: _apply_dirichlet(grid, chi * tt * g, 0)}))
    out.append(AxiField(grid, {0: _apply_dirichlet(grid, chi * radial_z_dilation(n, rr), 0)}))
    return out


def constraint_residuals(field_, kernels):
    """Relative residuals <f, chi Z_j> / (|f| |chi Z_j|) for all N+2 constraints."""
    fn = field_.l2_norm()
    out = []
    for z in kernels:
        if z is None or fn == 0:
            out.append(0.0)
        else:
            out.append(abs(field_.inner(z)) / (fn * z.l2_norm()))
    return np.array(out)


def orthogonalize_rhs(h, spectral, tol=1e-12, with_cutoff=True):
    """Subtract sum c_j chi Z_j so that every constraint vanishes; returns (field, report)."""
    kernels = kernel_fields(h.grid, spectral, with_cutoff)
    active = [(j, z) for j, z in enumerate(kernels) if z is not None and set(z.values) <= set(h.values)]
    gram = np.array([[a.inner(b) for _, b in active] for _, a in active])
    rhs = np.array([h.inner(z) for _, z in active])
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1.0 / tol:
        raise DegenerateOperator(f"Gram matrix of the cutoff kernels is singular (cond {cond:.3e}); grid too coarse")
    coef = np.linalg.solve(gram, rhs)
    out = h
    for c, (_, z) in zip(coef, active):
        out = out + (-c) * z
    coeffs = np.zeros(len(kernels))
    for c, (j, _) in zip(coef, active):
        coeffs[j] = c
    return out, {"coefficients": coeffs.tolist(), "residuals": constraint_residuals(out, kernels).tolist(),
                 "gram_condition": float(cond)}


# ----------------------------------------------------------------------------- operator
@dataclass(frozen=True)
class Perturbation:
    """Axisymmetric coefficient perturbations (mode preserving).

    b_tt d_tt + b_t d_t + b_bar Delta_bar + b_s d_s, where Delta_bar = sum_{i<N} d_ii
    and d_s is the radial derivative in xi_bar (b_i = b_s xi_i / s). All coefficients
    are callables of (s, t).
    """

    b_tt: object = None
    b_t: object = None
    b_bar: object = None
    b_s: object = None

    def is_zero(self):
        return all(b is None for b in (self.b_tt, self.b_t, self.b_bar, self.b_s))

    def size(self, grid):
        """sup |b| + sup |D b| over second-order coefficients plus sup (1+|y|)|b| over drifts."""
        ss, tt = grid.mesh()
        total = 0.0
        for b in (self.b_tt, self.b_bar):
            if b is not None:
                v = np.broadcast_to(b(ss, tt), ss.shape)
                ds = np.gradient(v, grid.s, axis=0)
                dt = np.gradient(v, grid.t, axis=1)
                total += np.max(np.abs(v)) + np.max(np.hypot(ds, dt))
        for b in (self.b_t, self.b_s):
            if b is not None:
                total += np.max((1.0 + np.sqrt(ss * ss + tt * tt)) * np.abs(b(ss, tt)))
        return float(total)


def _second_difference_s(s):
    """d/ds and d^2/ds^2 three-point weights at interior s nodes (same layout as in t)."""
    return _second_difference_t(s)


def _second_difference_t(t):
    """Non-uniform three-point d/dt and d^2/dt^2 weights at interior nodes."""
    hm = t[1:-1] - t[:-2]
    hp = t[2:] - t[1:-1]
    d2 = np.stack([2 / (hm * (hm + hp)), -2 / (hm * hp), 2 / (hp * (hm + hp))])
    d1 = np.stack([-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))])
    return d1, d2


def assemble_full(grid, mode, potential=None, perturbation=None):
    """Operator rows for every node (Dirichlet nodes included) and the node masses.

    Rows are flux balances of the finite-volume scheme, scaled by the cell volume.
    """
    n = grid.dim_n
    s, t = grid.s, grid.t
    ns, nt = grid.shape
    ss, tt = grid.mesh()
    if potential is None:
        potential = radial_potential(n, np.sqrt(ss * ss + tt * tt))
    vs, vt = grid.cell_volumes()
    mass = np.outer(vs, vt)
    number = np.arange(ns * nt).reshape(grid.shape)
    rows, cols, vals = [], [], []

    def add(a, b, w):
        # flux w (f_a - f_b) contributes to row a
        rows.extend([a.ravel(), a.ravel()])
        cols.extend([a.ravel(), b.ravel()])
        vals.extend([w.ravel(), -w.ravel()])

    sm = 0.5 * (s[1:] + s[:-1])
    face_s = sm ** (n - 2) / (s[1:] - s[:-1])
    ii, jj = np.meshgrid(np.arange(ns - 1), np.arange(nt), indexing="ij")
    w = face_s[ii] * vt[jj]
    add(number[ii, jj], number[ii + 1, jj], w)
    add(number[ii + 1, jj], number[ii, jj], w)
    face_t = 1.0 / (t[1:] - t[:-1])
    ii, jj = np.meshgrid(np.arange(ns), np.arange(nt - 1), indexing="ij")
    w = vs[ii] * face_t[jj]
    add(number[ii, jj], number[ii, jj + 1], w)
    add(number[ii, jj + 1], number[ii, jj], w)
    with np.errstate(divide="ignore", invalid="ignore"):
        ang = np.where(ss > 0, angular_eigenvalue(n, mode) / (ss * ss), 0.0)
    rows.append(number.ravel()); cols.append(number.ravel()); vals.append((mass * (ang - potential)).ravel())
    if perturbation is not None and not perturbation.is_zero():
        # perturbation rows are point values b D f at the node, scaled by the node mass
        for (ri, ci, vv) in _perturbation_entries(grid, mode, perturbation):
            rows.append(number[ri].ravel()); cols.append(number[ci].ravel())
            vals.append((mass[ri] * vv).ravel())
    size = ns * nt
    full = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    return full, mass


def _perturbation_entries(grid, mode, pert):
    """(row index, column index, weight) triples of the perturbation stencil."""
    n = grid.dim_n
    s, t = grid.s, grid.t
    ns, nt = grid.shape
    ss, tt = grid.mesh()
    out = []

    def coef(b):
        return np.broadcast_to(b(ss, tt), ss.shape)

    if pert.b_tt is not None or pert.b_t is not None:
        d1, d2 = _second_difference_t(t)
        c = np.zeros((3, ns, nt - 2))
        if pert.b_tt is not None:
            c += coef(pert.b_tt)[None, :, 1:-1] * d2[:, None, :]
        if pert.b_t is not None:
            c += coef(pert.b_t)[None, :, 1:-1] * d1[:, None, :]
        ii, jj = np.meshgrid(np.arange(ns), np.arange(1, nt - 1), indexing="ij")
        for k, off in enumerate((-1, 0, 1)):
            out.append(((ii, jj), (ii, jj + off), c[k]))
    if pert.b_bar is not None or pert.b_s is not None:
        d1, d2 = _second_difference_s(s)
        sc = s[1:-1][None, :, None]
        c = np.zeros((3, ns - 2, nt))
        diag_extra = np.zeros((ns - 2, nt))
        if pert.b_bar is not None:
            bb = coef(pert.b_bar)
            c += bb[None, 1:-1] * (d2[:, :, None] + (n - 2.0) / sc * d1[:, :, None])
            diag_extra -= bb[1:-1] * angular_eigenvalue(n, mode) / s[1:-1, None] ** 2
            if mode == 0:
                # s = 0: Delta_bar f = (N-1) f_ss with even reflection
                w = (n - 1.0) * 2.0 / s[1] ** 2 * bb[0]
                jj0 = np.arange(nt)
                out.append(((np.zeros(nt, int), jj0), (np.zeros(nt, int), jj0), -w))
                out.append(((np.zeros(nt, int), jj0), (np.ones(nt, int), jj0), w))
        if pert.b_s is not None:
            c += coef(pert.b_s)[None, 1:-1] * d1[:, :, None]
        c[1] += diag_extra
        ii, jj = np.meshgrid(np.arange(1, ns - 1), np.arange(nt), indexing="ij")
        for k, off in enumerate((-1, 0, 1)):
            out.append(((ii, jj), (ii + off, jj), c[k]))
    return out


def apply_perturbation(grid, mode, pert, f):
    """Point values of the perturbation applied to a nodal field (zero where no stencil)."""
    out = np.zeros(grid.shape)
    if pert is None or pert.is_zero():
        return out
    for ri, ci, vv in _perturbation_entries(grid, mode, pert):
        np.add.at(out, ri, vv * f[ci])
    return out


def assemble_operator(grid, mode, potential=None, perturbation=None):
    """Stiffness A (with -potential) and lumped mass M on the unknown nodes of one mode.

    Parameters
    ----------
    potential : (len(s), len(t)) array, optional
        Zeroth-order coefficient V in -Delta - V; defaults to pU^{p-1}.
    perturbation : Perturbation, optional

    Returns
    -------
    A : csr_matrix, M : 1-D array of masses, mask : boolean array of unknown nodes.
    """
    full, mass = assemble_full(grid, mode, potential, perturbation)
    mask = _unknown_mask(grid, mode)
    flat = mask.ravel()
    return full[flat][:, flat].tocsr(), mass[mask], mask


def harmonic_extension(grid, boundary_values, mode=0):
    """Solve the discrete -Delta f = 0 with Dirichlet data taken from boundary_values.

    Used as a discrete maximum-principle check of the pure Laplacian sub-block.
    """
    full, _ = assemble_full(grid, mode, potential=np.zeros(grid.shape))
    mask = _unknown_mask(grid, mode).ravel()
    g = np.asarray(boundary_values, dtype=float).ravel()
    a_ii = full[mask][:, mask].tocsc()
    a_ib = full[mask][:, ~mask]
    out = g.copy()
    out[mask] = splu(a_ii).solve(-(a_ib @ g[~mask]))
    return out.reshape(grid.shape)


@dataclass(frozen=True)
class ProjectedProblem:
    """Constrained problem L phi = h + sum lambda_j chi Z_j with <phi, chi Z_j> = 0.

    Parameters
    ----------
    grid : AxialGrid
    r : float
        Decay index; 2 < r < N-2 unless ``check_window`` is False.
    rhs : AxiField
    spectral : SpectralPair
    perturbation : Perturbation, optional
    delta : float
        Declared smallness of the perturbation.
    potential : dict, optional
        mode -> V array replacing pU^{p-1}.
    kernel_cutoff : bool
        Constrain against chi Z_j (default) or against the uncut Z_j.
    """

    grid: AxialGrid
    r: float
    rhs: AxiField
    spectral: object = field(repr=False)
    perturbation: Perturbation = None
    delta: float = 0.1
    potential: dict = None
    check_window: bool = True
    orth_tol: float = 1e-8
    kernel_cutoff: bool = True

    def __post_init__(self):
        n = self.grid.dim_n
        if self.check_window and not 2 < self.r < n - 2:
            raise HypothesisViolation(f"decay index r = {self.r} outside the window (2, {n - 2})")
        if self.perturbation is not None and self.perturbation.size(self.grid) >= self.delta:
            raise DomainError("coefficient perturbation is not below the declared smallness delta")
        if self.rhs.grid != self.grid:
            raise DomainError("rhs lives on a different grid")


def solve_projected(problem):
    """Solve the saddle-point system; returns (phi, multipliers, report).

    multipliers is an array of length N+2 in the order of ``kernel_labels``.
    """
    grid = problem.grid
    n = grid.dim_n
    kernels = kernel_fields(grid, problem.spectral, problem.kernel_cutoff)
    res = constraint_residuals(problem.rhs, kernels)
    if np.max(res) > problem.orth_tol:
        raise DomainError(f"rhs violates the orthogonality constraints (max residual {np.max(res):.3e})")
    values, lam = {}, np.zeros(n + 2)
    residual, scale = 0.0, 0.0
    for mode, h in problem.rhs.values.items():
        pot = None if problem.potential is None else problem.potential.get(mode)
        mat, mass, mask = assemble_operator(grid, mode, pot, problem.perturbation)
        active = [j for j, z in enumerate(kernels) if z is not None and mode in z.values]
        cols = np.column_stack([kernels[j].values[mode][mask] for j in active])
        b = sp.csr_matrix(mass[:, None] * cols)
        q = len(active)
        big = sp.bmat([[mat, -b], [-b.T, None]], format="csc")
        rhs = np.concatenate([mass * h[mask], np.zeros(q)])
        try:
            lu = splu(big)
        except RuntimeError as exc:
            raise DegenerateOperator(f"saddle system singular: {exc}") from exc
        sol = lu.solve(rhs)
        sol += lu.solve(rhs - big @ sol)  # one step of iterative refinement
        if not np.all(np.isfinite(sol)):
            raise ConvergenceError("saddle solve produced non-finite values")
        f = np.zeros(grid.shape)
        f[mask] = sol[:-q]
        values[mode] = f
        lam[active] = sol[-q:]
        lf = mat @ sol[:-q] / mass
        resid = lf - h[mask] - cols @ sol[-q:]
        residual = max(residual, float(np.max(np.abs(resid))))
        scale = max(scale, float(np.max(np.abs(h[mask]))))
    phi = AxiField(grid, values)
    report = {"residual": residual, "relative_residual": residual / scale if scale else 0.0,
              "orthogonality": constraint_residuals(phi, kernels).tolist(),
              "labels": kernel_labels(n)}
    return phi, lam, report


def apply_operator(problem, phi):
    """L phi on unknown nodes, returned as an AxiField (zero on Dirichlet nodes)."""
    out = {}
    for mode, f in phi.values.items():
        pot = None if problem.potential is None else problem.potential.get(mode)
        mat, mass, mask = assemble_operator(problem.grid, mode, pot, problem.perturbation)
        g = np.zeros(problem.grid.shape)
        g[mask] = mat @ f[mask] / mass
        out[mode] = g
    return AxiField(problem.grid, out)


def multipliers_from_gram(problem, phi):
    """lambda = G^{-1} <L phi - h, chi Z>, G the Gram matrix of the cutoff kernels."""
    kernels = kernel_fields(problem.grid, problem.spectral, problem.kernel_cutoff)
    defect = apply_operator(problem, phi) + (-1.0) * problem.rhs
    active = [j for j, z in enumerate(kernels) if z is not None]
    gram = np.array([[kernels[a].inner(kernels[b]) for b in active] for a in active])
    rhs = np.array([defect.inner(kernels[j]) for j in active])
    lam = np.zeros(len(kernels))
    lam[active] = np.linalg.solve(gram, rhs)
    diag = np.zeros(len(kernels))
    diag[active] = rhs / np.diag(gram)
    return lam, diag


def stability_ratio(phi, h, r):
    """||phi||_{r-2} / ||h||_r."""
    return phi.weighted_norm(r - 2) / h.weighted_norm(r)


# ----------------------------------------------------------------------------- a-priori constant
def rhs_family(grid, r):
    """Fields with ||h||_r of order one probing the a-priori bound (before orthogonalization)."""
    n = grid.dim_n
    fam = {
        "Up": lambda s, t: radial_u(n, np.sqrt(s * s + t * t)) ** ((n + 2.0) / (n - 2.0)),
        "power": lambda s, t: (1.0 + s * s + t * t) ** (-r / 2.0),
        "power_shifted": lambda s, t: (1.0 + s * s + (t - 3.0) ** 2) ** (-r / 2.0),
        "power_odd": lambda s, t: t * (1.0 + s * s + t * t) ** (-(r + 1) / 2.0),
    }
    out = {name: AxiField.from_function(grid, f, 0) for name, f in fam.items()}
    out["power_mode1"] = AxiField.from_function(grid, lambda s, t: s * (1.0 + s * s + t * t) ** (-(r + 1) / 2.0), 1)
    return out


def measure_apriori_constant(dim_n, r, spectral, grids, family=None, perturbation=None, delta=0.1,
                             check_window=True, growth_tol=0.1):
    """Empirical sup over the rhs family of ||phi||_{r-2}/||h||_r on each grid.

    Parameters
    ----------
    grids : list of AxialGrid
        A refinement ladder or a domain-enlargement ladder.
    family : callable (grid, r) -> dict of AxiField, optional

    Returns
    -------
    dict with per-grid constants, per-member ratios, relative variation and a growth flag
    (constant increasing by more than growth_tol along the ladder).
    """
    family = family or rhs_family
    per_grid, members = [], []
    for grid in grids:
        if grid.dim_n != dim_n:
            raise DomainError("grid dimension mismatch")
        ratios = {}
        for name, h0 in family(grid, r).items():
            h, _ = orthogonalize_rhs(h0, spectral)
            prob = ProjectedProblem(grid, r, h, spectral, perturbation, delta, check_window=check_window)
            phi, _, rep = solve_projected(prob)
            ratios[name] = stability_ratio(phi, h, r)
        per_grid.append(max(ratios.values()))
        members.append(ratios)
    c = np.array(per_grid)
    variation = float((c.max() - c.min()) / c.min())
    growth = float(c[-1] / c[0])
    return {"r": r, "constants": c.tolist(), "ratios": members, "variation": variation,
            "growth": growth, "growth_detected": bool(growth > 1.0 + growth_tol and np.all(np.diff(c) > 0)),
            "grids": [{"h": g.h, "cap": g.cap, "plane_shift": g.plane_shift, "shape": g.shape} for g in grids]}


def perturbation_robustness(dim_n, r, spectral, grid, delta=0.05):
    """Constant with b = 0 versus a perturbation of size delta/2; reports |dC| and 2 C delta."""
    base = measure_apriori_constant(dim_n, r, spectral, [grid])["constants"][0]
    bump = lambda s, t: np.exp(-(s * s + t * t) / 8.0)
    pert = Perturbation(b_tt=lambda s, t: bump(s, t), b_t=lambda s, t: bump(s, t) / (1.0 + np.sqrt(s * s + t * t)))
    scale = 0.5 * delta / pert.size(grid)
    pert = Perturbation(b_tt=lambda s, t: scale * bump(s, t),
                        b_t=lambda s, t: scale * bump(s, t) / (1.0 + np.sqrt(s * s + t * t)))
    perturbed = measure_apriori_constant(dim_n, r, spectral, [grid], perturbation=pert,
                                         delta=delta)["constants"][0]
    return {"C": base, "C_perturbed": perturbed, "change": abs(perturbed - base), "bound": 2 * base * delta,
            "size": pert.size(grid), "within_bound": abs(perturbed - base) < 2 * base * delta}
