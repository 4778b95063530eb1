"""Command-line driver: configuration, pipelines, gates and reports.

Every command writes a versioned JSON payload (and CSV tables where relevant) into the
run directory (``--out``, or ``runs/<config hash>/`` by default). Payloads carry no timestamps so reruns are byte-identical; run
times go to the append-only ``runlog.jsonl`` of the same directory. The exit code is 0
iff every gate of the command passes.
"""
import csv
import hashlib
import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from . import construct as cs
from . import geometry as geo
from . import linsolve as ls
from . import params as pm
from . import quadrature as qd
from . import reduced as rd
from . import spectral as spc
from .bubble import critical_exponent, radial_u
from .errors import BubbleKitError, DomainError

log = logging.getLogger("bubblekit")

SCHEMAS = {"spectrum": "spectrum/1", "constants": "constants/1", "params": "params/1", "jacobi": "jacobi/1",
           "resonance": "resonance/1", "linsolve-bench": "linsolve_bench/1", "construct": "residual_ladder/1",
           "summary": "summary/1"}


# ----------------------------------------------------------------------------- configuration
@dataclass
class GeometryConfig:
    kind: str = "torus"
    params: list = field(default_factory=lambda: [3.0, 1.0])
    k_kind: str = "parallel"
    k_param: float = float(np.pi)
    y: float = 0.0


@dataclass
class ResonanceConfig:
    eps_min: float = 0.04
    eps_max: float = 0.1
    points: int = 1500
    resolution: int = 2048
    kappa: float = 0.5
    gap_bound: float = 10.0


@dataclass
class LinsolveConfig:
    r: int = 3
    refinements: list = field(default_factory=lambda: [0.05, 0.025, 0.0125])
    cap: float = 100.0
    plane_shift: float = 8.0
    variation_tol: float = 0.1
    enlarge_caps: list = field(default_factory=lambda: [25.0, 50.0, 100.0])
    enlarge_h: float = 0.1


@dataclass
class ConstructConfig:
    h: float = 0.1
    cap: float = 40.0
    operator: str = "full"
    thresholds: list = field(default_factory=lambda: [0.85, 1.8, 2.6])


@dataclass
class RunConfig:
    """Validated run configuration (see README for the schema)."""

    dim: int = 7
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    eps_ladder: list = field(default_factory=lambda: cs.dyadic_ladder(9, 13))
    quad_nodes: int = 20
    identity_tol: float = 1e-8
    spectral_tol: float = 1e-6
    decay_tol: float = 0.02
    root_tol: float = 1e-12
    mc_samples: int = 200_000
    jacobi_resolution: int = 32
    resonance: ResonanceConfig = field(default_factory=ResonanceConfig)
    linsolve: LinsolveConfig = field(default_factory=LinsolveConfig)
    construct: ConstructConfig = field(default_factory=ConstructConfig)
    seed: int = 20240601
    out: str = "runs"
    figures: bool = True

    def validate(self):
        if not isinstance(self.dim, int) or self.dim < 6:
            raise DomainError(f"N = {self.dim} is invalid: need an integer N >= 6 (decay window 2 < r < N-2)")
        if self.dim < 7:
            warnings.warn(f"N = {self.dim} is below the existence regime N >= 7; running module checks only")
        eps = np.asarray(self.eps_ladder, dtype=float)
        if eps.size < 2 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise DomainError("eps ladder must hold at least two positive values in strictly decreasing order")
        if self.construct.operator not in ("leading", "full"):
            raise DomainError("construct.operator must be 'leading' or 'full'")
        if not 0 < self.resonance.eps_min < self.resonance.eps_max:
            raise DomainError("resonance window must satisfy 0 < eps_min < eps_max")
        return self

    def to_dict(self):
        return asdict(self)

    def hash(self):
        """Hash of every field that changes results (out and figures excluded)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("figures")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def model(self):
        g = self.geometry
        return geo.HypersurfaceModel(g.kind, self.dim + 1, tuple(g.params), g.k_kind, g.k_param)


def _build(cls, data, path=""):
    if not isinstance(data, dict):
        raise DomainError(f"config section {path or '<root>'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise DomainError(f"unknown config key(s) {', '.join(path + k for k in unknown)}")
    kw = {}
    for name, value in data.items():
        default = known[name].default_factory() if callable(known[name].default_factory) else known[name].default
        if is_dataclass(default):
            kw[name] = _build(type(default), value, f"{path}{name}.")
        else:
            kw[name] = value
    return cls(**kw)


def load_config(path=None, overrides=None):
    """RunConfig from an optional YAML file plus command-line overrides; unknown keys are errors."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    return _build(RunConfig, data).validate()


def parse_ladder(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise DomainError(f"cannot parse eps ladder {text!r}") from exc


# ----------------------------------------------------------------------------- reports
def gate(name, value, tol, passed, ref=None):
    """One numeric check: value, tolerance, pass flag and the property it verifies."""
    return {"name": name, "value": _plain(value), "tolerance": _plain(tol), "passed": bool(passed), "ref": ref}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    return x


class Run:
    """Run directory, in-process artifact cache and dependency bookkeeping.

    The directory is ``out`` when given explicitly, else ``runs/<config hash>``. Hashes of
    payloads already present are read once at start; a payload written by a different
    configuration is moved to ``<command>.<old hash>.json`` before being replaced, so
    nothing in the directory is ever overwritten with different content.
    """

    def __init__(self, cfg, explicit_out=False):
        self.cfg = cfg
        self.dir = Path(cfg.out) if explicit_out else Path(cfg.out) / cfg.hash()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cache = {}
        self.deps = {}
        self.existing = {}
        for name in SCHEMAS:
            path = self.dir / f"{name}.json"
            if path.exists():
                try:
                    self.existing[name] = json.loads(path.read_text()).get("config_hash")
                except json.JSONDecodeError:
                    self.existing[name] = None

    def write(self, command, payload, gates):
        body = {"schema": SCHEMAS[command], "command": command, "config_hash": self.cfg.hash(),
                "seed": self.cfg.seed, "version": __version__, "numpy": np.__version__,
                "dependencies": dict(self.deps), "gates": gates,
                "passed": all(g["passed"] for g in gates), "payload": _plain(payload)}
        path = self.dir / f"{command}.json"
        old = self.existing.get(command)
        if path.exists() and old != self.cfg.hash():
            path.rename(self.dir / f"{command}.{old or 'unknown'}.json")
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        self.existing[command] = self.cfg.hash()
        with open(self.dir / "runlog.jsonl", "a") as fh:
            fh.write(json.dumps({"command": command, "config_hash": self.cfg.hash(),
                                 "time": time.strftime("%Y-%m-%dT%H:%M:%S"),
                                 "passed": body["passed"], "file": path.name}) + "\n")
        (self.dir / "config.yaml").write_text(yaml.safe_dump(self.cfg.to_dict(), sort_keys=True))
        return body

    def dependency(self, stage, snapshot):
        """Upstream status at start of run: present (same config hash), built (absent) or rebuilt-stale."""
        old = snapshot.get(stage)
        if stage not in snapshot:
            self.deps[stage] = "built"
        else:
            self.deps[stage] = "present" if old == self.cfg.hash() else "rebuilt-stale"

    # cached upstream objects
    def spectral(self):
        if "spectral" not in self.cache:
            self.cache["spectral"] = spc.solve_eigen_shooting(self.cfg.dim)
        return self.cache["spectral"]

    def frozen(self):
        if "frozen" not in self.cache:
            self.cache["frozen"] = cs.FrozenGeometry.from_model(self.cfg.model(), self.cfg.geometry.y)
        return self.cache["frozen"]

    def traces(self):
        sd = geo.shape_at(self.cfg.model(), self.cfg.geometry.y)
        return (sd.sum_aa, sd.sum_jj)

    def table(self):
        if "table" not in self.cache:
            self.cache["table"] = qd.compute_constants(self.cfg.dim, self.spectral(), self.traces(),
                                                       nodes=self.cfg.quad_nodes)
        return self.cache["table"]

    def state(self):
        if "state" not in self.cache:
            self.cache["state"] = pm.solve_leading_order(self.table(), self.traces())
        return self.cache["state"]


def _figure(run, name, draw):
    if not run.cfg.figures:
        return None
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    draw(ax)
    fig.tight_layout()
    path = run.dir / f"{name}.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path.name


def _csv(run, name, header, rows):
    with open(run.dir / name, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)
    return name


# ----------------------------------------------------------------------------- pipelines
def cmd_spectrum(run):
    cfg = run.cfg
    pair = run.spectral()
    rich = spc.richardson_fd(cfg.dim)
    count, top = spc.count_positive_modes(cfg.dim)
    rate = spc.decay_rate_fit(pair)
    rel = abs(pair.lambda1 - rich["lambda1"]) / pair.lambda1
    rate_rel = abs(rate - np.sqrt(pair.lambda1)) / np.sqrt(pair.lambda1)
    gates = [gate("shooting vs extrapolated FD lambda1", rel, cfg.spectral_tol, rel < cfg.spectral_tol,
                  "dual-route first eigenvalue"),
             gate("Z0 decay rate vs sqrt(lambda1)", rate_rel, cfg.decay_tol, rate_rel < cfg.decay_tol,
                  "exponential decay of Z0"),
             gate("positive eigenvalue count", count, 1, count == 1, "single positive direction")]
    rows = [(float(r), float(z)) for r, z in zip(pair.r[::10], pair.z0[::10])]
    files = [_csv(run, "z0.csv", ["r", "z0"], rows)]
    fig = _figure(run, "spectrum", lambda ax: (ax.semilogy(pair.r, np.abs(pair.z0), label="|Z0|"),
                                                ax.set_xlabel("r"), ax.legend(),
                                                ax.set_title(f"lambda1 = {pair.lambda1:.10g}")))
    payload = {"lambda1_shooting": pair.lambda1, "lambda1_fd": rich["lambda1"], "fd_ladder": rich["lambdas"],
               "decay_rate": rate, "top_eigenvalues": top, "files": files + ([fig] if fig else [])}
    return payload, gates


def cmd_constants(run):
    cfg = run.cfg
    table = run.table()
    ident = qd.verify_appendix_identities(cfg.dim, table, tol=cfg.identity_tol, nodes=cfg.quad_nodes)
    gates = [gate(name, r["relative"], cfg.identity_tol, r["passed"], "integral identity") for name, r in ident.items()]
    # Monte Carlo cross-check of a Gaussian-weighted bubble integral (seeded)
    n, p = cfg.dim, critical_exponent(cfg.dim)
    grid = qd.full_space(n, nodes=cfg.quad_nodes)
    exact = qd.integrate_axial(grid, lambda s, t: radial_u(n, np.hypot(s, t)) ** (p + 1)
                               * np.exp(-(s * s + t * t))).value
    est, err = qd.monte_carlo_gaussian(lambda r: radial_u(n, r) ** (p + 1), n, samples=cfg.mc_samples,
                                       seed=cfg.seed)
    gates.append(gate("Monte Carlo vs quadrature (standard errors)", abs(est - exact) / err, 5.0,
                      abs(est - exact) < 5 * err, "independent integration route"))
    payload = {"table": table.to_json(), "identities": ident,
               "monte_carlo": {"estimate": est, "stderr": err, "quadrature": exact, "samples": cfg.mc_samples}}
    return payload, gates


def cmd_params(run):
    cfg = run.cfg
    table = run.table()
    traces = run.traces()
    state = run.state()
    closed = pm.closed_form_root(table, traces)
    diff = max(abs(a - b) / max(abs(b), 1.0) for a, b in zip((state.mu0, state.dn0, state.e0), closed))
    signs = pm.check_jacobian_signs(state)
    gates = [gate("Newton root vs closed forms", diff, cfg.root_tol, diff < cfg.root_tol, "leading parameter root"),
             gate("det F0 > 0", signs["det_F0"], 0.0, signs["det_F0_positive"], "invertibility sign"),
             gate("AC - B^2 > 0", signs["AC_minus_B2"], 0.0, signs["AC_minus_B2_positive"], "reduced coercivity"),
             gate("det M != 0", signs["det_M"], 0.0, signs["det_M_nonzero"], "correction solvability")]
    table_hash = hashlib.sha256(json.dumps(_plain(table.to_json()), sort_keys=True).encode()).hexdigest()[:16]
    payload = {"state": state.to_json(), "closed_form": closed, "jacobian": signs, "constants_hash": table_hash}
    return payload, gates


def cmd_jacobi(run):
    cfg = run.cfg
    op = geo.assemble_jacobi(cfg.model(), cfg.jacobi_resolution)
    vals = op.eigenvalues()
    smallest = op.smallest_abs_eigenvalue()
    gates = [gate("Jacobi operator nondegenerate", smallest, 1e-8, smallest > 1e-8, "no Jacobi fields")]
    files = [_csv(run, "jacobi_spectrum.csv", ["index", "eigenvalue"], list(enumerate(map(float, vals))))]
    fig = _figure(run, "jacobi", lambda ax: (ax.plot(vals, ".", ms=3), ax.set_xlabel("index"),
                                              ax.set_ylabel("eigenvalue")))
    payload = {"lengths": op.lengths, "resolution": op.resolution, "constant": op.is_constant(),
               "smallest_abs": smallest, "largest": float(vals[-1]), "files": files + ([fig] if fig else [])}
    return payload, gates


def cmd_resonance(run):
    cfg = run.cfg
    rc = cfg.resonance
    state = run.state()
    length = cfg.model().k_lengths()[0]
    sys_ = rd.ReducedSystem.from_state(state, length, rc.resolution, eps=rc.eps_max)
    grid = np.geomspace(rc.eps_min, rc.eps_max, rc.points)
    scan = rd.scan_resonance(sys_, grid, kappa=rc.kappa)
    matched = rd.match_resonances(scan)
    ok = sum(m["ok"] for m in matched)
    gates = [gate("detected minima", len(scan.minima), 3, len(scan.minima) >= 3, "resonance count"),
             gate("minima on m^2 rho^2 = D1 lambda1", ok / max(len(matched), 1), 1.0,
                  ok == len(matched) and len(matched) > 0, "resonance condition"),
             gate("gap constant bounded", scan.gap_constant, rc.gap_bound,
                  bool(np.isfinite(scan.gap_constant) and scan.gap_constant < rc.gap_bound), "gap estimate")]
    scan.to_csv(run.dir / "resonance.csv")

    def draw(ax):
        ax.loglog(scan.eps, scan.sigma, lw=0.6)
        ax.set_xlabel("eps")
        ax.set_ylabel("smallest singular value")
    fig = _figure(run, "resonance", draw)
    return {"window": [float(grid[0]), float(grid[-1])], "points": rc.points, "scan": scan.to_json(), "files": ["resonance.csv"] + ([fig] if fig else [])}, gates


def cmd_linsolve_bench(run):
    cfg = run.cfg
    lc = cfg.linsolve
    pair = run.spectral()
    grids = [ls.AxialGrid(cfg.dim, h, lc.cap, lc.plane_shift) for h in lc.refinements]
    refine = ls.measure_apriori_constant(cfg.dim, lc.r, pair, grids)
    bad_r = cfg.dim - 1
    enlarge = ls.measure_apriori_constant(cfg.dim, bad_r, pair,
                                          [ls.AxialGrid(cfg.dim, lc.enlarge_h, c, lc.plane_shift)
                                           for c in lc.enlarge_caps], check_window=False)
    gates = [gate(f"stability ratio variation (r={lc.r})", refine["variation"], lc.variation_tol,
                  refine["variation"] < lc.variation_tol, "a priori estimate"),
             gate(f"ratio growth for inadmissible r={bad_r}", enlarge["growth"], 1.1, enlarge["growth_detected"],
                  "decay window is sharp")]
    fig = _figure(run, "linsolve", lambda ax: (ax.plot(lc.refinements, refine["constants"], "o-", label=f"r={lc.r}"),
                                                ax.set_xscale("log"), ax.set_xlabel("core spacing h"),
                                                ax.set_ylabel("max stability ratio"), ax.legend()))
    return {"refinement": refine, "enlargement": enlarge, "files": [fig] if fig else []}, gates


def cmd_construct(run):
    cfg = run.cfg
    cc = cfg.construct
    state = run.state()
    pair = run.spectral()
    frozen = run.frozen()
    start = (state.mu0, state.dn0, state.e0)
    spec = cs.GridSpec(h=cc.h, cap=cc.cap)
    report = cs.residual_ladder(cfg.dim, cfg.eps_ladder, start, frozen, pair, grid_spec=spec, operator=cc.operator)
    gates = [gate(f"slope I={I}", report.slopes[I], thr, report.slopes[I] >= thr, "residual order ladder")
             for I, thr in zip(report.orders, cc.thresholds)]
    defect = max(float(np.max(np.abs(report.projections[I]))) for I in report.orders if I > 0)
    gates.append(gate("kernel projections after level solves", defect, 1e-6, defect < 1e-6, "parameter solve"))
    v = cs.make_solution(cfg.dim, cfg.eps_ladder[-1], tuple(report.params[2][-1]), frozen, pair, spec,
                         operator=cc.operator)
    dv = cs.dirichlet_values(v)
    gates.append(gate("Dirichlet plane values", dv["full"], 1e-12, dv["full"] < 1e-12, "boundary condition"))
    report.to_csv(run.dir / "ladder.csv")

    def draw(ax):
        for I in report.orders:
            ax.loglog(report.eps, report.norms[I], "o-", label=f"I={I}, slope {report.slopes[I]:.2f}")
        ax.set_xlabel("eps")
        ax.set_ylabel("weighted residual norm")
        ax.legend()
    fig = _figure(run, "ladder", draw)
    return {"ladder": report.to_json(), "files": ["ladder.csv"] + ([fig] if fig else [])}, gates


PIPELINES = {"spectrum": cmd_spectrum, "constants": cmd_constants, "params": cmd_params, "jacobi": cmd_jacobi,
             "resonance": cmd_resonance, "linsolve-bench": cmd_linsolve_bench, "construct": cmd_construct}


UPSTREAM = {"constants": ["spectrum"], "params": ["spectrum", "constants"],
            "resonance": ["spectrum", "constants", "params"], "linsolve-bench": ["spectrum"],
            "construct": ["spectrum", "constants", "params"]}


def execute(cfg, commands, explicit_out=False):
    """Run pipelines in order; returns (Run, {command: report body})."""
    run = Run(cfg, explicit_out)
    initial = dict(run.existing)
    out = {}
    for name in commands:
        log.info("running %s", name)
        run.deps = {}
        for stage in UPSTREAM.get(name, []):
            run.dependency(stage, initial)
        payload, gates = PIPELINES[name](run)
        out[name] = run.write(name, payload, gates)
        for g in gates:
            log.info("%s %s: %s (tol %s)", "PASS" if g["passed"] else "FAIL", g["name"], g["value"], g["tolerance"])
    if len(commands) > 1:
        summary = {k: {"passed": v["passed"], "failed": [g["name"] for g in v["gates"] if not g["passed"]]}
                   for k, v in out.items()}
        gates = [gate(f"{k} gates", v["passed"], True, v["passed"]) for k, v in out.items()]
        out["summary"] = run.write("summary", summary, gates)
    return run, out


# ----------------------------------------------------------------------------- click
@click.group()
@click.version_option(__version__)
def main():
    """Verification pipelines for boundary-concentrating bubble solutions."""


def _common(f):
    opts = [click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="YAML config."),
            click.option("--out", default=None, help="Output directory (default: runs)."),
            click.option("--eps-ladder", default=None, help="Comma-separated strictly decreasing eps values."),
            click.option("--dim", type=int, default=None, help="Dimension N = n - k."),
            click.option("--seed", type=int, default=None, help="Seed for Monte Carlo checks."),
            click.option("--figures/--no-figures", default=None, help="Render PNG figures."),
            click.option("--verbose", "-v", is_flag=True, help="Log progress and gate results.")]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _invoke(commands, config_path, out, eps_ladder, dim, seed, figures, verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {"out": out, "dim": dim, "seed": seed, "figures": figures,
                     "eps_ladder": parse_ladder(eps_ladder) if eps_ladder else None}
        cfg = load_config(config_path, overrides)
        run, out_ = execute(cfg, commands, explicit_out=out is not None)
    except (BubbleKitError, yaml.YAMLError, TypeError) as exc:
        raise click.ClickException(str(exc)) from exc
    final = out_["summary"] if "summary" in out_ else out_[commands[0]]
    for name, body in out_.items():
        failed = [g["name"] for g in body["gates"] if not g["passed"]]
        click.echo(f"{name}: {'PASS' if body['passed'] else 'FAIL'}" + (f" ({'; '.join(failed)})" if failed else ""))
    click.echo(f"reports in {run.dir}")
    raise SystemExit(0 if final["passed"] else 1)


def _register(name, commands, doc):
    @main.command(name=name, help=doc)
    @_common
    def _cmd(**kw):
        _invoke(commands, **kw)
    return _cmd


_register("spectrum", ["spectrum"], "First eigenpair of the linearized operator by two routes.")
_register("constants", ["spectrum", "constants"], "Projection constants and integral identities.")
_register("params", ["spectrum", "constants", "params"], "Leading parameter root and sign checks.")
_register("jacobi", ["jacobi"], "Jacobi operator spectrum of K.")
_register("resonance", ["spectrum", "constants", "params", "resonance"], "Resonance scan of the reduced system.")
_register("linsolve-bench", ["spectrum", "linsolve-bench"], "A priori constant of the projected solver.")
_register("construct", ["spectrum", "constants", "params", "construct"], "Residual order ladder.")
_register("all", ["spectrum", "constants", "params", "jacobi", "resonance", "linsolve-bench", "construct"],
          "Every pipeline; exit code 0 iff all gates pass.")


if __name__ == "__main__":
    main()
