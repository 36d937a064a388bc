"""Verification suites, configuration and the on-disk spectrum cache.

Each suite takes a :class:`configparser.SectionProxy`-like mapping and
returns a :class:`SuiteResult` holding reports, CSV tables and free-form
observations.  Nothing here reads the clock, so two runs with the same
configuration produce identical results.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import curvature_engine as ce
from . import finsler_hyperbolicity as fh
from . import fiber_geometry as fg
from . import ks_wp
from . import ke_solver
from . import resolvent_bounds as rb
from . import spectral_core as sc
from .reports import BoundReport, DomainError, ResonanceError, WPGeomError, fingerprint

CACHE_ENV = "WPGEOM_CACHE"

DEFAULT_CONFIG = """\
[general]
soft_tolerance = 0.0

[resolvent]
radii = 0.1, 0.5, 1, 2, 5
grid_points = 50
dominance_dims = 2, 3

[spectral]
torus_resolution = 32
pairs = 100
seed = 11

[fiber]
resolution = 4

[ke]
epsilon = 0.05
tol = 1e-10
max_steps = 8

[phi]
samples = 50
seed = 3
determinant_instances = 1000
determinant_dims = 1, 2, 3, 5

[qdiff]
min_gap = 10

[curvature]
synthetic_n = 2
synthetic_nodes = 120
m_values = 1, 2, 5
samples = 100
seed = 5

[finsler]
points = 21, 41
radius = 1.0
curve_points = 15
seed = 7

[resonance]
seed = 13
"""

RANDOMIZED = ("spectral", "phi", "curvature", "finsler", "resonance")
SUITES = ("resolvent", "spectral", "fiber", "ke", "phi", "qdiff", "curvature", "finsler",
          "resonance")


class ConfigError(WPGeomError):
    pass


def load_config(path=None, overrides: dict | None = None) -> configparser.ConfigParser:
    """Defaults, then the file at ``path``, then ``{section: {key: value}}`` overrides."""
    cfg = configparser.ConfigParser()
    cfg.read_string(DEFAULT_CONFIG)
    if path is not None:
        user = configparser.ConfigParser()
        if not user.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for sec in user.sections():
            if sec not in cfg:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            if sec in RANDOMIZED and "seed" not in user[sec]:
                raise ConfigError(f"{path}: section [{sec}] needs an explicit seed")
            for k, v in user[sec].items():
                cfg[sec][k] = v
    for sec, kv in (overrides or {}).items():
        for k, v in kv.items():
            cfg[sec][k] = str(v)
    return cfg


def floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


# -- cache --------------------------------------------------------------------------

def cache_dir() -> Path | None:
    d = os.environ.get(CACHE_ENV)
    if not d:
        return None
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


_memo: dict = {}


def fiber(kind: str, resolution: int) -> fg.DiscreteFiber:
    key = ("fiber", kind, resolution)
    if key not in _memo:
        _memo[key] = fg.build_fiber(kind, resolution)
    return _memo[key]


def spectrum(kind: str, resolution: int, normalization: str = "complex") -> sc.SpectralDecomposition:
    """Full decomposition of the fiber Laplacian, read from the cache when present."""
    key = ("spec", kind, resolution, normalization)
    if key in _memo:
        return _memo[key]
    f = fiber(kind, resolution)
    K = fg.stiffness_matrix(f)
    if normalization == "complex":
        K = 0.5 * K
    d = cache_dir()
    path = d / f"spectrum-{kind}-{resolution}-{normalization}.npz" if d else None
    spec = None
    if path is not None and path.exists():
        s = sc.load_spectrum(path)
        if s.dim == f.n_vertices and np.allclose(s.volume_weights, f.area_weights, rtol=1e-12):
            spec = sc.SpectralDecomposition(s.eigenvalues, s.eigenvectors, s.volume_weights,
                                            complete=s.complete, stiffness=K.tocsr(), label=s.label)
    if spec is None:
        spec = fg.assemble_laplacian(f, normalization=normalization)
        if path is not None:
            sc.save_spectrum(spec, path)
    _memo[key] = spec
    return spec


def fiber_diameter(kind: str, resolution: int) -> float:
    key = ("diam", kind, resolution)
    if key not in _memo:
        _memo[key] = fg.diameter(fiber(kind, resolution))
    return _memo[key]


def qd_basis(resolution: int):
    key = ("qd", resolution)
    if key not in _memo:
        _memo[key] = ks_wp.quadratic_differential_basis(fiber("octagon", resolution))
    return _memo[key]


# -- results --------------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    reports: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)      # name -> (header, rows)
    observations: dict = field(default_factory=dict)

    def failures(self, soft_tolerance: float = 0.0) -> list[BoundReport]:
        out = []
        for r in self.reports:
            if r.hard and not r.passed:
                out.append(r)
            elif not r.hard and r.margin < -(r.slack_used + soft_tolerance):
                out.append(r)
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "reports": [r.to_dict() for r in self.reports],
                "observations": self.observations,
                "tables": {k: {"header": h, "rows": rows} for k, (h, rows) in self.tables.items()}}


# -- suites ---------------------------------------------------------------------------------

def run_resolvent(cfg) -> SuiteResult:
    res = SuiteResult("resolvent")
    for r in floats(cfg["resolvent"]["radii"]):
        p = rb.resolvent_lower_bound(n=1, r=r)
        closed = rb.modified_bessel_k(0, math.sqrt(5) * r) / math.pi
        res.reports.append(BoundReport.identity(f"P1_closed_form_r{r:g}", "eq:hker1", p, closed, 1e-8,
                                                provenance={"n": 1, "r": r}))
    npts = int(cfg["resolvent"]["grid_points"])
    for n in ints(cfg["resolvent"]["dominance_dims"]):
        tab = rb.pn_table(n, 0.05, 5.0, npts)
        i = int(np.argmin(tab[:, 3]))
        res.reports.append(BoundReport("bessel_dominance", "eq:hker1", tab[i, 1], tab[i, 2],
                                       tab[i, 3], 1e-8, provenance={"n": n, "grid": npts},
                                       details={"r": tab[i, 0]}))
        res.tables[f"pn_table_n{n}"] = (["r", "P_n", "bessel_estimate", "margin"], tab.tolist())
    return res


def run_spectral(cfg) -> SuiteResult:
    sec = cfg["spectral"]
    res = SuiteResult("spectral")
    N = int(sec["torus_resolution"])
    spec = spectrum("torus", N, "real")
    rng = np.random.default_rng(int(sec["seed"]))
    pairs = rng.integers(0, spec.dim, size=(int(sec["pairs"]), 2))
    res.reports.append(sc.verify_resolvent_heat_identity(spec, pairs))
    lam1 = spec.first_nonzero()
    target = 4 * math.pi ** 2
    rel = abs(lam1 - target) / target
    res.reports.append(BoundReport.inequality("torus_first_eigenvalue", "calibration", 0.02, rel,
                                              0.0, hard=False,
                                              provenance={"resolution": N},
                                              details={"lambda_1": lam1, "target": target}))
    res.tables["torus_eigenvalues"] = (["index", "eigenvalue"],
                                       [[i, float(v)] for i, v in enumerate(spec.eigenvalues[:20])])
    return res


def run_fiber(cfg) -> SuiteResult:
    resn = int(cfg["fiber"]["resolution"])
    f = fiber("octagon", resn)
    res = SuiteResult("fiber")
    area = float(f.area_weights.sum())
    res.reports.append(BoundReport.inequality("octagon_area", "gauss-bonnet", 0.01,
                                              abs(area / (4 * math.pi) - 1), 0.0, hard=False,
                                              provenance={"resolution": resn},
                                              details={"area": area}))
    chi = f.euler_characteristic()
    res.reports.append(BoundReport.identity("euler_characteristic", "gauss-bonnet", chi, -2, 0.0,
                                            provenance={"resolution": resn}))
    spec = spectrum("octagon", resn)
    res.observations.update({"vertices": f.n_vertices, "diameter": fiber_diameter("octagon", resn),
                             "lambda_1_complex": spec.first_nonzero()})
    res.tables["octagon_eigenvalues"] = (["index", "eigenvalue"],
                                         [[i, float(v)] for i, v in enumerate(spec.eigenvalues[:20])])
    return res


def run_ke(cfg) -> SuiteResult:
    sec = cfg["ke"]
    resn = int(cfg["fiber"]["resolution"])
    f = fiber("octagon", resn)
    bg = ke_solver.make_background(f, epsilon=float(sec["epsilon"]))
    tol = float(sec["tol"])
    sol = ke_solver.solve_ke(f, bg, tol=tol)
    res = SuiteResult("ke")
    prov = {"epsilon": bg.epsilon, "resolution": resn}
    res.reports.append(BoundReport.inequality("ke_residual", "ke", tol, sol.residual, 0.0,
                                              hard=False, provenance=prov))
    res.reports.append(BoundReport.inequality("ke_newton_steps", "ke", int(sec["max_steps"]),
                                              sol.steps, 0.0, hard=False, provenance=prov))
    pw, sup = ke_solver.check_c0_estimate(sol.u, bg.F, bg, slack=1e-8)
    pw = BoundReport(pw.name, pw.anchor, pw.lhs, pw.rhs, pw.margin, 1e-12,
                     provenance=pw.provenance, hard=False, details=pw.details)
    res.reports += [pw, sup]
    res.tables["ke_history"] = (["step", "rms_residual"], [[i, h] for i, h in enumerate(sol.history)])
    return res


def run_phi(cfg) -> SuiteResult:
    sec = cfg["phi"]
    resn = int(cfg["fiber"]["resolution"])
    f = fiber("octagon", resn)
    spec = spectrum("octagon", resn)
    d = fiber_diameter("octagon", resn)
    P = rb.resolvent_lower_bound(n=1, r=d)
    res = SuiteResult("phi")
    worst = None
    for chi in ks_wp.random_nonnegative_fields(spec, int(sec["samples"]), seed=int(sec["seed"])):
        rep = ks_wp.check_phi_bound(ks_wp.solve_phi(spec, chi), chi, spec, d, p_value=P)
        if worst is None or rep.margin < worst.margin:
            worst = rep
    worst.details["samples"] = int(sec["samples"])
    res.reports.append(worst)
    res.reports.append(ks_wp.kernel_lower_bound_check(spec, d))
    mus = ks_wp.beltrami_basis(f, qd_basis(resn))
    for i, mu in enumerate(mus):
        res.reports.append(ks_wp.phi_wp_identity(spec, mu))
    G = ks_wp.wp_gram(mus)
    res.observations["wp_gram"] = G
    rng = np.random.default_rng(int(sec["seed"]) + 1)
    count = int(sec["determinant_instances"])
    worst = None
    for n in ints(sec["determinant_dims"]):
        for _ in range(count):
            rep = ks_wp.bordered_determinant_check(ks_wp.random_bordered_metric(n, rng))
            if worst is None or rep.margin < worst.margin:
                worst = rep
    worst.details = {"relative_error": worst.details["relative_error"], "instances": count}
    res.reports.append(worst)
    return res


def run_qdiff(cfg) -> SuiteResult:
    resn = int(cfg["fiber"]["resolution"])
    f = fiber("octagon", resn)
    basis = qd_basis(resn)
    res = SuiteResult("qdiff")
    expected = ks_wp.differential_dimension(f.genus, 2)
    res.reports.append(BoundReport.identity("quadratic_differential_dimension", "riemann-roch",
                                            basis.dim, expected, 0.0, provenance={"genus": f.genus}))
    res.reports.append(BoundReport.inequality("quadratic_differential_gap", "riemann-roch",
                                              basis.gap, float(cfg["qdiff"]["min_gap"]), 0.0,
                                              hard=False, provenance={"resolution": resn}))
    defects = [ks_wp.equivariance_defect(f, q, 2) for q in basis.fields]
    res.observations["equivariance_defect"] = max(defects)
    res.tables["qdiff_singular_values"] = (["index", "sigma"],
                                           [[i, float(s)] for i, s in enumerate(basis.singular_values)])
    return res


def _cancellation(name: str, anchor: str, t: ce.CurvatureTensor, prov) -> BoundReport:
    return BoundReport.identity(name, anchor, t.relative_norm(), 0.0, 1e-8, provenance=prov,
                                details={"scale": t.scale, "hermitian_defect": t.hermitian_defect()})


def run_curvature(cfg) -> SuiteResult:
    sec = cfg["curvature"]
    seed = int(sec["seed"])
    res = SuiteResult("curvature")
    n = int(sec["synthetic_n"])
    model, A = ce.make_synthetic_model(n, int(sec["synthetic_nodes"]), 2, seed)
    prov = {"mode": "synthetic", "n": n, "seed": seed}
    psi = ce.synthetic_sections(model, 0, 1, seed=seed)
    res.reports.append(_cancellation("cancellation_direct_image_p0", "eq:curvgen",
                                     ce.curvature_direct_image(model, 1, 0, A, psi), prov))
    nu = [ce.constant_section(model, (0, 0), kind="tangent")]
    res.reports.append(_cancellation("cancellation_tangent_p0", "eq:curvgendual",
                                     ce.curvature_tangent(model, 0, A, nu), prov))

    resn = int(cfg["fiber"]["resolution"])
    f = fiber("octagon", resn)
    gmodel, mus, basis = ce.make_geometric_model(f, spectrum("octagon", resn), qd_basis(resn))
    prov = {"mode": "geometric", "resolution": resn}
    psi = ce.geometric_sections(gmodel, f, 1, 0)
    res.reports.append(_cancellation("cancellation_direct_image_p0", "eq:curvgen",
                                     ce.curvature_direct_image(gmodel, 1, 0, mus, psi), prov))
    nu = [ce.constant_section(gmodel, (0, 0), kind="tangent")]
    res.reports.append(_cancellation("cancellation_tangent_p0", "eq:curvgendual",
                                     ce.curvature_tangent(gmodel, 0, mus, nu), prov))

    # holomorphic sectional curvature of the WP metric
    tangent = [ce.ks_as_tangent(mu, 1) for mu in mus]
    D = ce.curvature_tangent(gmodel, 1, mus, tangent)
    G = ks_wp.wp_gram(mus)
    rng = np.random.default_rng(seed)
    coeffs = [np.eye(len(mus))[i] for i in range(len(mus))]
    coeffs += [rng.standard_normal(len(mus)) + 1j * rng.standard_normal(len(mus))
               for _ in range(int(sec["samples"]))]
    worst = -math.inf
    for c in coeffs:
        val = np.einsum("ijlk,i,j,l,k->", D.entries, c, np.conj(c), np.conj(c), c).real
        nrm = float(np.real(np.conj(c) @ G.T @ c))
        worst = max(worst, val / nrm ** 2)
    res.reports.append(BoundReport.inequality("wp_holomorphic_sectional_negative", "eq:curvgendual",
                                              0.0, worst, 0.0, hard=False, provenance=prov,
                                              details={"directions": len(coeffs)}))
    res.observations["wp_holomorphic_sectional_max"] = worst

    P = rb.resolvent_lower_bound(n=1, r=fiber_diameter("octagon", resn))
    for m in ints(sec["m_values"]):
        psi = ce.geometric_sections(gmodel, f, m, 1)
        R = ce.curvature_pluricanonical(gmodel, m, mus, psi)
        H = np.array([[gmodel.form_inner(a, b) for b in psi] for a in psi])
        xis = ce.random_xi((len(mus), len(psi)), int(sec["samples"]), seed + m)
        rep = ce.nakano_check(R, G, H, P, xis)
        rep.provenance.update(prov)
        res.reports.append(rep)
        if m == 1:
            # Serre-dual comparison: K^2 sections against the tangent formula
            dual = [-np.real(R.entries[i, i, i, i]) / (G[i, i].real * H[i, i].real)
                    for i in range(min(len(mus), len(psi)))]
            res.observations["serre_dual_comparison"] = {
                "tangent_formula": [float(np.real(D.entries[i, i, i, i]) / G[i, i].real ** 2)
                                    for i in range(len(mus))],
                "direct_image_negated": dual}
    return res


def run_finsler(cfg) -> SuiteResult:
    sec = cfg["finsler"]
    res = SuiteResult("finsler")
    R = float(sec["radius"])
    seed = int(sec["seed"])
    rng = np.random.default_rng(seed)
    for pts in ints(sec["points"]):
        grid, h = fh.disk_grid(R, pts)
        rho = fh.poincare_metric(grid, R, 0.9)
        ok = np.isfinite(rho)
        a, b = rng.uniform(0.2, 2.0, size=2)
        c = rng.standard_normal(2)
        other = np.where(ok, np.exp(c[0] * grid.real + c[1] * grid.imag) * (1 + np.abs(grid) ** 2), np.nan)
        s1, s2 = fh.CurveSample(grid, rho, h), fh.CurveSample(grid, other, h)
        prov = {"points": pts}
        rep = fh.convex_sum_curvature_check([s1, s2], [a, b])
        rep.provenance.update(prov)
        res.reports.append(rep)
        single = fh.convex_sum_curvature_check([s1], [a])
        res.reports.append(BoundReport.identity("convex_sum_single_summand", "eq:curvest",
                                                single.margin, 0.0, 1e-10, provenance=prov))
        for scale in (0.5, 1.0):
            rep = fh.ahlfors_schwarz_check(scale * rho, 1.0, R, grid, h)
            rep.name = f"ahlfors_schwarz_c{scale:g}"
            rep.provenance.update(prov)
            res.reports.append(rep)
        eq = fh.ahlfors_schwarz_check(rho, 1.0, R, grid, h)
        res.reports.append(BoundReport.identity("ahlfors_schwarz_equality", "pr:ahlschw",
                                                eq.margin, 0.0, 1e-10, provenance=prov))
        bad = fh.ahlfors_schwarz_check(1.5 * rho, 1.0, R, grid, h)
        res.reports.append(BoundReport.identity("ahlfors_schwarz_refuses", "pr:ahlschw",
                                                float(bad.details["conclusion_asserted"]), 0.0, 0.0,
                                                provenance=prov))
    cmodel, A = ce.make_synthetic_model(2, 120, 2, seed)
    P = cmodel.resolvent_floor()
    for p in (1, 2):
        for rep in fh.finsler_curvature_bound_check(cmodel, A[0], p, P, R,
                                                    points=int(sec["curve_points"])):
            rep.name = f"{rep.name}_p{p}"
            res.reports.append(rep)
    return res


def run_resonance(cfg) -> SuiteResult:
    seed = int(cfg["resonance"]["seed"])
    res = SuiteResult("resonance")
    lam = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0])
    spec = sc.synthetic(lam, seed=seed)
    m = 2.0
    rejected, accepted = 0, 0
    for j, l in enumerate(lam):
        x = spec.eigenvectors[:, j] + 0.1 * spec.eigenvectors[:, -1]
        try:
            sc.resolvent_apply(spec, -m, x)
            accepted += l > m
        except ResonanceError:
            rejected += l <= m
    expected_rej = int(np.sum(lam <= m))
    expected_acc = int(np.sum(lam > m))
    res.reports.append(BoundReport.identity("resonance_rejections", "claim:lambda>m",
                                            rejected, expected_rej, 0.0,
                                            provenance={"seed": seed, "m": m}))
    res.reports.append(BoundReport.identity("resonance_acceptances", "claim:lambda>m",
                                            accepted, expected_acc, 0.0,
                                            provenance={"seed": seed, "m": m}))
    return res


RUNNERS = {"resolvent": run_resolvent, "spectral": run_spectral, "fiber": run_fiber,
           "ke": run_ke, "phi": run_phi, "qdiff": run_qdiff, "curvature": run_curvature,
           "finsler": run_finsler, "resonance": run_resonance}


def run_suite(name: str, cfg) -> SuiteResult:
    if name not in RUNNERS:
        raise DomainError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    try:
        return RUNNERS[name](cfg)
    except WPGeomError as exc:
        raise WPGeomError(f"suite {name}: {exc}") from exc


def _run_from_text(args):
    name, text = args
    cfg = configparser.ConfigParser()
    cfg.read_string(text)
    return run_suite(name, cfg)


def config_text(cfg: configparser.ConfigParser) -> str:
    import io
    buf = io.StringIO()
    cfg.write(buf)
    return buf.getvalue()


def run_all(cfg, names=SUITES, parallel: int = 1) -> list[SuiteResult]:
    """Run suites in order; with ``parallel > 1`` each suite runs in its own process."""
    if parallel > 1:
        from concurrent.futures import ProcessPoolExecutor
        text = config_text(cfg)
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            return list(ex.map(_run_from_text, [(n, text) for n in names]))
    return [run_suite(n, cfg) for n in names]


def bundle(results: list[SuiteResult], cfg, timestamp: str | None = None) -> dict:
    tol = float(cfg["general"]["soft_tolerance"])
    fails = [r.name for s in results for r in s.failures(tol)]
    return {"timestamp": timestamp, "config": {s: dict(cfg[s]) for s in cfg.sections()},
            "config_hash": fingerprint(np.frombuffer(config_text(cfg).encode(), dtype=np.uint8)),
            "suites": [s.to_dict() for s in results], "failures": fails,
            "passed": not fails}
