"""Command-line entry point.

Reports are written as sorted JSON; tables as CSV with a header row.  The
``WPGEOM_CACHE`` environment variable names a directory for cached spectra.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import suites
from .reports import WPGeomError, dumps


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _emit(obj, out: Path | None) -> None:
    text = dumps(obj)
    if out is None:
        click.echo(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")


def _print_reports(reports) -> None:
    for r in reports:
        click.echo(r.summary(), err=True)


def _exit_for(results, cfg) -> None:
    tol = float(cfg["general"]["soft_tolerance"])
    if any(s.failures(tol) for s in results):
        sys.exit(1)


def _single(name: str, cfg, out, csv_dir=None):
    try:
        res = suites.run_suite(name, cfg)
    except WPGeomError as exc:
        raise click.ClickException(str(exc)) from exc
    _print_reports(res.reports)
    if csv_dir is not None:
        for tname, (header, rows) in res.tables.items():
            _write_csv(Path(csv_dir) / f"{tname}.csv", header, rows)
    _emit(res.to_dict(), out)
    _exit_for([res], cfg)


def _cfg(config, **sections):
    over = {}
    for sec, kv in sections.items():
        kv = {k: v for k, v in kv.items() if v is not None}
        if kv:
            over[sec] = kv
    try:
        return suites.load_config(config, over)
    except WPGeomError as exc:
        raise click.ClickException(str(exc)) from exc


config_opt = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                          help="INI file with per-suite sections.")
out_opt = click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
                       help="Write the JSON report here instead of stdout.")


class _Group(click.Group):
    """Library errors become a one-line message and exit status 1."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except WPGeomError as exc:
            raise click.ClickException(str(exc)) from exc


@click.group(cls=_Group)
@click.version_option(__version__)
def main():
    """Numerical checks for fiberwise Kähler-Einstein geometry."""


@main.command("pn-table")
@click.option("--n", "n", type=int, required=True)
@click.option("--r-min", type=float, default=0.1)
@click.option("--r-max", type=float, default=5.0)
@click.option("--steps", type=int, default=50)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
def pn_table(n, r_min, r_max, steps, csv_path):
    """Tabulate the resolvent lower bound and its Bessel form."""
    from .resolvent_bounds import pn_table as table

    tab = table(n, r_min, r_max, steps)
    header = ["r", "P_n", "bessel_estimate", "margin"]
    if csv_path is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(float(x)) for x in row] for row in tab])
    else:
        _write_csv(csv_path, header, tab.tolist())


@main.group()
def fiber():
    """Fiber meshes."""


@fiber.command("build")
@click.option("--kind", type=click.Choice(["octagon", "torus"]), default="octagon")
@click.option("--resolution", type=int, default=4)
@click.option("--mesh", type=click.Path(dir_okay=False, path_type=Path), required=True)
def fiber_build(kind, resolution, mesh):
    """Build a fiber and write it in the text mesh format."""
    from .fiber_geometry import write_mesh

    f = suites.fiber(kind, resolution)
    mesh.parent.mkdir(parents=True, exist_ok=True)
    write_mesh(f, mesh)
    _emit({"kind": kind, "resolution": resolution, "vertices": f.n_vertices,
           "triangles": len(f.triangles_local), "euler_characteristic": f.euler_characteristic(),
           "area": float(f.area_weights.sum())}, None)


@main.command()
@click.option("--kind", type=click.Choice(["octagon", "torus"]), default="octagon")
@click.option("--resolution", type=int, default=4)
@click.option("--normalization", type=click.Choice(["complex", "real"]), default="complex")
@click.option("--modes", type=int, default=20)
@click.option("--npz", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Also save the full decomposition.")
def spectrum(kind, resolution, normalization, modes, npz):
    """Lowest Laplacian eigenvalues as CSV."""
    from .spectral_core import save_spectrum

    spec = suites.spectrum(kind, resolution, normalization)
    if npz is not None:
        save_spectrum(spec, npz)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["index", "eigenvalue"])
    for i, v in enumerate(spec.eigenvalues[:modes]):
        w.writerow([i, repr(float(v))])


@main.group()
def ke():
    """Kähler-Einstein potential."""


@ke.command("solve")
@config_opt
@out_opt
@click.option("--epsilon", type=float, default=None)
@click.option("--resolution", type=int, default=None)
@click.option("--csv-dir", type=click.Path(file_okay=False), default=None)
def ke_solve(config, out, epsilon, resolution, csv_dir):
    """Solve on the perturbed octagon and check the C0 estimate."""
    cfg = _cfg(config, ke={"epsilon": epsilon}, fiber={"resolution": resolution})
    _single("ke", cfg, out, csv_dir)


@main.group()
def phi():
    """The positivity function (Box + 1) phi = chi."""


@phi.command("solve")
@click.option("--resolution", type=int, default=4)
@click.option("--seed", type=int, required=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
def phi_solve(resolution, seed, csv_path):
    """Solve for one random non-negative source; write vertex, chi, phi."""
    from .ks_wp import random_nonnegative_fields, solve_phi

    spec = suites.spectrum("octagon", resolution)
    chi = random_nonnegative_fields(spec, 1, seed=seed)[0]
    ph = solve_phi(spec, chi)
    _write_csv(csv_path, ["vertex", "chi", "phi"],
               [[i, float(c), float(p)] for i, (c, p) in enumerate(zip(chi, ph))])


@phi.command("check")
@config_opt
@out_opt
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--resolution", type=int, default=None)
def phi_check(config, out, samples, seed, resolution):
    """Lower bound for phi, kernel floor, WP identities, bordered determinants."""
    cfg = _cfg(config, phi={"samples": samples, "seed": seed}, fiber={"resolution": resolution})
    _single("phi", cfg, out)


@main.group()
def wp():
    """Weil-Petersson metric."""


@wp.command("gram")
@click.option("--resolution", type=int, default=4)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
def wp_gram_cmd(resolution, csv_path):
    """Gram matrix of the harmonic Beltrami basis (rows i, j, re, im)."""
    from .ks_wp import beltrami_basis, wp_gram

    G = wp_gram(beltrami_basis(suites.fiber("octagon", resolution), suites.qd_basis(resolution)))
    rows = [[i, j, float(G[i, j].real), float(G[i, j].imag)]
            for i in range(G.shape[0]) for j in range(G.shape[1])]
    if csv_path is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["i", "j", "re", "im"])
        w.writerows(rows)
    else:
        _write_csv(csv_path, ["i", "j", "re", "im"], rows)


@main.group()
def qdiff():
    """Holomorphic differentials."""


@qdiff.command("basis")
@click.option("--resolution", type=int, default=4)
@click.option("--weight", type=int, default=2)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
def qdiff_basis(resolution, weight, csv_path):
    """Basis of holomorphic k-differentials; the CSV holds vertex values."""
    from .ks_wp import equivariance_defect, holomorphic_differential_basis

    f = suites.fiber("octagon", resolution)
    b = suites.qd_basis(resolution) if weight == 2 else holomorphic_differential_basis(f, weight)
    _emit({"weight": weight, "dim": b.dim, "gap": b.gap,
           "singular_values": b.singular_values[:b.dim + 3],
           "equivariance_defect": max(equivariance_defect(f, q, weight) for q in b.fields)}, None)
    if csv_path is not None:
        header = ["vertex"] + [f"{p}{c}" for c in range(b.dim) for p in ("re", "im")]
        rows = [[v] + [float(x) for c in range(b.dim) for x in (b.fields[c, v].real, b.fields[c, v].imag)]
                for v in range(f.n_vertices)]
        _write_csv(csv_path, header, rows)


@main.command()
@config_opt
@out_opt
@click.option("--seed", type=int, default=None)
@click.option("--resolution", type=int, default=None)
def curvature(config, out, seed, resolution):
    """Cancellations, WP negativity and the Nakano bound."""
    cfg = _cfg(config, curvature={"seed": seed}, fiber={"resolution": resolution})
    _single("curvature", cfg, out)


@main.group()
def finsler():
    """Finsler curvature and Ahlfors-Schwarz comparisons."""


@finsler.command("check")
@config_opt
@out_opt
@click.option("--seed", type=int, default=None)
@click.option("--svg", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Plot curvature along the real diameter.")
def finsler_check(config, out, seed, svg):
    """Convex sums, Ahlfors-Schwarz and the degree-p curvature bound."""
    cfg = _cfg(config, finsler={"seed": seed})
    if svg is not None:
        from . import finsler_hyperbolicity as fh

        R = float(cfg["finsler"]["radius"])
        grid, h = fh.disk_grid(R, 41)
        rho = fh.poincare_metric(grid, R, 0.9)
        K = fh.discrete_curvature(fh.CurveSample(grid, rho, h))
        mid = grid.shape[1] // 2
        svg.parent.mkdir(parents=True, exist_ok=True)
        svg.write_text(fh.svg_line_plot(grid[:, mid].real, {"grid curvature": K[:, mid],
                                                             "exact": -np.ones(grid.shape[0])},
                                        "Curvature of the Poincaré density", "Re s", "K"))
    _single("finsler", cfg, out)


@main.group()
def verify():
    """Run verification suites."""


@verify.command("all")
@config_opt
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=Path("wpgeom-report"))
@click.option("--resolution", type=int, default=None)
@click.option("--suite", "only", multiple=True, type=click.Choice(suites.SUITES),
              help="Restrict to these suites (repeatable).")
@click.option("--parallel", type=int, default=1, show_default=True,
              help="Worker processes; suites share only the read-only spectrum cache.")
@click.option("--no-timestamp", is_flag=True, help="Omit the timestamp field.")
def verify_all(config, out_dir, resolution, only, parallel, no_timestamp):
    """Every suite; writes report.json and CSV tables into OUT_DIR."""
    cfg = _cfg(config, fiber={"resolution": resolution})
    names = only or suites.SUITES
    try:
        results = suites.run_all(cfg, names, parallel)
    except WPGeomError as exc:
        raise click.ClickException(str(exc)) from exc
    for s in results:
        _print_reports(s.reports)
        for tname, (header, rows) in s.tables.items():
            _write_csv(out_dir / f"{tname}.csv", header, rows)
    ts = None if no_timestamp else _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    b = suites.bundle(results, cfg, ts)
    rows = [[s.name, r.name, r.anchor, r.lhs, r.rhs, r.margin, r.slack_used, int(r.hard), int(r.passed)]
            for s in results for r in s.reports]
    _write_csv(out_dir / "reports.csv",
               ["suite", "name", "anchor", "lhs", "rhs", "margin", "slack", "hard", "passed"], rows)
    _emit(b, out_dir / "report.json")
    click.echo(json.dumps({"passed": b["passed"], "failures": b["failures"]}))
    if not b["passed"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
