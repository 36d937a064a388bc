"""Degree-p Weil-Petersson Finsler functions and curvature comparisons on disks.

Curvature of a conformal pseudo-metric ``G |ds|^2`` is ``K = -(Delta log G) / (4 G)``
with the flat Laplacian in the parameter ``s``; on a grid it uses the 5-point
stencil (or the 3-point second difference for samples depending on Re s
only).  The Poincaré density ``2 R^2 / (R^2 - |s|^2)^2`` satisfies
``ddbar log rho = rho`` and has ``K = -1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .curvature_engine import (FiberModel, _harmonic_norm_sq, apply_product, curvature_tangent,
                               ks_norm_sq, wedge_power)
from .reports import BoundReport, DomainError, fingerprint
from .spectral_core import harmonic_project


# -- grids -------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveSample:
    """Values of G on a uniform grid in the parameter s.

    ``grid`` is 1-D (real parameter, G independent of Im s) or 2-D complex
    with ``grid[i, j] = s0 + h (i + 1j j)``.  NaN marks points outside the
    domain.
    """

    grid: np.ndarray
    G_values: np.ndarray
    h: float
    label: str = "G"

    def __post_init__(self):
        g = np.asarray(self.grid)
        G = np.asarray(self.G_values, dtype=float)
        if g.shape != G.shape:
            raise DomainError("grid and values differ in shape")
        if g.ndim not in (1, 2) or min(g.shape) < 3:
            raise DomainError("need at least 3 grid points per direction")
        defined = np.isfinite(G)
        if np.any(G[defined] <= 0):
            raise DomainError(f"{self.label} must be positive where defined")
        object.__setattr__(self, "G_values", G)


def disk_grid(R: float, points: int, fill: float = 0.9) -> tuple[np.ndarray, float]:
    """Square grid covering |s| <= fill * R; outside points are still returned."""
    x = np.linspace(-fill * R, fill * R, points)
    h = float(x[1] - x[0])
    return x[:, None] + 1j * x[None, :], h


def poincare_metric(s, R: float, fill: float = 1.0) -> np.ndarray:
    """Poincaré density of the radius-R disk; NaN for |s| >= fill * R."""
    s = np.asarray(s)
    out = np.full(s.shape, np.nan)
    inside = np.abs(s) < fill * R
    out[inside] = 2 * R ** 2 / (R ** 2 - np.abs(s[inside]) ** 2) ** 2
    return out


def _laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """Flat Laplacian on interior points; NaN where a stencil point is undefined."""
    out = np.full(f.shape, np.nan)
    if f.ndim == 1:
        out[1:-1] = (f[2:] - 2 * f[1:-1] + f[:-2]) / h ** 2
    else:
        out[1:-1, 1:-1] = (f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2]
                           - 4 * f[1:-1, 1:-1]) / h ** 2
    return out


def _fourth_difference(f: np.ndarray, h: float) -> np.ndarray:
    """|f_xxxx + f_yyyy| estimate, used for the O(h^2) error of the stencil."""
    out = np.zeros(f.shape)

    def d4(a, axis):
        r = np.full(a.shape, np.nan)
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(2, -2)
        pieces = []
        for k in range(5):
            s2 = [slice(None)] * a.ndim
            s2[axis] = slice(k, a.shape[axis] - 4 + k)
            pieces.append(a[tuple(s2)])
        r[tuple(sl)] = (pieces[0] - 4 * pieces[1] + 6 * pieces[2] - 4 * pieces[3] + pieces[4]) / h ** 4
        return r

    acc = d4(f, 0)
    if f.ndim == 2:
        acc = acc + d4(f, 1)
    out = np.abs(acc)
    # near the rim the 5-wide stencil is unavailable; use the largest nearby value
    fin = np.isfinite(out)
    fill = float(np.max(out[fin])) if np.any(fin) else 0.0
    out[~fin] = fill
    return out


def stencil_slack(logG: np.ndarray, h: float, factor: float = 2.0) -> np.ndarray:
    """Bound on |Delta_h log G - Delta log G| from fourth differences, times ``factor``."""
    return factor * h ** 2 / 12.0 * _fourth_difference(logG, h) + 1e-12


def discrete_curvature(samples: CurveSample) -> np.ndarray:
    """K = -(Delta_h log G) / (4 G); NaN on the rim and outside the domain.

    For 1-D samples Delta_h is the second difference in Re s.
    """
    G = samples.G_values
    return -_laplacian(np.log(G), samples.h) / (4.0 * G)


# -- convex sums -------------------------------------------------------------------

def convex_sum_curvature_check(samples: list, weights=None, slack: float | None = None) -> BoundReport:
    """K of sum a_j G_j against sum (a_j G_j / G)^2 K_{a_j G_j} at every interior point.

    The discrete inequality follows from concavity of log applied to each
    stencil difference, so the slack only absorbs rounding.
    """
    if not samples:
        raise DomainError("need at least one summand")
    h = samples[0].h
    for s in samples:
        if s.G_values.shape != samples[0].G_values.shape or not np.isclose(s.h, h):
            raise DomainError("summands must share one grid")
    a = np.ones(len(samples)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(a <= 0):
        raise DomainError("weights must be positive")
    parts = [CurveSample(s.grid, w * s.G_values, h, s.label) for w, s in zip(a, samples)]
    total = CurveSample(samples[0].grid, sum(p.G_values for p in parts), h, "sum")
    K = discrete_curvature(total)
    rhs = sum((p.G_values / total.G_values) ** 2 * discrete_curvature(p) for p in parts)
    margin = rhs - K
    fin = np.isfinite(margin)
    if not np.any(fin):
        raise DomainError("no interior grid point")
    scale = float(np.max(np.abs(K[fin])))
    slack = 1e-10 * max(1.0, scale) if slack is None else slack
    i = int(np.argmin(np.where(fin, margin, np.inf)))
    return BoundReport("convex_sum_curvature", "eq:curvest", float(rhs.flat[i]), float(K.flat[i]),
                       float(margin.flat[i]), slack, hard=False,
                       provenance={"summands": len(parts), "h": h,
                                   "values": fingerprint(*[p.G_values for p in parts])},
                       details={"points": int(fin.sum()), "max_margin": float(np.max(margin[fin]))})


# -- Ahlfors-Schwarz -----------------------------------------------------------------

def ahlfors_schwarz_check(gamma: np.ndarray, A: float, R: float, grid: np.ndarray, h: float,
                          slack: float | None = None, fill: float = 0.9) -> BoundReport:
    """Check ddbar log gamma >= A gamma on the grid, then gamma <= rho / A.

    The conclusion is asserted only when the hypothesis holds at every
    interior point within its stencil slack.  Only points with
    ``|s| < fill * R`` take part.  Otherwise the report carries
    ``details["conclusion_asserted"] = False`` and fails.
    """
    if not A > 0:
        raise DomainError("curvature constant must be positive")
    gamma = np.asarray(gamma, dtype=float)
    rho = poincare_metric(grid, R, fill)
    inside = np.isfinite(rho) & np.isfinite(gamma)
    g = np.where(inside, gamma, np.nan)
    logg = np.log(g)
    ddb = _laplacian(logg, h) / 4.0
    interior = np.isfinite(ddb)
    hyp_margin = ddb - A * g
    hyp_slack = stencil_slack(np.where(inside, logg, 0.0), h) / 4.0 if slack is None \
        else np.full(g.shape, slack)
    hyp_ok = np.all(hyp_margin[interior] >= -hyp_slack[interior])
    i = int(np.argmin(np.where(interior, hyp_margin + hyp_slack, np.inf)))
    details = {"hypothesis_margin": float(hyp_margin.flat[i]),
               "hypothesis_slack": float(hyp_slack.flat[i]),
               "hypothesis_satisfied": bool(hyp_ok), "points": int(interior.sum())}
    prov = {"gamma": fingerprint(np.nan_to_num(g)), "A": A, "R": R, "h": h}
    if not hyp_ok:
        details["conclusion_asserted"] = False
        details["status"] = "hypothesis not satisfied"
        return BoundReport("ahlfors_schwarz", "pr:ahlschw", float(ddb.flat[i]),
                           float(A * g.flat[i]), float(hyp_margin.flat[i]),
                           float(hyp_slack.flat[i]), provenance=prov, hard=False, details=details)
    concl = rho / A - g
    j = int(np.argmin(np.where(inside, concl, np.inf)))
    details["conclusion_asserted"] = True
    cslack = 1e-10 * max(1.0, float(np.nanmax(rho[inside])) / A) if slack is None else slack
    return BoundReport("ahlfors_schwarz", "pr:ahlschw", float(rho.flat[j] / A), float(g.flat[j]),
                       float(concl.flat[j]), cslack, provenance=prov, hard=False, details=details)


# -- degree-p WP functions -------------------------------------------------------------

def harmonic_wedge_power(model: FiberModel, A, p: int):
    """H(A ^ ... ^ A) in the Lambda^p T slot, or None when p > n."""
    W = wedge_power(A, p, model.n)
    if W is None:
        return None
    S = model.slot(("tangent", p, p), W.ncomp)
    h = harmonic_project(S, W.flat())
    return type(W)(h.reshape(W.coefficients.shape), W.degree, W.twist, W.kind), S


def wp_degree_p(model: FiberModel, A, p: int) -> float:
    """||H(A^p)||^(1/p); zero when p exceeds the fiber dimension."""
    if p < 1 or int(p) != p:
        raise DomainError("degree must be a positive integer")
    res = harmonic_wedge_power(model, A, p)
    if res is None:
        return 0.0
    H, S = res
    nrm2 = float(np.real(np.sum(S.volume_weights * np.abs(H.flat()) ** 2)))
    return nrm2 ** (0.5 / p)


def finsler_curvature_bound_check(model: FiberModel, A, p: int, P: float, R: float = 1.0,
                                  points: int = 21, fill: float = 0.9) -> list[BoundReport]:
    """Curvature of G_p along a curve A_s = lambda(s) A against the degree-p bound.

    The scaling ``lambda(s)`` is chosen so that ``G_p`` has constant curvature
    ``K0 = R(A, A*, A^p, A^p*) / (p ||A||_p^(2p+2))`` on the disk of radius
    ``R``; ``G_p`` is then evaluated point by point through :func:`wp_degree_p`
    and its grid curvature compared with

        (1/p) (-P ||A||_1^2 / ||A||_p^2 + ||H(A ^ H(A^p))||^2 / ||A||_p^(2p+2)).

    Also reported: subharmonicity of log G_p and the ratio ||A||_(p+1)/||A||_p.
    """
    n = model.n
    res = harmonic_wedge_power(model, A, p)
    if res is None:
        raise DomainError(f"A^p vanishes identically for p={p} > n={n}")
    nu, _ = res
    Np = wp_degree_p(model, A, p)
    if Np <= 1e-14:
        raise DomainError("||A||_p vanishes; the point is excluded")
    N1sq = ks_norm_sq(model, A)
    tensor = curvature_tangent(model, p, [A], [nu])
    Rval = float(np.real(tensor.entries[0, 0, 0, 0]))
    K0 = Rval / (p * Np ** (2 * p + 2))
    second = 0.0
    if p < n:
        second = _harmonic_norm_sq(model, apply_product("wedge", A, nu, n))
    bound = (-P * N1sq / Np ** 2 + second / Np ** (2 * p + 2)) / p
    prov = {"p": p, "model": model.label, "K0": K0}
    if not K0 < 0:
        rep = BoundReport.inequality("finsler_curvature_bound", "eq:curvgp", bound, K0, 0.0,
                                     provenance=prov, hard=False,
                                     details={"status": "tensor value non-negative; no model curve"})
        return [rep]
    grid, h = disk_grid(R, points, fill)
    target = poincare_metric(grid, R, fill) / abs(K0)
    G = np.full(grid.shape, np.nan)
    coef = getattr(A, "coefficients", A)
    for idx in zip(*np.nonzero(np.isfinite(target))):
        lam = math.sqrt(target[idx]) / Np
        G[idx] = wp_degree_p(model, lam * np.asarray(coef), p) ** 2
    sample = CurveSample(grid, G, h, f"G_{p}")
    K = discrete_curvature(sample)
    fin = np.isfinite(K)
    logG = np.log(np.where(np.isfinite(G), G, 1.0))
    slack = stencil_slack(logG, h) / (4.0 * np.where(np.isfinite(G), G, 1.0))
    margin = bound - K
    i = int(np.argmin(np.where(fin, margin + slack, np.inf)))
    ratio = wp_degree_p(model, A, p + 1) / Np if p + 1 <= n else 0.0
    rep = BoundReport("finsler_curvature_bound", "eq:curvgp", bound, float(K.flat[i]),
                      float(margin.flat[i]), float(slack.flat[i]), provenance=prov, hard=False,
                      details={"K0": K0, "tensor_value": Rval, "ratio_next": ratio,
                               "points": int(fin.sum())})
    lap = _laplacian(np.log(G), h)
    lap_slack = stencil_slack(logG, h)
    k = int(np.argmin(np.where(fin, lap + lap_slack, np.inf)))
    sub = BoundReport.inequality("log_G_subharmonic", "pr:nonisotr", float(lap.flat[k]), 0.0,
                                 float(lap_slack.flat[k]), provenance=prov, hard=False)
    return [rep, sub]


# -- plots -------------------------------------------------------------------------------

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def svg_line_plot(x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
                  width: int = 640, height: int = 400) -> str:
    """Self-contained SVG with one polyline per series."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()] or [np.zeros(1)])
    y0, y1 = float(allv.min()), float(allv.max())
    if y1 - y0 < 1e-300:
        y0, y1 = y0 - 1.0, y1 + 1.0
    x0, x1 = float(x.min()), float(x.max())
    if x1 - x0 < 1e-300:
        x1 = x0 + 1.0
    ml, mr, mt, mb = 70, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
           f'<text x="16" y="{height / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 16 {height / 2})">{escape(ylabel)}</text>']
    for t in np.linspace(0, 1, 5):
        xv, yv = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        out.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle" '
                   f'font-size="10">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
                   f'font-size="10">{yv:.3g}</text>')
    for c, (name, v) in enumerate(ys.items()):
        ok = np.isfinite(v)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], v[ok]))
        col = _COLOURS[c % len(_COLOURS)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * c}" font-size="11" fill="{col}">'
                   f'{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
