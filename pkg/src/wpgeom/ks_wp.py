"""Kodaira-Spencer forms, the positivity function and Weil-Petersson products.

Geometric mode works on the genus-2 fiber at n = 1: a KS form is the
Beltrami coefficient ``a`` of ``a d/dz (x) dzbar`` and its pointwise norm is
``|a|^2``.  Synthetic mode stores a block ``A[node, alpha, beta]`` for
``A^alpha_{beta-bar}`` with the identity metric, so lowering an index is the
identity and the symmetric-lowered condition reads ``A[., a, b] = A[., b, a]``.

Holomorphic k-differentials ``q dz^k`` are stored by their values at each
glued vertex in the chart of its representative.  The local value at a
vertex copy ``i`` is ``q_rep * gamma_i'(z_i)^k`` where ``gamma_i`` is the
Möbius map to the representative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .fiber_geometry import DiscreteFiber, mobius_apply, mobius_inverse, poincare_density
from .reports import BoundReport, DomainError, WPGeomError, fingerprint
from .resolvent_bounds import resolvent_lower_bound
from .spectral_core import SpectralDecomposition, kernel_matrix, resolvent_apply


# -- data types --------------------------------------------------------------

@dataclass(frozen=True)
class KSForm:
    """Kodaira-Spencer coefficients; shape (N, n, n) with n = 1 in geometric mode."""

    coefficients: np.ndarray
    weights: np.ndarray = field(repr=False)
    domain: str = ""

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim == 1:
            c = c[:, None, None]
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise DomainError(f"KS coefficients must have shape (N, n, n), got {c.shape}")
        if c.shape[0] != np.shape(self.weights)[0]:
            raise DomainError("coefficients and weights disagree on the node count")
        if not np.all(np.isfinite(c)):
            raise DomainError("KS coefficients must be finite")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if not self.domain:
            object.__setattr__(self, "domain", fingerprint(self.weights))

    @property
    def n(self) -> int:
        return self.coefficients.shape[1]

    @property
    def pointwise_norm(self) -> np.ndarray:
        return np.sum(np.abs(self.coefficients) ** 2, axis=(1, 2))

    def symmetry_defect(self) -> float:
        c = self.coefficients
        return float(np.max(np.abs(c - np.swapaxes(c, 1, 2)), initial=0.0))

    def scaled(self, alpha: complex) -> "KSForm":
        return KSForm(alpha * self.coefficients, self.weights, self.domain)

    def __add__(self, other: "KSForm") -> "KSForm":
        _same_domain(self, other)
        return KSForm(self.coefficients + other.coefficients, self.weights, self.domain)


def _same_domain(a: KSForm, b: KSForm) -> None:
    if a.domain != b.domain or a.coefficients.shape != b.coefficients.shape:
        raise DomainError("KS forms live on different fibers")


def combine(forms, coeffs) -> KSForm:
    out = sum((c * f.coefficients for c, f in zip(coeffs, forms)), np.zeros_like(forms[0].coefficients))
    return KSForm(out, forms[0].weights, forms[0].domain)


@dataclass(frozen=True)
class BorderedMetric:
    """Metric on the total space near a fiber: base entry, mixed row and fiber block."""

    g_ss: float
    g_sb: np.ndarray
    g_ab: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.g_ab, dtype=complex))
        v = np.atleast_1d(np.asarray(self.g_sb, dtype=complex))
        if g.shape != (v.size, v.size):
            raise DomainError("fiber block and mixed row disagree in size")
        if np.max(np.abs(g - g.conj().T)) > 1e-12 * max(1.0, np.abs(g).max()):
            raise DomainError("fiber block is not Hermitian")
        object.__setattr__(self, "g_ab", g)
        object.__setattr__(self, "g_sb", v)
        object.__setattr__(self, "g_ss", float(np.real(self.g_ss)))

    @property
    def n(self) -> int:
        return self.g_sb.size

    def full(self) -> np.ndarray:
        n = self.n
        M = np.empty((n + 1, n + 1), dtype=complex)
        M[0, 0] = self.g_ss
        M[0, 1:] = self.g_sb
        M[1:, 0] = self.g_sb.conj()
        M[1:, 1:] = self.g_ab
        return M


def random_bordered_metric(n: int, rng: np.random.Generator) -> BorderedMetric:
    """Random positive-definite total-space metric split as a bordered matrix."""
    X = rng.standard_normal((n + 1, n + 1)) + 1j * rng.standard_normal((n + 1, n + 1))
    M = X @ X.conj().T + 0.1 * np.eye(n + 1)
    return BorderedMetric(M[0, 0].real, M[0, 1:], M[1:, 1:])


# -- the positivity function ---------------------------------------------------

def solve_phi(spec: SpectralDecomposition, chi, tol: float = 1e-12) -> np.ndarray:
    """Solve (Box + 1) phi = chi for a non-negative source."""
    chi = np.asarray(chi, dtype=float)
    if chi.shape != (spec.dim,):
        raise DomainError(f"source must have {spec.dim} nodal values")
    scale = max(1.0, float(np.max(np.abs(chi), initial=0.0)))
    if np.min(chi, initial=0.0) < -tol * scale:
        raise DomainError(f"source is negative (min {chi.min():.3e})")
    phi = np.real(resolvent_apply(spec, 1.0, chi))
    if np.min(phi, initial=0.0) < -1e-8 * scale:
        raise WPGeomError(f"solution lost positivity (min {phi.min():.3e})")
    return phi


def check_phi_bound(phi, chi, spec: SpectralDecomposition, diam: float, n: int = 1,
                    slack: float = 1e-6, p_value: float | None = None) -> BoundReport:
    """min phi >= P_n(d) * int chi."""
    P = resolvent_lower_bound(n=n, r=diam) if p_value is None else p_value
    integral = float(np.real(spec.integrate(chi)))
    rhs = P * integral
    lhs = float(np.min(phi))
    return BoundReport.inequality("phi_lower_bound", "eq:est", lhs, rhs, slack,
                                  provenance={"chi": fingerprint(chi), "diameter": diam, "n": n},
                                  hard=False, details={"P_n": P, "integral": integral})


def kernel_lower_bound_check(spec: SpectralDecomposition, diam: float, n: int = 1) -> BoundReport:
    """Every entry of the discrete (Box + 1)^-1 kernel against P_n(d)."""
    P = resolvent_lower_bound(n=n, r=diam)
    kmin = float(np.min(np.real(kernel_matrix(spec, 1.0))))
    return BoundReport.inequality("resolvent_kernel_floor", "eq:hker2", kmin, P, 0.0,
                                  provenance={"spectrum": fingerprint(spec.eigenvalues)},
                                  hard=False, details={"P_n": P})


# -- Weil-Petersson ------------------------------------------------------------

def wp_inner_product(A_i: KSForm, A_j: KSForm) -> complex:
    _same_domain(A_i, A_j)
    dot = np.sum(A_i.coefficients * np.conj(A_j.coefficients), axis=(1, 2))
    return complex(np.sum(A_i.weights * dot))


def wp_gram(forms) -> np.ndarray:
    k = len(forms)
    G = np.empty((k, k), dtype=complex)
    for a in range(k):
        for b in range(a, k):
            G[a, b] = wp_inner_product(forms[a], forms[b])
            G[b, a] = np.conj(G[a, b])
    return G


def bordered_determinant_check(bm: BorderedMetric, tol: float = 1e-12) -> BoundReport:
    """det of the bordered metric against phi * det(fiber block).

    ``phi`` is the Schur complement g_ss - g_sb g^{-1} g_bs, and the
    horizontal lift coefficients ``a^alpha = -g^{beta alpha} g_{s beta}``
    are returned in ``details``.
    """
    g = bm.g_ab
    try:
        ginv_row = np.linalg.solve(g.T, bm.g_sb)
    except np.linalg.LinAlgError as exc:
        raise DomainError("fiber block is singular") from exc
    det_block = np.linalg.det(g)
    if abs(det_block) < 1e-300:
        raise DomainError("fiber block is singular")
    phi = bm.g_ss - float(np.real(ginv_row @ bm.g_sb.conj()))
    lift = -ginv_row
    det_full = np.linalg.det(bm.full())
    scale = max(abs(det_full), abs(phi * det_block), 1e-300)
    rel = abs(det_full - phi * det_block) / scale
    return BoundReport("bordered_determinant", "le:varphi", abs(det_full), abs(phi * det_block),
                       -rel, tol, provenance={"n": bm.n},
                       details={"phi": phi, "g_ss": bm.g_ss, "lift": lift, "det_block": det_block,
                                "relative_error": rel})


# -- holomorphic differentials ----------------------------------------------------

def _mob(T, z):
    return (T[..., 0, 0] * z + T[..., 0, 1]) / (T[..., 1, 0] * z + T[..., 1, 1])


def _dmob(T, z):
    a, b, c, d = T[..., 0, 0], T[..., 0, 1], T[..., 1, 0], T[..., 1, 1]
    return (a * d - b * c) / (c * z + d) ** 2


@dataclass(frozen=True)
class _DbarStencil:
    rows: np.ndarray
    cols: np.ndarray
    coef: np.ndarray
    base_factor: np.ndarray
    centroid: np.ndarray
    chart_area: np.ndarray


def _dbar_stencil(fiber: DiscreteFiber) -> _DbarStencil:
    """Per-triangle d-bar at the centroid from a weighted quadratic fit.

    The fit uses every vertex of every triangle touching the triangle,
    carried into the triangle's chart, and reproduces all quadratic
    polynomials in (z, zbar), so smooth holomorphic data give an O(h^2)
    residual.
    """
    tl, g = fiber.triangles_local, fiber.local_to_glued
    T, z = fiber.local_transition, fiber.local_coords
    n = fiber.n_vertices
    star = [[] for _ in range(n)]
    for t, tri in enumerate(tl):
        for a in tri:
            star[g[a]].append((t, a))
    Tinv = np.array([mobius_inverse(M) for M in T])
    groups = []
    width = 0
    for t, tri in enumerate(tl):
        seen = {}
        for a in tri:
            for t2, a2 in star[g[a]]:
                M = Tinv[a] @ T[a2]
                for x in tl[t2]:
                    if g[x] not in seen:
                        seen[g[x]] = (x, M)
        ids = np.fromiter(seen, dtype=int)
        xs = np.array([seen[i][0] for i in ids])
        Ms = np.array([seen[i][1] for i in ids])
        groups.append((ids, xs, Ms))
        width = max(width, len(ids))
    ntri = len(tl)
    W = np.zeros((ntri, width), dtype=complex)
    fac = np.ones((ntri, width), dtype=complex)
    mask = np.zeros((ntri, width), dtype=bool)
    cols = np.zeros((ntri, width), dtype=int)
    for t, (ids, xs, Ms) in enumerate(groups):
        k = len(ids)
        W[t, :k] = _mob(Ms, z[xs])
        # local value at x carried into this chart, per unit weight
        fac[t, :k] = _dmob(T[xs], z[xs]) / _dmob(Ms, z[xs])
        mask[t, :k] = True
        cols[t, :k] = ids
    tc = fiber.triangle_coords
    zc = tc.mean(axis=1)
    h = np.abs(tc - zc[:, None]).max(axis=1)
    w = np.where(mask, (W - zc[:, None]) / h[:, None], 0.0)
    wb = np.conj(w)
    B = np.stack([np.ones_like(w), w, w * w, wb, w * wb, wb * wb], axis=2)
    wt = np.where(mask, 1.0 / (1.0 + np.abs(w) ** 2), 0.0)
    P = np.linalg.pinv(B * wt[:, :, None]) * wt[:, None, :]
    coef = P[:, 3, :] / h[:, None]
    e1, e2 = tc[:, 1] - tc[:, 0], tc[:, 2] - tc[:, 0]
    area = 0.5 * np.abs((np.conj(e1) * e2).imag)
    r = np.repeat(np.arange(ntri), width)
    return _DbarStencil(r[mask.ravel()], cols[mask], coef[mask], fac[mask], zc, area)


def dbar_operator(fiber: DiscreteFiber, k: int, stencil: _DbarStencil | None = None
                  ) -> sp.csr_matrix:
    """Sparse map from representative values of q dz^k to chart d-bar q per triangle."""
    st = _dbar_stencil(fiber) if stencil is None else stencil
    vals = st.coef * st.base_factor ** k
    return sp.csr_matrix((vals, (st.rows, st.cols)), shape=(len(st.chart_area), fiber.n_vertices))


def differential_dimension(genus: int, k: int) -> int:
    """dim H^0(K^k) on a closed surface of genus >= 2, from Riemann-Roch."""
    if genus < 2:
        raise DomainError("the count is stated for genus >= 2")
    if k < 1:
        raise DomainError("weight must be positive")
    return genus if k == 1 else (2 * k - 1) * (genus - 1)


@dataclass(frozen=True)
class DifferentialBasis:
    weight: int
    fields: np.ndarray            # (dim, N) representative values
    singular_values: np.ndarray   # ascending, leading part of the spectrum
    residuals: np.ndarray         # weighted d-bar residual per basis field

    @property
    def dim(self) -> int:
        return self.fields.shape[0]

    @property
    def gap(self) -> float:
        d = self.dim
        return float(self.singular_values[d] / self.singular_values[d - 1])


def holomorphic_differential_basis(fiber: DiscreteFiber, k: int = 2, dim: int | None = None,
                                   n_values: int | None = None,
                                   stencil: _DbarStencil | None = None) -> DifferentialBasis:
    """Least-squares kernel of the discrete d-bar on k-differentials.

    Energy ``sum_T |dbar q|^2 rho^-k |T|`` against mass ``sum_v |q|^2 rho^-k w_v``
    (``rho`` the hyperbolic density, ``w_v`` the vertex area), i.e. the
    pointwise norms of dbar q and q.  Fields are orthonormal in the mass.
    """
    if not fiber.hyperbolic:
        raise DomainError("holomorphic differentials are computed on the octagon fiber")
    dim = differential_dimension(fiber.genus, k) if dim is None else dim
    n_values = max(dim + 5, 2 * dim) if n_values is None else n_values
    st = _dbar_stencil(fiber) if stencil is None else stencil
    D = dbar_operator(fiber, k, st)
    rw = np.sqrt(st.chart_area * poincare_density(st.centroid) ** (-k))
    cw = np.sqrt(fiber.area_weights * fiber.metric_density ** (-k))
    M = sp.diags(rw) @ D @ sp.diags(1.0 / cw)
    n = fiber.n_vertices
    if n <= 2500:
        try:
            _, s, Vh = np.linalg.svd(M.toarray(), full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise WPGeomError(f"SVD failed: {exc}") from exc
        s, V = s[::-1], Vh[::-1].conj().T
    else:
        G = (M.conj().T @ M).tocsc()
        lam, V = spla.eigsh(G, k=n_values, sigma=-1e-8, which="LM")
        order = np.argsort(lam)
        s, V = np.sqrt(np.maximum(lam[order], 0.0)), V[:, order]
    fields = (V[:, :dim] / cw[:, None]).T
    resid = np.linalg.norm(M @ V[:, :dim], axis=0)
    return DifferentialBasis(k, fields, s[:n_values], resid)


def quadratic_differential_basis(fiber: DiscreteFiber, **kw) -> DifferentialBasis:
    return holomorphic_differential_basis(fiber, 2, **kw)


def local_values(fiber: DiscreteFiber, q, k: int) -> np.ndarray:
    """Values of a k-differential at every local vertex, in the domain chart."""
    q = np.asarray(q)
    d = _dmob(fiber.local_transition, fiber.local_coords)
    return q[fiber.local_to_glued] * d ** k


def equivariance_defect(fiber: DiscreteFiber, q, k: int) -> float:
    """max |q(z) - q(g z) g'(z)^k| over side vertices z and side pairings g.

    Relative to max |q|; independent of the gluing data used to build q.
    """
    loc = local_values(fiber, q, k)
    z = fiber.local_coords
    tree = cKDTree(np.column_stack([z.real, z.imag]))
    worst = 0.0
    for _, M in fiber.side_pairings:
        for Mx in (M, mobius_inverse(M)):
            gz = mobius_apply(Mx, z)
            dist, idx = tree.query(np.column_stack([gz.real, gz.imag]))
            on = dist < 1e-9
            lhs = loc[on]
            rhs = loc[idx[on]] * _dmob(np.broadcast_to(Mx, (on.sum(), 2, 2)), z[on]) ** k
            if lhs.size:
                worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst / max(float(np.max(np.abs(loc))), 1e-300)


def harmonic_beltrami(fiber: DiscreteFiber, q) -> KSForm:
    """Beltrami coefficient conj(q) / rho of a quadratic differential."""
    a = np.conj(np.asarray(q)) / fiber.metric_density
    return KSForm(a, fiber.area_weights, domain=_fiber_domain(fiber))


def _fiber_domain(fiber: DiscreteFiber) -> str:
    return fingerprint(fiber.area_weights)


def frame_coefficients(fiber: DiscreteFiber, q, k: int) -> np.ndarray:
    """Coefficient of q dz^k in the unit frame, q * rho^(-k/2)."""
    return np.asarray(q) * fiber.metric_density ** (-k / 2.0)


def beltrami_basis(fiber: DiscreteFiber, basis: DifferentialBasis | None = None) -> list[KSForm]:
    basis = quadratic_differential_basis(fiber) if basis is None else basis
    return [harmonic_beltrami(fiber, q) for q in basis.fields]


def phi_from_ks(spec: SpectralDecomposition, A: KSForm) -> np.ndarray:
    return solve_phi(spec, A.pointwise_norm)


def phi_wp_identity(spec: SpectralDecomposition, A: KSForm, tol: float = 1e-8) -> BoundReport:
    """int phi dV equals the WP norm of A, because (Box + 1)^-1 preserves integrals."""
    phi = phi_from_ks(spec, A)
    lhs = float(np.real(spec.integrate(phi)))
    rhs = wp_inner_product(A, A).real
    return BoundReport.identity("phi_integral_is_wp_norm", "eq:wpfib", lhs, rhs,
                                tol * max(1.0, abs(rhs)), provenance={"A": fingerprint(A.coefficients)})


def random_nonnegative_fields(spec: SpectralDecomposition, count: int, seed: int = 0,
                              modes: int = 12) -> list[np.ndarray]:
    """Smooth non-negative test sources: squares of random low-mode combinations."""
    rng = np.random.default_rng(seed)
    V = np.real(spec.eigenvectors[:, :modes])
    out = []
    for _ in range(count):
        c = rng.standard_normal(V.shape[1]) / (1.0 + np.arange(V.shape[1]))
        f = V @ c
        out.append(f * f)
    return out


def bump_source(fiber: DiscreteFiber, centre: int, width: float = 0.3) -> np.ndarray:
    """Narrow non-negative bump around a vertex, in geodesic edge distance."""
    from scipy.sparse import csgraph
    edges, lengths = fiber.edges()
    n = fiber.n_vertices
    G = sp.csr_matrix((lengths, (edges[:, 0], edges[:, 1])), shape=(n, n))
    d = csgraph.dijkstra(G, directed=False, indices=centre)
    return np.where(d < width, np.cos(0.5 * math.pi * d / width) ** 2, 0.0)
