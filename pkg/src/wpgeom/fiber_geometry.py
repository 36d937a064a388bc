"""Discretized model fibers: a flat calibration torus and a genus-2 hyperbolic surface.

The hyperbolic surface is the regular octagon with interior angles pi/4 in the
Poincaré disk, sides glued by the pattern a b a^-1 b^-1 c d c^-1 d^-1.  Each of
the eight central sectors is subdivided uniformly in the Klein model, where
the sides are straight, and mapped to the Poincaré chart; interior vertices
are then relaxed in the chart.  Paired sides carry matching vertices because
the pairing maps restrict, on each side, to the Euclidean reflection of the
regular octagon through the side's midpoint.

Stiffness uses chart cotangent weights (the 2-D Dirichlet energy is conformally
invariant); lumped mass uses the intrinsic area of each triangle, so only the
mass sees the metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401
from scipy.sparse import csgraph

from .reports import DomainError, WPGeomError
from .spectral_core import SpectralDecomposition, from_operators

OCTAGON_PAIRS = ((0, 2), (1, 3), (4, 6), (5, 7))
# Euclidean radius of the corners of the regular octagon with angles pi/4
OCTAGON_CORNER_RADIUS = 2.0 ** -0.25


class MeshError(WPGeomError):
    pass


# -- Möbius helpers ----------------------------------------------------------

def mobius_apply(M, z):
    return (M[0, 0] * z + M[0, 1]) / (M[1, 0] * z + M[1, 1])


def mobius_derivative(M, z):
    return (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]) / (M[1, 0] * z + M[1, 1]) ** 2


def mobius_inverse(M):
    return np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]], dtype=complex)


def _disk_translation(p):
    """z -> (z + p) / (1 + conj(p) z), sending 0 to p."""
    return np.array([[1.0, p], [np.conj(p), 1.0]], dtype=complex)


def _rotation(theta):
    return np.array([[np.exp(1j * theta / 2), 0], [0, np.exp(-1j * theta / 2)]], dtype=complex)


def half_turn(p):
    """Hyperbolic rotation by pi about the point p of the disk."""
    T = _disk_translation(p)
    return T @ np.diag([1j, -1j]) @ mobius_inverse(T)


def poincare_distance(z, w):
    z, w = np.asarray(z), np.asarray(w)
    q = np.abs(z - w) / np.abs(1.0 - np.conj(z) * w)
    return 2.0 * np.arctanh(np.minimum(q, 1.0 - 1e-16))


def poincare_density(z):
    return 4.0 / (1.0 - np.abs(z) ** 2) ** 2


def klein_to_poincare(k):
    return k / (1.0 + np.sqrt(1.0 - np.abs(k) ** 2))


# -- fibers ------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteFiber:
    """Triangulated closed surface built from a fundamental domain.

    Local vertices live in the chart (unglued); ``local_to_glued`` identifies
    them and ``local_transition[i]`` is the Möbius map taking local vertex
    ``i`` to the chart position of its glued representative.
    """

    kind: str
    resolution: int
    local_coords: np.ndarray
    local_to_glued: np.ndarray
    local_transition: np.ndarray
    triangles_local: np.ndarray
    side_pairings: list = field(default_factory=list)
    genus: int = 1

    @property
    def n_vertices(self) -> int:
        return int(self.local_to_glued.max()) + 1

    @property
    def triangles(self) -> np.ndarray:
        return self.local_to_glued[self.triangles_local]

    @property
    def triangle_coords(self) -> np.ndarray:
        return self.local_coords[self.triangles_local]

    @property
    def vertices(self) -> np.ndarray:
        """Chart position of each glued vertex's representative."""
        out = np.empty(self.n_vertices, dtype=complex)
        out[self.local_to_glued[::-1]] = self.local_coords[::-1]
        return out

    @property
    def representative(self) -> np.ndarray:
        rep = np.empty(self.n_vertices, dtype=int)
        rep[self.local_to_glued[::-1]] = np.arange(len(self.local_to_glued))[::-1]
        return rep

    @property
    def hyperbolic(self) -> bool:
        return self.kind == "octagon"

    @property
    def metric_density(self) -> np.ndarray:
        if self.hyperbolic:
            return poincare_density(self.vertices)
        return np.ones(self.n_vertices)

    def chart_distance(self, z, w):
        if self.hyperbolic:
            return poincare_distance(z, w)
        return np.abs(np.asarray(z) - np.asarray(w))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique glued edges and their geodesic lengths."""
        tri, tc = self.triangles, self.triangle_coords
        a = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        za = np.concatenate([tc[:, [0, 1]], tc[:, [1, 2]], tc[:, [2, 0]]])
        lengths = self.chart_distance(za[:, 0], za[:, 1])
        key = np.sort(a, axis=1)
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        out = np.full(len(uniq), np.inf)
        np.minimum.at(out, inv.reshape(-1), lengths)
        return uniq, out

    @property
    def edge_lengths(self) -> np.ndarray:
        return self.edges()[1]

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()[0]) + len(self.triangles_local)

    def triangle_areas(self) -> np.ndarray:
        tc = self.triangle_coords
        if not self.hyperbolic:
            e1, e2 = tc[:, 1] - tc[:, 0], tc[:, 2] - tc[:, 0]
            return 0.5 * np.abs((np.conj(e1) * e2).imag)
        a = poincare_distance(tc[:, 1], tc[:, 2])
        b = poincare_distance(tc[:, 2], tc[:, 0])
        c = poincare_distance(tc[:, 0], tc[:, 1])
        angles = [_hyp_angle(a, b, c), _hyp_angle(b, c, a), _hyp_angle(c, a, b)]
        return np.pi - sum(angles)

    @property
    def area_weights(self) -> np.ndarray:
        w = np.zeros(self.n_vertices)
        np.add.at(w, self.triangles.reshape(-1), np.repeat(self.triangle_areas() / 3.0, 3))
        return w

    @property
    def area(self) -> float:
        return float(self.triangle_areas().sum())


def _hyp_angle(opp, s1, s2):
    """Angle opposite side ``opp`` in a hyperbolic triangle, by the law of cosines."""
    num = np.cosh(s1) * np.cosh(s2) - np.cosh(opp)
    cos = num / (np.sinh(s1) * np.sinh(s2))
    return np.arccos(np.clip(cos, -1.0, 1.0))


def build_torus_fiber(side: float = 1.0, resolution: int = 32) -> DiscreteFiber:
    """Flat square torus on a uniform grid, each cell split along its diagonal."""
    if resolution < 8:
        raise DomainError("torus resolution must be at least 8")
    N, h = int(resolution), side / resolution
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
    local_idx = i * (N + 1) + j
    coords = (i * h + 1j * j * h).reshape(-1)
    glued = ((i % N) * N + (j % N)).reshape(-1)
    trans = np.zeros((len(coords), 2, 2), dtype=complex)
    shift = -(i // N) * side - 1j * (j // N) * side
    trans[:, 0, 0] = 1.0
    trans[:, 1, 1] = 1.0
    trans[:, 0, 1] = shift.reshape(-1)
    a = local_idx[:-1, :-1].reshape(-1)
    b = local_idx[1:, :-1].reshape(-1)
    c = local_idx[1:, 1:].reshape(-1)
    d = local_idx[:-1, 1:].reshape(-1)
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    pairings = [("x", np.array([[1, side], [0, 1]], dtype=complex)),
                ("y", np.array([[1, 1j * side], [0, 1]], dtype=complex))]
    return DiscreteFiber("torus", N, coords, glued, trans, tris, pairings, genus=1)


def octagon_pairing(i: int, j: int) -> np.ndarray:
    """Möbius map sending side i onto side j, reversing its direction."""
    step = np.pi / 4
    rot = _rotation((j - i) * step)
    r_in = math.acosh(1.0 / math.tan(math.pi / 8))
    mid = math.tanh(r_in / 2) * np.exp(1j * (j + 0.5) * step)
    return half_turn(mid) @ rot


def build_hyperbolic_octagon_fiber(resolution: int = 4) -> DiscreteFiber:
    """Genus-2 surface from the regular octagon, 2^resolution segments per sector edge."""
    if resolution < 3:
        raise DomainError("octagon resolution must be at least 3")
    N = 2 ** int(resolution)
    r_klein = 2 * OCTAGON_CORNER_RADIUS / (1 + OCTAGON_CORNER_RADIUS ** 2)
    corners = r_klein * np.exp(1j * np.pi / 4 * np.arange(9))
    pts, index = [], {}
    side_vertices = [[None] * (N + 1) for _ in range(8)]
    tris = []

    def vid(k):
        key = (round(k.real * 1e9), round(k.imag * 1e9))
        if key not in index:
            index[key] = len(pts)
            pts.append(k)
        return index[key]

    for s in range(8):
        grid = {}
        for a in range(N + 1):
            for b in range(N + 1 - a):
                k = (a / N) * corners[s] + (b / N) * corners[s + 1]
                # corners are snapped so the 8 copies stay distinct chart points
                grid[a, b] = vid(k)
                if a + b == N:
                    side_vertices[s][b] = grid[a, b]
        for a in range(N):
            for b in range(N - a):
                tris.append((grid[a, b], grid[a + 1, b], grid[a, b + 1]))
                if a + b < N - 1:
                    tris.append((grid[a + 1, b], grid[a + 1, b + 1], grid[a, b + 1]))
    coords = klein_to_poincare(np.array(pts))
    n_local = len(coords)
    tris = np.array(tris)
    coords = _relax_interior(coords, tris, side_vertices, N)
    # orient counter-clockwise in the chart
    tc = coords[tris]
    e1, e2 = tc[:, 1] - tc[:, 0], tc[:, 2] - tc[:, 0]
    cross = (np.conj(e1) * e2).imag
    if np.any(np.abs(cross) < 1e-14):
        bad = int(np.argmin(np.abs(cross)))
        raise MeshError(f"degenerate triangle {bad}: {tris[bad].tolist()}")
    flip = cross < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    # identification graph: local vertex u on side i -> v on side j with z_v = g(z_u)
    adj = [[] for _ in range(n_local)]
    pairings = []
    for i, j in OCTAGON_PAIRS:
        g = octagon_pairing(i, j)
        pairings.append(((i, j), g))
        ginv = mobius_inverse(g)
        for t in range(N + 1):
            u, v = side_vertices[i][t], side_vertices[j][N - t]
            if abs(mobius_apply(g, coords[u]) - coords[v]) > 1e-10:
                raise MeshError(f"side pairing {i}->{j} is not an isometry at node {t}")
            adj[u].append((v, g))
            adj[v].append((u, ginv))
    glued = -np.ones(n_local, dtype=int)
    trans = np.zeros((n_local, 2, 2), dtype=complex)
    count = 0
    for root in range(n_local):
        if glued[root] >= 0:
            continue
        glued[root] = count
        trans[root] = np.eye(2)
        stack = [root]
        while stack:
            u = stack.pop()
            for v, g in adj[u]:
                if glued[v] < 0:
                    glued[v] = count
                    # z_v = g(z_u) and trans[u](z_u) = z_root
                    trans[v] = trans[u] @ mobius_inverse(g)
                    stack.append(v)
        count += 1
    return DiscreteFiber("octagon", int(resolution), coords, glued, trans, tris, pairings, genus=2)


def _relax_interior(coords, tris, side_vertices, N):
    """Move interior vertices to the uniform-weight harmonic average of their
    neighbours in the chart, with side vertices and the centre held fixed.

    The Klein subdivision alone leaves strongly anisotropic triangles near
    the corners (the Klein model is not conformal); relaxing in the conformal
    chart removes almost all obtuse angle pairs.
    """
    z = coords.copy()
    fixed = np.zeros(len(z), dtype=bool)
    for s in range(8):
        fixed[side_vertices[s]] = True
    fixed[np.argmin(np.abs(z))] = True
    i = np.concatenate([tris[:, 0], tris[:, 1], tris[:, 2]])
    j = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0]])
    A = sp.csr_matrix((np.ones(2 * len(i)), (np.r_[i, j], np.r_[j, i])), shape=(len(z),) * 2)
    A.data[:] = 1.0
    L = sp.diags(np.asarray(A.sum(axis=1)).ravel()) - A
    free = ~fixed
    rhs = -(L[free][:, fixed] @ z[fixed])
    z[free] = sp.linalg.spsolve(L[free][:, free].tocsc(), rhs)
    return z


# -- operators ---------------------------------------------------------------

def local_stiffness(fiber: DiscreteFiber) -> np.ndarray:
    """Per-triangle 3x3 cotangent stiffness blocks in the chart."""
    tc = fiber.triangle_coords
    e = np.stack([tc[:, 2] - tc[:, 1], tc[:, 0] - tc[:, 2], tc[:, 1] - tc[:, 0]], axis=1)
    area = 0.5 * np.abs((np.conj(e[:, 2]) * (-e[:, 1])).imag)
    dots = (e[:, :, None] * np.conj(e[:, None, :])).real
    return dots / (4.0 * area[:, None, None])


def stiffness_matrix(fiber: DiscreteFiber) -> sp.csr_matrix:
    K = local_stiffness(fiber)
    tri = fiber.triangles
    rows = np.repeat(tri, 3, axis=1).reshape(-1)
    cols = np.tile(tri, (1, 3)).reshape(-1)
    n = fiber.n_vertices
    return sp.csr_matrix((K.reshape(-1), (rows, cols)), shape=(n, n))


def assemble_laplacian(fiber: DiscreteFiber, k: int | None = None,
                       normalization: str = "real") -> SpectralDecomposition:
    """Generalized eigendecomposition of (stiffness, lumped area weights).

    ``normalization="real"`` gives the Laplace-Beltrami operator -div grad;
    ``"complex"`` gives the d-bar Laplacian on functions, which on a Kähler
    curve is half of it.
    """
    if normalization not in ("real", "complex"):
        raise DomainError(f"unknown normalization {normalization!r}")
    K = stiffness_matrix(fiber)
    if normalization == "complex":
        K = 0.5 * K
    return from_operators(K, fiber.area_weights, k=k, label=f"{fiber.kind}-{normalization}")


def complex_laplacian(fiber: DiscreteFiber, k: int | None = None) -> SpectralDecomposition:
    return assemble_laplacian(fiber, k=k, normalization="complex")


def diameter(fiber: DiscreteFiber, chunk: int = 512) -> float:
    """Largest shortest-path distance along mesh edges.

    The graph metric over-estimates the Riemannian distance, so this is an
    upper approximation of the diameter.
    """
    edges, lengths = fiber.edges()
    n = fiber.n_vertices
    G = sp.csr_matrix((lengths, (edges[:, 0], edges[:, 1])), shape=(n, n))
    ncomp, _ = csgraph.connected_components(G, directed=False)
    if ncomp != 1:
        raise MeshError(f"fiber graph has {ncomp} components")
    best = 0.0
    for start in range(0, n, chunk):
        d = csgraph.dijkstra(G, directed=False, indices=np.arange(start, min(n, start + chunk)))
        best = max(best, float(d.max()))
    return best


# -- mesh I/O ----------------------------------------------------------------

def write_mesh(fiber: DiscreteFiber, path) -> None:
    """OFF-like text: header, local vertices, triangles, then the gluing data.

    ``LOCAL n`` lines: ``x y glued a_re a_im b_re b_im c_re c_im d_re d_im``
    (chart position, glued index, Möbius map to the representative);
    ``TRIANGLES f`` lines: three local indices; ``PAIRINGS p`` lines: a label and
    the four complex Möbius coefficients.
    """
    lines = [f"WPMESH {fiber.kind} {fiber.resolution} {fiber.genus}",
             f"LOCAL {len(fiber.local_coords)}"]
    for z, g, T in zip(fiber.local_coords, fiber.local_to_glued, fiber.local_transition):
        coeffs = " ".join(f"{c.real:.17g} {c.imag:.17g}" for c in T.reshape(-1))
        lines.append(f"{z.real:.17g} {z.imag:.17g} {g} {coeffs}")
    lines.append(f"TRIANGLES {len(fiber.triangles_local)}")
    lines.extend(" ".join(map(str, t)) for t in fiber.triangles_local)
    lines.append(f"PAIRINGS {len(fiber.side_pairings)}")
    for label, M in fiber.side_pairings:
        lab = label if isinstance(label, str) else f"{label[0]}-{label[1]}"
        coeffs = " ".join(f"{c.real:.17g} {c.imag:.17g}" for c in np.asarray(M).reshape(-1))
        lines.append(f"{lab} {coeffs}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> DiscreteFiber:
    with open(path) as fh:
        tokens = [ln.split() for ln in fh if ln.strip()]
    head = tokens[0]
    if head[0] != "WPMESH":
        raise MeshError(f"{path}: not a mesh file")
    kind, res, genus = head[1], int(head[2]), int(head[3])
    nl = int(tokens[1][1])
    body = np.array([[float(x) for x in t] for t in tokens[2:2 + nl]])
    coords = body[:, 0] + 1j * body[:, 1]
    glued = body[:, 2].astype(int)
    tr = body[:, 3::2] + 1j * body[:, 4::2]
    trans = tr.reshape(nl, 2, 2)
    pos = 2 + nl
    nt = int(tokens[pos][1])
    tris = np.array([[int(x) for x in t] for t in tokens[pos + 1:pos + 1 + nt]])
    pos += 1 + nt
    npair = int(tokens[pos][1])
    pairings = []
    for t in tokens[pos + 1:pos + 1 + npair]:
        vals = np.array([float(x) for x in t[1:]])
        M = (vals[0::2] + 1j * vals[1::2]).reshape(2, 2)
        pairings.append((t[0], M))
    return DiscreteFiber(kind, res, coords, glued, trans, tris, pairings, genus=genus)


def build_fiber(kind: str, resolution: int, side: float = 1.0) -> DiscreteFiber:
    if kind == "torus":
        return build_torus_fiber(side, resolution)
    if kind == "octagon":
        return build_hyperbolic_octagon_fiber(resolution)
    raise DomainError(f"unknown fiber kind {kind!r}")
