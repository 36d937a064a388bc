"""Functional calculus for a discrete self-adjoint non-negative Laplacian.

A :class:`SpectralDecomposition` holds eigenpairs of the generalized problem
``L v = lam W v`` where ``L`` is a Hermitian positive semidefinite stiffness
operator and ``W`` a diagonal (lumped) volume weighting.  Eigenvectors are
orthonormal in the weighted inner product ``<x, y> = sum_i w_i x_i conj(y_i)``.

Fields are plain numpy arrays of length ``dim`` (complex or real).  Bundle
slots with several components per node are flattened node-major.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from .reports import BoundReport, ConvergenceError, DomainError, ResonanceError, WPGeomError, fingerprint

DENSE_LIMIT = 5000
ZERO_REL = 1e-9
RESONANCE_TOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    volume_weights: np.ndarray
    complete: bool = True
    stiffness: sp.spmatrix | None = field(default=None, repr=False, compare=False)
    label: str = "function"

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenvectors)
        w = np.asarray(self.volume_weights, dtype=float)
        if vecs.ndim != 2 or vecs.shape[0] != w.shape[0] or vecs.shape[1] != lam.shape[0]:
            raise DomainError("eigenvector block does not match weights/eigenvalues")
        if np.any(w <= 0):
            raise DomainError("volume weights must be positive")
        order = np.argsort(lam, kind="stable")
        lam, vecs = lam[order], vecs[:, order]
        scale = max(float(np.max(np.abs(lam))), 1.0) if lam.size else 1.0
        if lam.size and lam[0] < -1e-6 * scale:
            raise DomainError(f"negative eigenvalue {lam[0]:.3e} in a non-negative operator")
        lam = np.where(np.abs(lam) < ZERO_REL * scale, 0.0, np.maximum(lam, 0.0))
        for name, val in (("eigenvalues", lam), ("eigenvectors", vecs), ("volume_weights", w)):
            val = np.array(val)
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.volume_weights.shape[0]

    @property
    def rank(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def total_volume(self) -> float:
        return float(self.volume_weights.sum())

    @property
    def zero_modes(self) -> np.ndarray:
        return np.flatnonzero(self.eigenvalues == 0.0)

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def first_nonzero(self) -> float:
        nz = self.eigenvalues[self.eigenvalues > 0]
        return float(nz[0]) if nz.size else math.inf

    def inner(self, x, y) -> complex:
        return complex(np.sum(self.volume_weights * _flat(x) * np.conj(_flat(y))))

    def norm(self, x) -> float:
        return math.sqrt(max(self.inner(x, x).real, 0.0))

    def integrate(self, x) -> complex:
        return complex(np.sum(self.volume_weights * _flat(x)))

    def coefficients(self, x) -> np.ndarray:
        return self.eigenvectors.conj().T @ (self.volume_weights * _flat(x))

    def synthesize(self, coeffs, like=None) -> np.ndarray:
        out = self.eigenvectors @ coeffs
        if like is not None:
            out = out.reshape(np.shape(like))
            if not np.iscomplexobj(like) and not np.iscomplexobj(self.eigenvectors):
                out = out.real
        return out

    def gram(self) -> np.ndarray:
        v = self.eigenvectors
        return v.conj().T @ (self.volume_weights[:, None] * v)

    def apply_operator(self, x) -> np.ndarray:
        """L x expressed as a nodal field, W^-1 L x."""
        if self.stiffness is not None:
            return (self.stiffness @ _flat(x) / self.volume_weights).reshape(np.shape(x))
        return self._spectral_map(x, lambda lam: lam)

    def _spectral_map(self, x, fn) -> np.ndarray:
        c = self.coefficients(x)
        return self.synthesize(fn(self.eigenvalues) * c, like=x)


def _flat(x) -> np.ndarray:
    return np.asarray(x).reshape(-1)


def from_operators(stiffness, weights, k: int | None = None, label: str = "function",
                   check_residual: bool = True) -> SpectralDecomposition:
    """Eigendecomposition of ``(stiffness, diag(weights))``.

    Dense for ``dim <= DENSE_LIMIT`` when no rank is requested, otherwise a
    shift-invert Lanczos for the lowest ``k`` modes.
    """
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    L = sp.csr_matrix(stiffness)
    if k is None and n > DENSE_LIMIT:
        k = min(200, n - 2)
    if k is None or k >= n - 1:
        s = 1.0 / np.sqrt(w)
        S = L.toarray() * s[:, None] * s[None, :]
        S = 0.5 * (S + S.conj().T)
        lam, U = sla.eigh(S)
        vecs = U * s[:, None]
        complete = True
    else:
        M = sp.diags(w)
        sigma = -1e-3 * float(np.max(np.abs(L.diagonal()) / w))
        # extra modes so that a degenerate cluster cut by k is not missed
        kk = min(n - 2, k + max(8, k // 4))
        try:
            lam, vecs = spla.eigsh(L, k=kk, M=M, sigma=sigma, which="LM", tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos failed to converge: {exc}") from exc
        order = np.argsort(lam)[:k]
        lam, vecs = lam[order], vecs[:, order]
        complete = False
    spec = SpectralDecomposition(lam, vecs, w, complete=complete, stiffness=L, label=label)
    if check_residual:
        res = residual_norms(spec, modes=min(50, spec.rank))
        if np.any(res > 1e-6):
            raise ConvergenceError(f"eigen-residuals too large: max {res.max():.2e}",
                                   history=res.tolist())
    return spec


def residual_norms(spec: SpectralDecomposition, modes: int = 50) -> np.ndarray:
    """||L v - lam W v|| / ||W v|| for the lowest modes."""
    if spec.stiffness is None:
        raise WPGeomError("decomposition carries no stiffness operator")
    v = spec.eigenvectors[:, :modes]
    Wv = spec.volume_weights[:, None] * v
    r = spec.stiffness @ v - Wv * spec.eigenvalues[None, :modes]
    return np.linalg.norm(r, axis=0) / np.linalg.norm(Wv, axis=0)


def synthetic(eigenvalues, weights=None, seed: int = 0, complex_: bool = False,
              label: str = "synthetic") -> SpectralDecomposition:
    """Decomposition with prescribed eigenvalues and random weighted-orthonormal modes."""
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    n = lam.shape[0]
    rng = np.random.default_rng(seed)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    # first mode is the constant field
    a[:, 0] = np.sqrt(w)
    q, _ = np.linalg.qr(a)
    q[:, 0] *= np.sign(q[0, 0].real)
    vecs = q / np.sqrt(w)[:, None]
    L = sp.csr_matrix((vecs * w[:, None]) @ np.diag(lam) @ (vecs * w[:, None]).conj().T)
    return SpectralDecomposition(lam, vecs, w, stiffness=L, label=label)


def resolvent_apply(spec: SpectralDecomposition, shift: float, x,
                    resonance_tol: float = RESONANCE_TOL, ref_norm: float = 0.0) -> np.ndarray:
    """sum_nu <x, psi_nu> / (lam_nu + shift) psi_nu.

    For ``shift < 0`` every eigenvalue ``lam <= -shift`` (the zero modes
    included) must carry component mass below
    ``resonance_tol * max(||x||, ref_norm)``; the caller strips the harmonic
    part first and passes the norm of the unstripped field as ``ref_norm``.
    """
    x = np.asarray(x)
    if shift > 0 and not spec.complete:
        if spec.stiffness is None:
            raise WPGeomError("partial spectrum without stiffness cannot solve")
        A = (spec.stiffness + shift * sp.diags(spec.volume_weights)).tocsc()
        y = spla.spsolve(A, spec.volume_weights * _flat(x))
        return y.reshape(x.shape)
    if not spec.complete:
        raise WPGeomError("non-positive shifts need the full spectrum")
    c = spec.coefficients(x)
    denom = spec.eigenvalues + shift
    if shift <= 0:
        bad = spec.eigenvalues <= -shift
        if np.any(bad):
            xnorm = max(spec.norm(x), ref_norm)
            mass = np.abs(c[bad])
            worst = int(np.argmax(mass))
            if mass[worst] > resonance_tol * max(xnorm, 1e-300):
                raise ResonanceError(float(spec.eigenvalues[bad][worst]), float(mass[worst]), shift)
        c = np.where(bad, 0.0, c)
        denom = np.where(bad, 1.0, denom)
    return spec.synthesize(c / denom, like=x)


def harmonic_project(spec: SpectralDecomposition, x) -> np.ndarray:
    """Weighted orthogonal projection onto the kernel of the Laplacian."""
    x = np.asarray(x)
    z = spec.zero_modes
    v = spec.eigenvectors[:, z]
    c = v.conj().T @ (spec.volume_weights * _flat(x))
    out = (v @ c).reshape(x.shape)
    if not np.iscomplexobj(x) and not np.iscomplexobj(v):
        out = out.real
    return out


def harmonic_split_resolvent(spec: SpectralDecomposition, m: float, x) -> tuple[np.ndarray, np.ndarray]:
    """(H x, (L - m)^-1 (x - H x)), the admissible form of (L - m)^-1."""
    h = harmonic_project(spec, x)
    return h, resolvent_apply(spec, -m, np.asarray(x) - h, ref_norm=spec.norm(x))


def heat_apply(spec: SpectralDecomposition, t: float, x) -> np.ndarray:
    if not t > 0:
        raise DomainError(f"heat time must be positive, got {t}")
    if not spec.complete:
        raise WPGeomError("heat semigroup needs the full spectrum")
    return spec._spectral_map(x, lambda lam: np.exp(-t * lam))


def resolvent_kernel(spec: SpectralDecomposition, z: int, w: int, shift: float = 1.0,
                     rank: int | None = None) -> float:
    """sum_nu psi_nu(z) conj(psi_nu(w)) / (lam_nu + shift), optionally truncated."""
    r = spec.rank if rank is None else rank
    v = spec.eigenvectors[:, :r]
    val = np.sum(v[z] * np.conj(v[w]) / (spec.eigenvalues[:r] + shift))
    return float(val.real) if not np.iscomplexobj(v) else complex(val)


def kernel_matrix(spec: SpectralDecomposition, shift: float = 1.0) -> np.ndarray:
    v = spec.eigenvectors
    return (v / (spec.eigenvalues + shift)) @ v.conj().T


def truncation_tail_bound(spec: SpectralDecomposition, rank: int, shift: float = 1.0) -> float:
    """Bound on |P(z,w) - P_rank(z,w)| using |psi_nu(z)|^2 <= 1 / min(w)."""
    return float(np.sum(1.0 / (spec.eigenvalues[rank:] + shift)) / spec.volume_weights.min())


def heat_kernel_values(spec: SpectralDecomposition, t: float, pairs) -> np.ndarray:
    pairs = np.asarray(pairs)
    v = spec.eigenvectors
    prod = v[pairs[:, 0]] * np.conj(v[pairs[:, 1]])
    return (prod @ np.exp(-t * spec.eigenvalues)).real


def verify_resolvent_heat_identity(spec: SpectralDecomposition, pairs, tol: float = 1e-8
                                   ) -> BoundReport:
    """Compare P(z,w) with the quadrature of int_0^inf e^-t P(t,z,w) dt.

    The integral is taken in u = log t so that fast modes are resolved; the
    neglected head [0, e^u0] contributes at most e^u0 * sum |psi(z) psi(w)|.
    """
    if not spec.complete:
        raise WPGeomError("identity check needs the full spectrum")
    pairs = np.atleast_2d(np.asarray(pairs))
    v = spec.eigenvectors
    prod = (v[pairs[:, 0]] * np.conj(v[pairs[:, 1]])).real
    lhs = prod @ (1.0 / (1.0 + spec.eigenvalues))
    rate = 1.0 + spec.eigenvalues
    head_scale = float(np.abs(prod).sum(axis=1).max())
    u0 = math.log(1e-3 * tol / max(head_scale, 1e-300))
    u1 = math.log(60.0 - math.log(tol))

    def f(u):
        t = math.exp(u)
        return t * (prod @ np.exp(-t * rate))

    rhs, err = integrate.quad_vec(f, u0, u1, epsabs=1e-3 * tol, epsrel=1e-13, limit=4000)
    head = math.exp(u0) * head_scale
    tail = math.exp(-math.exp(u1)) * head_scale
    qerr = float(err) + head + tail
    if qerr > tol:
        from .reports import QuadratureError
        raise QuadratureError("heat-kernel quadrature missed tolerance", qerr)
    errs = np.abs(lhs - rhs)
    worst = float(errs.max())
    return BoundReport("resolvent_heat_identity", "le:heat", float(lhs[np.argmax(errs)]),
                       float(rhs[np.argmax(errs)]), -worst, tol,
                       provenance={"spectrum": fingerprint(spec.eigenvalues), "pairs": len(pairs)},
                       details={"max_error": worst, "quadrature_error": qerr})


def bundle_slot(base: SpectralDecomposition, ncomp: int, harmonic=None, shift: float = 0.0,
                label: str = "slot") -> SpectralDecomposition:
    """Stand-in Laplacian on a bundle slot with ``ncomp`` components per node.

    The operator is the componentwise function Laplacian compressed to the
    weighted orthogonal complement of ``harmonic`` (a list of fields of shape
    ``(N, ncomp)``; default: per-component constants), plus ``shift`` there.
    The harmonic fields span the kernel exactly.
    """
    if base.stiffness is None:
        raise WPGeomError("base decomposition carries no stiffness operator")
    N = base.dim
    D = N * ncomp
    w = np.repeat(base.volume_weights, ncomp)
    if harmonic is None:
        harmonic = []
        for c in range(ncomp):
            f = np.zeros((N, ncomp))
            f[:, c] = 1.0
            harmonic.append(f)
    s = 1.0 / np.sqrt(w)
    cols = [np.asarray(h).reshape(-1) / s for h in harmonic]
    Q = _orthonormal_columns(np.column_stack(cols) if cols else np.zeros((D, 0)))
    L = sp.kron(base.stiffness, sp.identity(ncomp), format="csr")
    S = L.toarray() * s[:, None] * s[None, :]
    if Q.shape[1]:
        SQ = S @ Q
        QSQ = Q.conj().T @ SQ
        S = S - Q @ SQ.conj().T - SQ @ Q.conj().T + Q @ QSQ @ Q.conj().T
        S = S + shift * (np.eye(D) - Q @ Q.conj().T) - Q @ Q.conj().T
    else:
        S = S + shift * np.eye(D)
    S = 0.5 * (S + S.conj().T)
    lam, U = sla.eigh(S)
    harm = lam < -0.5
    U = np.column_stack([Q, U[:, ~harm]])
    lam = np.concatenate([np.zeros(Q.shape[1]), lam[~harm]])
    vecs = U * s[:, None]
    return SpectralDecomposition(lam, vecs, w, label=label)


def _orthonormal_columns(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    if a.shape[1] == 0:
        return a
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    keep = sv > tol * sv.max()
    return u[:, keep]


def save_spectrum(spec: SpectralDecomposition, path) -> None:
    """Columnar .npz: eigenvalues, eigenvectors (one column per mode), weights."""
    np.savez_compressed(path, eigenvalues=spec.eigenvalues, eigenvectors=spec.eigenvectors,
                        volume_weights=spec.volume_weights, complete=spec.complete,
                        label=spec.label)


def load_spectrum(path) -> SpectralDecomposition:
    with np.load(path, allow_pickle=False) as d:
        return SpectralDecomposition(d["eigenvalues"], d["eigenvectors"], d["volume_weights"],
                                     complete=bool(d["complete"]), label=str(d["label"]))
