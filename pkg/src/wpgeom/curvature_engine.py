"""Curvature of direct images built from resolvents and cup/wedge products.

Forms are stored per node as blocks over two groups of strictly increasing
multi-indices: ``coefficients[node, I, J]`` with ``|I| = a`` and ``|J| = b``.
A ``(p, n-p)``-form with values in a canonical power has ``(a, b) = (p, n-p)``;
a ``Lambda^p T``-valued ``(0, p)``-form has ``(a, b) = (p, p)``.  Metrics are
the identity in synthetic mode and unit frames in geometric mode, so the
pointwise dot product is the plain sum over components.

A KS form ``A[node, alpha, beta]`` acts on such blocks in four ways, each
moving one index in each group:

    lower     A  cup psi   remove alpha from I, insert beta into J
    raise     A* cup psi   insert alpha into I, remove beta from J
    wedge     A  ^ nu      insert alpha into I, insert beta into J
    contract  A* ^ nu      remove alpha from I, remove beta from J

where ``A*`` is the conjugate tensor with coefficient ``conj(A[beta, alpha])``.

Each form degree gets its own :class:`SpectralDecomposition` ("slot").  The
slot operators are stand-ins: the function Laplacian acting componentwise,
compressed to the complement of a declared harmonic span.  For raising and
wedge slots the complement is shifted by ``m + lambda_1`` so that every
non-harmonic eigenvalue exceeds ``m``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .reports import BoundReport, DomainError, WPGeomError, fingerprint
from .spectral_core import (SpectralDecomposition, bundle_slot, from_operators, harmonic_project,
                            harmonic_split_resolvent, resolvent_apply)


class DegreeError(DomainError):
    """A product was requested outside its degree range."""


class NonHarmonicError(WPGeomError):
    def __init__(self, defects):
        self.defects = [float(d) for d in defects]
        super().__init__("forms are not harmonic; relative defects "
                         + ", ".join(f"{d:.2e}" for d in self.defects))


# -- exterior algebra ------------------------------------------------------------

@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple:
    return tuple(itertools.combinations(range(n), k))


def _insert(S: tuple, x: int):
    if x in S:
        return None, 0
    sign = -1 if sum(s < x for s in S) % 2 else 1
    return tuple(sorted(S + (x,))), sign


def _remove(S: tuple, x: int):
    if x not in S:
        return None, 0
    sign = -1 if sum(s < x for s in S) % 2 else 1
    return tuple(s for s in S if s != x), sign


_OPS = {
    # name: (first-group op, second-group op, conjugate tensor)
    "lower": (_remove, _insert, False),
    "raise": (_insert, _remove, True),
    "wedge": (_insert, _insert, False),
    "contract": (_remove, _remove, True),
}

_SHIFTS = {"lower": (-1, 1), "raise": (1, -1), "wedge": (1, 1), "contract": (-1, -1)}


@lru_cache(maxsize=None)
def product_table(n: int, a: int, b: int, op: str) -> tuple:
    """Entries (src, dst, alpha, beta, sign) of one product on (a, b) blocks.

    Signs: the second-group move passes over the first group, contributing
    ``(-1)^a``; each insertion or removal contributes the parity of the
    indices it passes.
    """
    if op not in _OPS:
        raise DomainError(f"unknown product {op!r}")
    f1, f2, _ = _OPS[op]
    da, db = _SHIFTS[op]
    I_src, J_src = multi_indices(n, a), multi_indices(n, b)
    I_dst = {I: k for k, I in enumerate(multi_indices(n, a + da))}
    J_dst = {J: k for k, J in enumerate(multi_indices(n, b + db))}
    nJs, nJd = len(J_src), len(J_dst)
    out = []
    for iI, I in enumerate(I_src):
        for iJ, J in enumerate(J_src):
            for alpha in range(n):
                I2, s1 = f1(I, alpha)
                if I2 is None:
                    continue
                for beta in range(n):
                    J2, s2 = f2(J, beta)
                    if J2 is None:
                        continue
                    sign = s1 * s2 * (-1 if a % 2 else 1)
                    out.append((iI * nJs + iJ, I_dst[I2] * nJd + J_dst[J2], alpha, beta, sign))
    return tuple(out)


@dataclass(frozen=True)
class BundleForm:
    """Coefficient block (N, C(n, a), C(n, b)); ``kind`` is "form" or "tangent"."""

    coefficients: np.ndarray
    degree: tuple
    twist: int = 1
    kind: str = "form"

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        a, b = self.degree
        if a < 0 or b < 0:
            raise DegreeError(f"negative degree {self.degree}")
        n = self.n_from(c, a, b)
        if c.ndim != 3 or c.shape[1:] != (math.comb(n, a), math.comb(n, b)):
            raise DomainError(f"block shape {c.shape} does not match degree {self.degree}")
        if not np.all(np.isfinite(c)):
            raise DomainError("form coefficients must be finite")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "degree", (int(a), int(b)))

    @staticmethod
    def n_from(c, a, b) -> int:
        if c.ndim != 3:
            raise DomainError("form coefficients must be 3-dimensional")
        for n in range(1, 9):
            if (math.comb(n, a), math.comb(n, b)) == c.shape[1:] and (a <= n and b <= n):
                return n
        raise DomainError(f"cannot infer dimension from block {c.shape[1:]} at degree {(a, b)}")

    @property
    def nodes(self) -> int:
        return self.coefficients.shape[0]

    @property
    def ncomp(self) -> int:
        return self.coefficients.shape[1] * self.coefficients.shape[2]

    def flat(self) -> np.ndarray:
        return self.coefficients.reshape(-1)

    def fields(self) -> np.ndarray:
        return self.coefficients.reshape(self.nodes, -1)

    def conj(self) -> "BundleForm":
        return BundleForm(np.conj(self.coefficients), self.degree, self.twist, self.kind)


def _ks_array(A) -> np.ndarray:
    c = getattr(A, "coefficients", A)
    c = np.asarray(c, dtype=complex)
    if c.ndim == 1:
        c = c[:, None, None]
    return c


def apply_product(op: str, A, form: BundleForm, n: int | None = None) -> BundleForm:
    """One of the four KS products; raises :class:`DegreeError` out of range."""
    coef = _ks_array(A)
    n = coef.shape[1] if n is None else n
    a, b = form.degree
    da, db = _SHIFTS[op]
    if not (0 <= a + da <= n and 0 <= b + db <= n):
        raise DegreeError(f"{op} is undefined on degree {form.degree} in dimension {n}")
    if coef.shape[0] != form.nodes:
        raise DomainError("KS form and bundle form have different node counts")
    if _OPS[op][2]:
        coef = np.conj(np.swapaxes(coef, 1, 2))
    out_shape = (form.nodes, math.comb(n, a + da) * math.comb(n, b + db))
    out = np.zeros(out_shape, dtype=complex)
    src = form.fields()
    for s, d, alpha, beta, sign in product_table(n, a, b, op):
        out[:, d] += sign * coef[:, alpha, beta] * src[:, s]
    out = out.reshape(form.nodes, math.comb(n, a + da), math.comb(n, b + db))
    kind = "tangent" if op in ("wedge", "contract") else form.kind
    return BundleForm(out, (a + da, b + db), form.twist, kind)


def cup_contract(A, psi: BundleForm, direction: str) -> BundleForm:
    """Cup product with contraction: ``lowering`` uses A, ``raising`` its conjugate."""
    op = {"lowering": "lower", "raising": "raise"}.get(direction)
    if op is None:
        raise DomainError(f"direction must be 'lowering' or 'raising', got {direction!r}")
    return apply_product(op, A, psi)


def pointwise_dot(x, y) -> np.ndarray:
    """Sum over components of x * conj(y), per node."""
    xa = getattr(x, "coefficients", x)
    ya = getattr(y, "coefficients", y)
    xa, ya = np.asarray(xa), np.asarray(ya)
    return np.sum((xa * np.conj(ya)).reshape(xa.shape[0], -1), axis=1)


# -- model fibers --------------------------------------------------------------------

@dataclass
class FiberModel:
    """Base function Laplacian plus the slot stand-ins built from it.

    ``harmonic`` maps a slot key ``(kind, a, b)`` to the list of fields
    declared harmonic there; unlisted slots treat componentwise constants as
    harmonic.
    """

    base: SpectralDecomposition
    n: int
    label: str = "model"
    harmonic: dict = field(default_factory=dict)
    kernel_floor: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def weights(self) -> np.ndarray:
        return self.base.volume_weights

    @property
    def gap(self) -> float:
        return self.base.first_nonzero()

    def slot(self, key, ncomp: int, harmonic=None, shift: float = 0.0) -> SpectralDecomposition:
        if harmonic is None:
            harmonic = self.harmonic.get(key)
        if harmonic is not None:
            harmonic = [np.asarray(getattr(h, "coefficients", h)).reshape(self.base.dim, ncomp)
                        for h in harmonic]
        if harmonic is None and ncomp == 1 and shift == 0.0:
            return self.base
        hkey = "const" if harmonic is None else fingerprint(*harmonic) if harmonic else "none"
        ck = (key, ncomp, hkey, round(float(shift), 12))
        if ck not in self._cache:
            self._cache[ck] = bundle_slot(self.base, ncomp, harmonic=harmonic, shift=shift,
                                          label=f"{key}")
        return self._cache[ck]

    def integrate(self, f) -> complex:
        return complex(np.sum(self.weights * f))

    def form_inner(self, x: BundleForm, y: BundleForm) -> complex:
        return self.integrate(pointwise_dot(x, y))

    def form_norm(self, x: BundleForm) -> float:
        return math.sqrt(max(self.form_inner(x, x).real, 0.0))

    def resolvent_floor(self) -> float:
        """Smallest entry of the discrete (Box + 1)^-1 kernel."""
        if self.kernel_floor is None:
            v = self.base.eigenvectors
            K = (v / (self.base.eigenvalues + 1.0)) @ v.conj().T
            self.kernel_floor = float(np.min(K.real))
        return self.kernel_floor


def _slot_key(form: BundleForm):
    return (form.kind, form.degree[0], form.degree[1])


def harmonic_defects(model: FiberModel, forms, slot=None) -> np.ndarray:
    out = []
    for f in forms:
        S = slot if slot is not None else model.slot(_slot_key(f), f.ncomp)
        x = f.flat()
        h = harmonic_project(S, x)
        nrm = math.sqrt(max(np.real(np.sum(S.volume_weights * np.abs(x) ** 2)), 1e-300))
        out.append(math.sqrt(max(np.real(np.sum(S.volume_weights * np.abs(x - h) ** 2)), 0.0)) / nrm)
    return np.array(out)


def _check_harmonic(model, forms, slot, tol):
    d = harmonic_defects(model, forms, slot)
    if np.any(d > tol):
        raise NonHarmonicError(d)


def _as_form(x: np.ndarray, like: BundleForm) -> BundleForm:
    return BundleForm(x.reshape(like.coefficients.shape), like.degree, like.twist, like.kind)


# -- curvature tensors ----------------------------------------------------------------

@dataclass
class CurvatureTensor:
    """``entries[i, j, l, k]``; the quadratic form is sum R xi[i, k] conj(xi[j, l])."""

    entries: np.ndarray
    terms: dict
    formula: str
    m: int
    p: int
    n: int
    details: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return max([float(np.max(np.abs(t), initial=0.0)) for t in self.terms.values()] + [1e-300])

    def hermitian_defect(self) -> float:
        R = self.entries
        return float(np.max(np.abs(R - np.conj(np.transpose(R, (1, 0, 3, 2)))), initial=0.0)) / self.scale

    @staticmethod
    def matrix(R: np.ndarray) -> np.ndarray:
        """Hermitian matrix M[(i, k), (j, l)] of the quadratic form."""
        I, J, L, K = R.shape
        return np.transpose(R, (0, 3, 1, 2)).reshape(I * K, J * L)

    def quadratic_form(self, xi, which: str | None = None) -> float:
        R = self.entries if which is None else self.terms[which]
        xi = np.asarray(xi).reshape(-1)
        return float(np.real(np.conj(xi) @ (self.matrix(R).T @ xi)))

    def term_min_eigenvalue(self, which: str) -> float:
        M = self.matrix(self.terms[which]).T
        return float(np.linalg.eigvalsh(0.5 * (M + M.conj().T)).min())

    def relative_norm(self) -> float:
        return float(np.max(np.abs(self.entries), initial=0.0)) / self.scale

    def to_dict(self) -> dict:
        return {"formula": self.formula, "m": self.m, "p": self.p, "n": self.n,
                "index_order": "i j l k",
                "entries": self.entries, "terms": dict(self.terms),
                "hermitian_defect": self.hermitian_defect(), "scale": self.scale,
                "details": self.details}


def _t1(model: FiberModel, A, forms, sign: float) -> np.ndarray:
    """sign * int (Box + 1)^-1 (A_i . conj A_j) (f_k . conj f_l), as [i, j, l, k]."""
    nA, nf = len(A), len(forms)
    T = np.zeros((nA, nA, nf, nf), dtype=complex)
    w = model.weights
    G = np.array([[pointwise_dot(forms[k], forms[l]) for l in range(nf)] for k in range(nf)])
    for i in range(nA):
        for j in range(nA):
            f = pointwise_dot(_ks_array(A[i]), _ks_array(A[j]))
            r = resolvent_apply(model.base, 1.0, f)
            # T[i, j, l, k] = sum_w r * G[k, l]
            T[i, j] = sign * np.einsum("n,kln->lk", w * r, G)
    return T


def _gram_resolvent(S: SpectralDecomposition, shift: float, left, right) -> np.ndarray:
    """<(Box + shift)^-1 left[a], right[b]> for lists of flat fields."""
    out = np.zeros((len(left), len(right)), dtype=complex)
    for a, x in enumerate(left):
        r = resolvent_apply(S, shift, x)
        for b, y in enumerate(right):
            out[a, b] = np.sum(S.volume_weights * r * np.conj(y))
    return out


def curvature_direct_image(model: FiberModel, m: int, p: int, A, psi, *, psi_slot=None,
                           raise_slot=None, harmonic_tol: float = 1e-8) -> CurvatureTensor:
    """Three-term curvature of the direct image of (p, n-p)-forms twisted by K^m.

    T1 = m int (Box+1)^-1 (A_i . A_j*) (psi^k . psi^l*)
    T2 = m <(Box+m)^-1 A_i cup psi^k, A_j cup psi^l>             (p > 0)
    T3 = m <(Box-m)^-1 A_j* cup psi^k, A_i* cup psi^l>           (p < n)

    T3 is split as -<H X_jk, H X_il> + m <(Box-m)^-1 (1-H) X_jk, X_il>.
    """
    n = model.n
    if m < 1 or int(m) != m:
        raise DomainError(f"twist must be a positive integer, got {m}")
    if not 0 <= p <= n:
        raise DegreeError(f"degree p={p} outside [0, {n}]")
    for f in psi:
        if f.degree != (p, n - p):
            raise DegreeError(f"section of degree {f.degree}, expected {(p, n - p)}")
    _check_harmonic(model, psi, psi_slot, harmonic_tol)
    nA, nf = len(A), len(psi)
    terms = {"T1": m * _t1(model, A, psi, 1.0)}
    details = {}
    T2 = np.zeros_like(terms["T1"])
    if p > 0:
        Y = [[apply_product("lower", A[i], psi[k], n) for k in range(nf)] for i in range(nA)]
        S = model.slot(_slot_key(Y[0][0]), Y[0][0].ncomp)
        flat = [Y[i][k].flat() for i in range(nA) for k in range(nf)]
        G = _gram_resolvent(S, float(m), flat, flat).reshape(nA, nf, nA, nf)
        T2 = m * np.transpose(G, (0, 2, 3, 1))  # [i,k,j,l] -> [i,j,l,k]
    terms["T2"] = T2
    T3 = np.zeros_like(T2)
    T3h = np.zeros_like(T2)
    if p < n:
        X = [[apply_product("raise", A[j], psi[k], n) for k in range(nf)] for j in range(nA)]
        x0 = X[0][0]
        if raise_slot is None:
            harm = [X[j][k] for j in range(nA) for k in range(nf)] if p == 0 else None
            raise_slot = model.slot(("raise",) + _slot_key(x0), x0.ncomp, harmonic=harm,
                                    shift=m + model.gap)
        flat = [[X[j][k].flat() for k in range(nf)] for j in range(nA)]
        H, Rm = {}, {}
        for j in range(nA):
            for k in range(nf):
                H[j, k], Rm[j, k] = harmonic_split_resolvent(raise_slot, float(m), flat[j][k])
        w = raise_slot.volume_weights
        for i in range(nA):
            for j in range(nA):
                for l in range(nf):
                    for k in range(nf):
                        hh = np.sum(w * H[j, k] * np.conj(H[i, l]))
                        rr = np.sum(w * Rm[j, k] * np.conj(flat[i][l]))
                        T3h[i, j, l, k] = -hh
                        T3[i, j, l, k] = -hh + m * rr
        details["raise_slot_min_nonharmonic"] = float(
            raise_slot.eigenvalues[raise_slot.eigenvalues > 0].min(initial=math.inf))
    terms["T3"] = T3
    terms["T3_harmonic"] = T3h
    R = terms["T1"] + terms["T2"] + terms["T3"]
    return CurvatureTensor(R, terms, "direct_image", int(m), int(p), n, details)


def curvature_pluricanonical(model: FiberModel, m: int, A, psi, **kw) -> CurvatureTensor:
    """Two-term formula for sections of K^(m+1), i.e. p = n."""
    t = curvature_direct_image(model, m, model.n, A, psi, **kw)
    t.formula = "pluricanonical"
    return t


def curvature_tangent(model: FiberModel, p: int, A, nu, *, nu_slot=None, wedge_slot=None,
                      harmonic_tol: float = 1e-8) -> CurvatureTensor:
    """Curvature of the p-th direct image of Lambda^p T.

    T1 = -int (Box+1)^-1 (A_i . A_j*) (nu_k . nu_l*)
    T2 = -<(Box+1)^-1 A_j* ^ nu_k, A_i* ^ nu_l>                  (p > 0)
    T3 = -<(Box-1)^-1 A_i ^ nu_k, A_j ^ nu_l>                     (p < n)
    """
    n = model.n
    if not 0 <= p <= n:
        raise DegreeError(f"degree p={p} outside [0, {n}]")
    for f in nu:
        if f.degree != (p, p):
            raise DegreeError(f"tangent form of degree {f.degree}, expected {(p, p)}")
    _check_harmonic(model, nu, nu_slot, harmonic_tol)
    nA, nf = len(A), len(nu)
    terms = {"T1": _t1(model, A, nu, -1.0)}
    T2 = np.zeros_like(terms["T1"])
    if p > 0:
        Z = [[apply_product("contract", A[j], nu[k], n) for k in range(nf)] for j in range(nA)]
        S = model.slot(_slot_key(Z[0][0]), Z[0][0].ncomp)
        flat = [Z[j][k].flat() for j in range(nA) for k in range(nf)]
        G = _gram_resolvent(S, 1.0, flat, flat).reshape(nA, nf, nA, nf)  # [j,k,i,l]
        T2 = -np.transpose(G, (2, 0, 3, 1))
    terms["T2"] = T2
    T3 = np.zeros_like(T2)
    T3h = np.zeros_like(T2)
    if p < n:
        W = [[apply_product("wedge", A[i], nu[k], n) for k in range(nf)] for i in range(nA)]
        w0 = W[0][0]
        if wedge_slot is None:
            harm = [W[i][k] for i in range(nA) for k in range(nf)] if p == 0 else None
            wedge_slot = model.slot(("wedge",) + _slot_key(w0), w0.ncomp, harmonic=harm,
                                    shift=1.0 + model.gap)
        H, Rm = {}, {}
        for i in range(nA):
            for k in range(nf):
                H[i, k], Rm[i, k] = harmonic_split_resolvent(wedge_slot, 1.0, W[i][k].flat())
        w = wedge_slot.volume_weights
        for i in range(nA):
            for j in range(nA):
                for l in range(nf):
                    for k in range(nf):
                        hh = np.sum(w * H[i, k] * np.conj(H[j, l]))
                        rr = np.sum(w * Rm[i, k] * np.conj(W[j][l].flat()))
                        T3h[i, j, l, k] = hh
                        T3[i, j, l, k] = hh - rr
    terms["T3"] = T3
    terms["T3_harmonic"] = T3h
    R = terms["T1"] + terms["T2"] + terms["T3"]
    return CurvatureTensor(R, terms, "tangent", 1, int(p), n)


# -- estimates ----------------------------------------------------------------------

def _harmonic_norm_sq(model: FiberModel, x: BundleForm, slot=None) -> float:
    S = slot if slot is not None else model.slot(_slot_key(x), x.ncomp)
    h = harmonic_project(S, x.flat())
    return float(np.real(np.sum(S.volume_weights * np.abs(h) ** 2)))


def ks_norm_sq(model: FiberModel, A) -> float:
    return float(np.real(model.integrate(pointwise_dot(_ks_array(A), _ks_array(A)))))


def direct_image_estimate(model: FiberModel, m: int, p: int, A, psi: BundleForm, P: float,
                          slack: float = 1e-8, tensor: CurvatureTensor | None = None) -> BoundReport:
    """R(A, A*, psi, psi*) >= P |A|^2 |psi|^2 + |H(A cup psi)|^2 - |H(A* cup psi)|^2."""
    n = model.n
    t = curvature_direct_image(model, m, p, [A], [psi]) if tensor is None else tensor
    lhs = float(np.real(t.entries[0, 0, 0, 0]))
    rhs = P * ks_norm_sq(model, A) * model.form_norm(psi) ** 2
    if p > 0:
        rhs += _harmonic_norm_sq(model, apply_product("lower", A, psi, n))
    if p < n:
        X = apply_product("raise", A, psi, n)
        slot = model.slot(("raise",) + _slot_key(X), X.ncomp,
                          harmonic=[X] if p == 0 else None, shift=m + model.gap)
        rhs -= _harmonic_norm_sq(model, X, slot)
    return BoundReport.inequality("direct_image_lower_estimate", "eq:est1a", lhs, rhs,
                                  slack * max(1.0, t.scale), hard=False,
                                  provenance={"m": m, "p": p, "model": model.label},
                                  details={"P_n": P})


def tangent_estimate(model: FiberModel, p: int, A, nu: BundleForm, wedge_next: BundleForm | None,
                     P: float, slack: float = 1e-8) -> BoundReport:
    """R(A, A*, nu, nu*) <= -P |A|^2 |nu|^2 + |H(A ^ nu)|^2 for nu = H(A_1 ^ ... ^ A_p)."""
    t = curvature_tangent(model, p, [A], [nu])
    lhs = float(np.real(t.entries[0, 0, 0, 0]))
    rhs = -P * ks_norm_sq(model, A) * model.form_norm(nu) ** 2
    if wedge_next is not None and p < model.n:
        rhs += _harmonic_norm_sq(model, wedge_next)
    return BoundReport.inequality("tangent_upper_estimate", "eq:est1b", rhs, lhs,
                                  slack * max(1.0, t.scale), hard=False,
                                  provenance={"p": p, "model": model.label}, details={"P_n": P})


def nakano_check(tensor: CurvatureTensor, G_wp: np.ndarray, H: np.ndarray, P: float,
                 xis, slack: float = 1e-6) -> BoundReport:
    """R xi xi* - m P (G (x) H) xi xi* over sample vectors xi[i, k].

    ``G_wp[i, j] = <A_i, A_j>`` and ``H[k, l] = <psi^k, psi^l>``.
    """
    m = tensor.m
    B = np.einsum("ij,kl->ijlk", G_wp, H)
    worst, worst_lhs, worst_rhs = math.inf, 0.0, 0.0
    Mr = CurvatureTensor.matrix(tensor.entries).T
    Mb = CurvatureTensor.matrix(B).T
    for xi in xis:
        x = np.asarray(xi).reshape(-1)
        lhs = float(np.real(np.conj(x) @ (Mr @ x)))
        rhs = m * P * float(np.real(np.conj(x) @ (Mb @ x)))
        if lhs - rhs < worst:
            worst, worst_lhs, worst_rhs = lhs - rhs, lhs, rhs
    return BoundReport("nakano_lower_bound", "co:curv1", worst_lhs, worst_rhs, worst,
                       slack * tensor.scale, hard=False,
                       provenance={"m": m, "samples": len(xis)}, details={"P_n": P})


# -- model builders --------------------------------------------------------------------

def random_graph_laplacian(N: int, seed: int = 0, degree: int = 4):
    """Connected weighted graph: a ring plus random chords, with random node volumes."""
    rng = np.random.default_rng(seed)
    rows, cols = list(range(N)), [(i + 1) % N for i in range(N)]
    extra = rng.integers(0, N, size=(N * (degree - 2) // 2, 2))
    for a, b in extra:
        if a != b:
            rows.append(int(a))
            cols.append(int(b))
    wts = rng.uniform(0.5, 1.5, size=len(rows))
    Wm = sp.coo_matrix((wts, (rows, cols)), shape=(N, N)).tocsr()
    Wm = Wm + Wm.T
    L = sp.diags(np.asarray(Wm.sum(axis=1)).ravel()) - Wm
    vol = rng.uniform(0.5, 1.5, size=N)
    vol /= vol.sum()
    return L.tocsr(), vol


def synthetic_ks_forms(base: SpectralDecomposition, n: int, count: int, seed: int = 0,
                       modes: int = 6) -> list[np.ndarray]:
    """Smooth symmetric blocks: low eigenmodes times random complex symmetric matrices."""
    rng = np.random.default_rng(seed + 1)
    V = np.real(base.eigenvectors[:, :modes])
    out = []
    for _ in range(count):
        acc = np.zeros((base.dim, n, n), dtype=complex)
        for r in range(V.shape[1]):
            S = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            acc += V[:, r, None, None] * (S + S.T)[None] / (1.0 + r)
        out.append(acc)
    return out


def make_synthetic_model(n: int = 2, N: int = 120, count: int = 2, seed: int = 0) -> tuple:
    """Random graph fiber of dimension n with ``count`` KS forms declared harmonic."""
    if n not in (1, 2, 3):
        raise DomainError("synthetic mode supports n in {1, 2, 3}")
    if N > 500:
        raise DomainError("synthetic mode is limited to 500 nodes")
    L, vol = random_graph_laplacian(N, seed)
    base = from_operators(L, vol, label=f"synthetic-n{n}")
    A = synthetic_ks_forms(base, n, count, seed)
    model = FiberModel(base, n, label=f"synthetic-n{n}-N{N}-s{seed}")
    model.harmonic[("tangent", 1, 1)] = [a for a in A]
    return model, A


def constant_section(model: FiberModel, degree: tuple, kind: str = "form", twist: int = 1,
                     block=None) -> BundleForm:
    """Componentwise constant form, unit L^2 norm; harmonic in the default slot."""
    n = model.n
    shape = (math.comb(n, degree[0]), math.comb(n, degree[1]))
    blk = np.ones(shape, dtype=complex) if block is None else np.asarray(block, dtype=complex)
    c = np.broadcast_to(blk, (model.base.dim,) + shape).copy()
    f = BundleForm(c, degree, twist, kind)
    return BundleForm(c / model.form_norm(f), degree, twist, kind)


def synthetic_sections(model: FiberModel, p: int, count: int, m: int = 1, seed: int = 0) -> list:
    """Orthonormal constant (p, n-p)-forms with random component blocks."""
    rng = np.random.default_rng(seed + 7)
    n = model.n
    shape = (math.comb(n, p), math.comb(n, n - p))
    dim = shape[0] * shape[1]
    count = min(count, dim)
    Z = rng.standard_normal((dim, count)) + 1j * rng.standard_normal((dim, count))
    Q, _ = np.linalg.qr(Z)
    vol = model.base.total_volume
    return [BundleForm(np.broadcast_to(Q[:, c].reshape(shape) / math.sqrt(vol),
                                       (model.base.dim,) + shape).copy(), (p, n - p), m)
            for c in range(count)]


def ks_as_tangent(A, n: int) -> BundleForm:
    """A KS form viewed as a T-valued (0,1)-form (degree (1,1))."""
    return BundleForm(_ks_array(A), (1, 1), 1, "tangent")


def wedge_power(A, p: int, n: int) -> BundleForm | None:
    """A ^ ... ^ A (p factors) as a Lambda^p T-valued (0,p)-form; None when p > n."""
    if p > n:
        return None
    coef = _ks_array(A)
    out = BundleForm(np.ones((coef.shape[0], 1, 1), dtype=complex), (0, 0), 1, "tangent")
    for _ in range(p):
        out = apply_product("wedge", coef, out, n)
    return out


def make_geometric_model(fiber, spec: SpectralDecomposition | None = None, basis=None):
    """n = 1 model on the octagon fiber with harmonic Beltrami forms."""
    from .fiber_geometry import complex_laplacian
    from .ks_wp import beltrami_basis, quadratic_differential_basis

    spec = complex_laplacian(fiber) if spec is None else spec
    basis = quadratic_differential_basis(fiber) if basis is None else basis
    mus = beltrami_basis(fiber, basis)
    model = FiberModel(spec, 1, label=f"octagon-r{fiber.resolution}")
    model.harmonic[("tangent", 1, 1)] = [mu.coefficients for mu in mus]
    return model, mus, basis


def geometric_sections(model: FiberModel, fiber, m: int, p: int, basis=None) -> list:
    """Harmonic sections at n = 1: the unit constant for p = 0, and for p = 1 the
    holomorphic (m+1)-differentials in unit frames (registered as harmonic)."""
    from .ks_wp import frame_coefficients, holomorphic_differential_basis

    if p == 0:
        if m != 1:
            raise DomainError("the geometric p = 0 slot is modeled only for m = 1")
        return [constant_section(model, (0, 1), twist=1)]
    if p != 1:
        raise DegreeError("n = 1 admits p in {0, 1}")
    k = m + 1
    basis = holomorphic_differential_basis(fiber, k) if basis is None else basis
    psi = [BundleForm(frame_coefficients(fiber, q, k)[:, None, None], (1, 0), m)
           for q in basis.fields]
    model.harmonic[("form", 1, 0)] = [f.coefficients for f in psi]
    return psi


def random_xi(shape, count: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(shape) + 1j * rng.standard_normal(shape) for _ in range(count)]
