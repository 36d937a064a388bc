"""Kähler-Einstein potential on a perturbed hyperbolic curve.

Start from the hyperbolic form ``w_hyp`` and the volume form
``Omega0 = w_hyp * exp(eps h)``.  Its Ricci form gives the background
``w0 = w_hyp + eps i ddbar h = (1 - eps Box_hyp h) w_hyp`` and the deviation
``F = log(Omega0 / w0)``.  The KE potential ``u`` solves

    1 - Box0 u = exp(u + F)

where ``Box0`` is the d-bar Laplacian of ``w0``.  The sign convention is
``i ddbar u = -(Box0 u) w0``.

Discretely ``Box`` is ``M^-1 K / 2`` with ``K`` the cotangent stiffness and
``M`` the lumped mass.  Re-weighting the mass by the density of ``w0`` over
``w_hyp`` gives ``Box0``, so the nodal equation is

    M0 - K u / 2 - M0 exp(u + F) = 0,    M0 = c M,  c = 1 - eps Box_hyp h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fiber_geometry import DiscreteFiber, poincare_distance, stiffness_matrix
from .reports import BoundReport, ConvergenceError, DomainError, fingerprint

BUMP_RADIUS = 1.4


@dataclass(frozen=True)
class BackgroundData:
    Omega0: np.ndarray
    omega0_density: np.ndarray
    F: np.ndarray
    stiffness: sp.csr_matrix
    hyperbolic_weights: np.ndarray
    epsilon: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        """Lumped mass of the background form."""
        return self.omega0_density * self.hyperbolic_weights

    def box0(self, u) -> np.ndarray:
        """Box0 u as a nodal field."""
        return 0.5 * (self.stiffness @ u) / self.weights


def bump_perturbation(fiber: DiscreteFiber, radius: float = BUMP_RADIUS) -> np.ndarray:
    """Smooth bump in hyperbolic distance from the centre of the domain.

    The support stays inside the inscribed disk of the octagon, so the field is
    a smooth function on the closed surface.
    """
    d = poincare_distance(fiber.vertices, 0.0) if fiber.hyperbolic else np.abs(fiber.vertices - 0.5 - 0.5j)
    x = np.clip(d / radius, 0.0, 1.0)
    out = np.zeros_like(x)
    inside = x < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def make_background(fiber: DiscreteFiber, perturbation=None, epsilon: float = 0.05) -> BackgroundData:
    h = bump_perturbation(fiber) if perturbation is None else np.asarray(perturbation, dtype=float)
    if h.shape != (fiber.n_vertices,):
        raise DomainError(f"perturbation must have one value per vertex ({fiber.n_vertices})")
    K = stiffness_matrix(fiber)
    W = fiber.area_weights
    box_h = 0.5 * (K @ h) / W
    c = 1.0 - epsilon * box_h
    if np.any(c <= 0):
        v = int(np.argmin(c))
        raise DomainError(f"background form is not positive at vertex {v} (density {c[v]:.3e})")
    Omega0 = fiber.metric_density * np.exp(epsilon * h)
    F = epsilon * h - np.log(c)
    if epsilon == 0.0:
        F = np.zeros_like(F)
    return BackgroundData(Omega0, c, F, K, W, float(epsilon))


def ke_residual(bg: BackgroundData, u) -> np.ndarray:
    """Pointwise 1 - Box0 u - exp(u + F)."""
    return 1.0 - bg.box0(u) - np.exp(u + bg.F)


def _rms(bg: BackgroundData, r) -> float:
    w = bg.weights
    return math.sqrt(float(np.sum(w * r * r) / np.sum(w)))


@dataclass
class KESolution:
    u: np.ndarray
    residual: float
    steps: int
    history: list


def solve_ke(fiber: DiscreteFiber, bg: BackgroundData, tol: float = 1e-10,
             u0=None, max_iter: int = 30) -> KESolution:
    """Damped Newton for M0 - K u / 2 - M0 exp(u + F) = 0.

    Steps are halved until the weighted RMS residual decreases.  After
    convergence one more full step is taken if it lowers the residual, which
    pushes the pointwise error to rounding level.
    """
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    M0 = bg.weights
    Kh = 0.5 * bg.stiffness
    u = np.zeros(fiber.n_vertices) if u0 is None else np.array(u0, dtype=float)

    def newton_step(u):
        e = np.exp(u + bg.F)
        G = M0 - Kh @ u - M0 * e
        J = (-Kh - sp.diags(M0 * e)).tocsc()
        return spla.spsolve(J, -G)

    res = _rms(bg, ke_residual(bg, u))
    history = [res]
    steps = 0
    while res >= tol:
        if steps >= max_iter:
            raise ConvergenceError(f"Newton did not reach {tol:.1e} in {max_iter} steps", history)
        du = newton_step(u)
        t = 1.0
        while True:
            trial = u + t * du
            r_new = _rms(bg, ke_residual(bg, trial))
            if r_new < res:
                break
            t *= 0.5
            if t < 1e-8:
                raise ConvergenceError("line search stalled", history)
        u, res = trial, r_new
        history.append(res)
        steps += 1
    trial = u + newton_step(u)
    r_new = _rms(bg, ke_residual(bg, trial))
    if r_new <= res:
        u, res = trial, r_new
        history.append(res)
    return KESolution(u, res, steps, history)


def check_c0_estimate(u, F, bg: BackgroundData, slack: float = 1e-8) -> list[BoundReport]:
    """Pointwise u + F <= -Box0 u and the sup bound sup u <= sup(-F)."""
    u = np.asarray(u, dtype=float)
    F = np.asarray(F, dtype=float)
    rhs_field = -bg.box0(u)
    margins = rhs_field - (u + F)
    i = int(np.argmin(margins))
    prov = {"u": fingerprint(u), "F": fingerprint(F), "epsilon": bg.epsilon}
    pointwise = BoundReport("c0_pointwise", "eq:uplusF", float(rhs_field[i]), float(u[i] + F[i]),
                            float(margins[i]), slack, provenance=prov, hard=False,
                            details={"vertex": i})
    sup = BoundReport.inequality("c0_sup", "eq:uplusF", float(np.max(-F)), float(np.max(u)),
                                 slack, provenance=prov, hard=False)
    return [pointwise, sup]
