"""Heat-kernel and resolvent-kernel lower bounds on Kähler-Einstein fibers.

For a compact Kähler-Einstein manifold of dimension ``n`` and Ricci curvature
-1 the heat kernel is bounded below by

    Q_n(t, r) = (2 pi t)^-n exp(-r^2 / t) exp(-(2n - 1) t / 4)

and integrating against ``exp(-t)`` gives the resolvent lower bound
``P_n(r) = int_0^inf exp(-t) Q_n(t, r) dt``.  The integral has the closed form

    P_n(r) = (2 pi)^-n (2n + 3)^((n-1)/2) / 2^(n-2) r^-(n-1) K_{n-1}(sqrt(2n+3) r)

which :func:`bessel_estimate` evaluates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .reports import DomainError, QuadratureError

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "adaptive-log"
    panels: int = 500
    t_max: float | None = None
    abs_tol: float = DEFAULT_TOL


@dataclass(frozen=True)
class BoundParams:
    n: int
    r: float
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.n}")
        if not self.r >= 0 or not math.isfinite(self.r):
            raise DomainError(f"distance must be finite and non-negative, got {self.r}")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error: float
    t_min: float
    t_max: float
    tail_bound: float


def _decay_rate(n: int) -> float:
    return 1.0 + (2 * n - 1) / 4.0


def heat_kernel_lower_bound(n: int, t: float, r: float) -> float:
    """Q_n(t, r)."""
    if not t > 0:
        raise DomainError(f"time must be positive, got {t}")
    if r < 0:
        raise DomainError(f"distance must be non-negative, got {r}")
    return math.exp(-n * math.log(2 * math.pi * t) - r * r / t - (2 * n - 1) * t / 4.0)


def tail_bound(n: int, t_max: float) -> float:
    """Upper bound for the integral of exp(-t) Q_n(t, r) over [t_max, inf)."""
    b = _decay_rate(n)
    return (2 * math.pi * t_max) ** (-n) * math.exp(-b * t_max) / b


def _choose_t_max(n: int, tol: float) -> float:
    t = 8.0
    while tail_bound(n, t) > 1e-3 * tol:
        t *= 1.5
    return t


def integrate_resolvent_bound(params: BoundParams) -> QuadratureResult:
    """Quadrature of P_n(r) in the variable u = log t, with error accounting.

    Below ``t_min = r^2 / 100`` the integrand is increasing in t, so the
    neglected head is at most ``t_min * Q_n(t_min, r)``.
    """
    n, r, q = int(params.n), float(params.r), params.quadrature
    if r == 0.0:
        # t^-n is not integrable at 0 without Gaussian damping.
        return QuadratureResult(math.inf, 0.0, 0.0, math.inf, 0.0)
    b = _decay_rate(n)
    t_max = q.t_max if q.t_max is not None else _choose_t_max(n, q.abs_tol)
    t_min = r * r / 100.0
    if t_min >= t_max:
        # Far tail: the whole integrand is below the tail bound.
        return QuadratureResult(0.0, tail_bound(n, t_max), t_min, t_max, tail_bound(n, t_max))

    def logf(u):
        t = math.exp(u)
        return u - b * t - n * math.log(2 * math.pi * t) - r * r / t

    def f(u):
        return math.exp(logf(u))

    # peak of t^(1-n) exp(-r^2/t - b t)
    t_peak = ((1 - n) + math.sqrt((1 - n) ** 2 + 4 * b * r * r)) / (2 * b)
    lo, hi = math.log(t_min), math.log(t_max)
    points = [u for u in (math.log(t_peak),) if lo < u < hi]
    val, err = integrate.quad(f, lo, hi, points=points or None, epsabs=0.1 * q.abs_tol,
                              epsrel=1e-13, limit=q.panels)
    head = t_min * heat_kernel_lower_bound(n, t_min, r)
    tail = tail_bound(n, t_max)
    total_err = err + head + tail
    if total_err > q.abs_tol:
        raise QuadratureError(f"P_{n}({r}) quadrature missed tolerance {q.abs_tol:.1e}", total_err)
    return QuadratureResult(val, total_err, t_min, t_max, tail)


def resolvent_lower_bound(params: BoundParams | None = None, *, n: int | None = None,
                          r: float | None = None, tol: float = DEFAULT_TOL) -> float:
    """P_n(r) by quadrature.  Returns ``inf`` at r = 0, where the integral diverges."""
    if params is None:
        params = BoundParams(n, r, QuadratureSpec(abs_tol=tol))
    return integrate_resolvent_bound(params).value


def modified_bessel_k(order: int, x: float) -> float:
    """Modified Bessel function of the second kind for integer order."""
    if int(order) != order or order < 0:
        raise DomainError(f"order must be a non-negative integer, got {order}")
    if not x > 0:
        raise DomainError(f"argument must be positive, got {x}")
    return float(special.kv(int(order), x))


def bessel_estimate(n: int, r: float) -> float:
    """Closed-form value of P_n(r) through K_{n-1}."""
    if not r > 0:
        raise DomainError("the r^-(n-1) factor is singular at r = 0")
    c = math.sqrt(2 * n + 3)
    pref = (2 * math.pi) ** (-n) * (2 * n + 3) ** ((n - 1) / 2) / 2.0 ** (n - 2)
    return pref * r ** (-(n - 1)) * modified_bessel_k(n - 1, c * r)


def pn_table(n: int, r_min: float, r_max: float, steps: int,
             tol: float = DEFAULT_TOL) -> np.ndarray:
    """Rows of (r, P_n(r), bessel_estimate, margin) on a uniform grid."""
    rows = []
    for r in np.linspace(r_min, r_max, steps):
        p = resolvent_lower_bound(n=n, r=float(r), tol=tol)
        be = bessel_estimate(n, float(r)) if r > 0 else math.inf
        rows.append((float(r), p, be, p - be if math.isfinite(be) else 0.0))
    return np.array(rows)
