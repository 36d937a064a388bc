"""Structured records for inequality and identity checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


class WPGeomError(Exception):
    """Base class for errors raised by this package."""


class DomainError(WPGeomError, ValueError):
    """An argument lies outside the domain of an operation."""


class QuadratureError(WPGeomError):
    """A quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class ResonanceError(WPGeomError):
    """(L - m)^-1 was requested on a field with mass at eigenvalues <= m."""

    def __init__(self, eigenvalue: float, mass: float, shift: float):
        super().__init__(
            f"resonance violation: eigenvalue {eigenvalue:.6g} <= {-shift:.6g} "
            f"carries component mass {mass:.3e}"
        )
        self.eigenvalue = eigenvalue
        self.mass = mass


class ConvergenceError(WPGeomError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = list(history or [])


def fingerprint(*arrays: Any) -> str:
    """Short content hash of arrays and scalars, used as report provenance."""
    h = hashlib.sha256()
    for a in arrays:
        arr = np.ascontiguousarray(np.asarray(a))
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()[:16]


@dataclass
class BoundReport:
    """Outcome of checking ``lhs >= rhs`` (or an identity, as ``margin = -|error|``).

    ``passed`` holds exactly when ``margin >= -slack_used``.  ``hard`` marks
    identities and exact statements; soft reports carry discretization slack.
    """

    name: str
    anchor: str
    lhs: float
    rhs: float
    margin: float
    slack_used: float
    provenance: dict[str, Any] = field(default_factory=dict)
    hard: bool = True
    details: dict[str, Any] = field(default_factory=dict)
    passed: bool = field(init=False)

    def __post_init__(self):
        self.lhs = float(self.lhs)
        self.rhs = float(self.rhs)
        self.margin = float(self.margin)
        self.slack_used = float(self.slack_used)
        self.passed = bool(self.margin >= -self.slack_used)
        if not self.provenance:
            self.provenance = {"inputs": "none"}

    @classmethod
    def inequality(cls, name, anchor, lhs, rhs, slack, **kw) -> "BoundReport":
        return cls(name, anchor, lhs, rhs, float(lhs) - float(rhs), slack, **kw)

    @classmethod
    def identity(cls, name, anchor, lhs, rhs, tol, **kw) -> "BoundReport":
        err = abs(complex(lhs) - complex(rhs))
        return cls(name, anchor, abs(complex(lhs)), abs(complex(rhs)), -err, tol, **kw)

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self))

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name} ({self.anchor}): margin={self.margin:.3e} "
                f"slack={self.slack_used:.1e}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj: Any) -> str:
    """Deterministic JSON encoding (sorted keys, complex as [re, im])."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2)
