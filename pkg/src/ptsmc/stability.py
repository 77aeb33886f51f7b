"""Predefined-time generator functions ``W``.

Both built-in generators act on the scalar ``y = ||x||**m``.  The controller
only ever needs the reciprocal slope ``R(y) = 1 / W'(y)``, which shapes the
gradient flow ``x' = -(1 / (m T_c)) R(||x||**m) x / ||x||**m``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ptsmc.jets import Jet, SingularBaseError


class WKind(str, enum.Enum):
    SIN_ARCTAN = "sin_arctan"
    EXP_COMPLEMENT = "exp_complement"


@dataclass(frozen=True)
class WFunction:
    """A generator ``W(y)`` together with the exponent ``m`` in ``y = ||x||**m``."""

    kind: WKind = WKind.SIN_ARCTAN
    m: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", WKind(self.kind))
        if not (0.0 < self.m <= 1.0):
            raise ValueError(f"exponent m must lie in (0, 1], got {self.m}")


def _check_y(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise ValueError(f"W is defined on finite y >= 0, got {y}")
    return y


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def w_value(w: WFunction, y):
    y = _check_y(y)
    if w.kind is WKind.SIN_ARCTAN:
        # sin(arctan(y)) without the trig round trip
        return _out(y / np.sqrt(1.0 + y * y))
    return _out(-np.expm1(-y))


def w_deriv(w: WFunction, y):
    y = _check_y(y)
    if w.kind is WKind.SIN_ARCTAN:
        return _out((1.0 + y * y) ** -1.5)
    return _out(np.exp(-y))


def w_deriv_inverse(w: WFunction, y):
    """Reciprocal slope ``1 / W'(y)``, evaluated in closed form."""
    y = _check_y(y)
    if w.kind is WKind.SIN_ARCTAN:
        return _out((1.0 + y * y) ** 1.5)
    return _out(np.exp(y))


def w_jet(w: WFunction, y_jet: Jet) -> Jet:
    """Taylor coefficients of ``t -> 1 / W'(y(t))`` along the path ``y_jet``."""
    y0 = np.asarray(y_jet.coeffs[..., 0])
    if np.any(y0 < 0) or not np.all(np.isfinite(y0)):
        raise SingularBaseError(f"W is defined on y >= 0, got y0={y0}")
    if w.kind is WKind.SIN_ARCTAN:
        return (y_jet * y_jet + 1.0) ** 1.5
    return y_jet.exp()


@dataclass
class AdmissibilityReport:
    kind: WKind
    checks: dict[str, bool] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]


LIMIT_THRESHOLD = 1.0 - 1e-3


def _tail_limit(y, W):
    # Aitken extrapolation over grid points near y_max/4, y_max/2, y_max.
    if y[-1] <= 0 or y.size < 3:
        return float(W[-1])
    idx = [int(np.searchsorted(y, y[-1] / d)) for d in (4.0, 2.0)] + [y.size - 1]
    a, b, c = (float(W[min(i, y.size - 1)]) for i in idx)
    denom = (c - b) - (b - a)
    if len(set(idx)) < 3 or denom == 0.0:
        return c
    return c - (c - b) ** 2 / denom


def check_admissibility(w: WFunction, grid, *, value_fn=None, deriv_fn=None) -> AdmissibilityReport:
    """Numerically check the generator conditions on a sorted grid of ``y`` values.

    ``value_fn``/``deriv_fn`` override the built-in evaluators so that broken
    generators can be fed through the same checks.
    """
    value_fn = value_fn or (lambda y: w_value(w, y))
    deriv_fn = deriv_fn or (lambda y: w_deriv(w, y))
    y = np.asarray(grid, dtype=float)
    rep = AdmissibilityReport(kind=w.kind)
    if y.size == 0 or not np.all(np.isfinite(y)) or np.any(np.diff(y) < 0):
        rep.checks["grid"] = False
        rep.notes["grid"] = "grid must be non-empty, finite and sorted"
        return rep

    W = np.array([value_fn(v) for v in y])
    dW = np.array([deriv_fn(v) for v in y])
    off_zero = y > 0

    rep.checks["range"] = bool(np.all((W[off_zero] > 0) & (W[off_zero] < 1)))
    rep.checks["zero_only_at_origin"] = bool(np.all((W == 0) == (y == 0)))
    limit = _tail_limit(y, W)
    rep.checks["limit_to_one"] = bool(W[-1] >= LIMIT_THRESHOLD or abs(limit - 1.0) <= 1.0 - LIMIT_THRESHOLD)
    rep.notes["limit_to_one"] = (
        f"W({y[-1]:g}) = {W[-1]:.6f}, extrapolated limit {limit:.6f}, threshold {LIMIT_THRESHOLD}"
    )
    rep.checks["positive_derivative"] = bool(np.all(dW > 0))
    if not rep.checks["positive_derivative"]:
        bad = y[dW <= 0]
        rep.notes["positive_derivative"] = f"W'(y) <= 0 at y = {bad[:5].tolist()}"

    with np.errstate(divide="ignore"):
        R = 1.0 / dW
    if y.size >= 3 and np.all(np.isfinite(R)):
        d1 = np.diff(R) / np.diff(y)
        d2 = np.diff(d1)
        rep.checks["finite_control"] = bool(np.all(d1 > 0) and np.all(d2 > 0))
    else:
        rep.checks["finite_control"] = False
        rep.notes["finite_control"] = "reciprocal slope not finite on grid or grid too short"
    return rep


def settling_time_bound(w: WFunction, x0_norm: float, T_c: float) -> float:
    """Settling time ``T_c (W(||x0||**m) - W(0))`` of the scalar gradient flow."""
    return T_c * (w_value(w, x0_norm**w.m) - w_value(w, 0.0))
