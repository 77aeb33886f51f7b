"""Truncated Taylor (jet) arithmetic in time.

A :class:`Jet` stores ``coeffs[..., k] = x^(k)(t) / k!`` for ``k = 0..K``.
Leading axes are batch axes, so a jet of shape ``(p, K + 1)`` is a vector of
``p`` channel jets sharing one order (the ``JetVector`` of the controller).

Products are Cauchy products (general Leibniz rule) and compositions with
``exp`` and real powers use the usual one-term recurrences, which is
Faa di Bruno's formula without the partition bookkeeping.
"""

from __future__ import annotations

import math

import numpy as np


class SingularBaseError(ArithmeticError):
    """Raised when a real power is taken of a jet whose base is not positive."""


class Jet:
    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1)
        if not np.all(np.isfinite(c)):
            raise ValueError("jet coefficients must be finite")
        self.coeffs = c

    @classmethod
    def _raw(cls, c):
        j = object.__new__(cls)
        j.coeffs = c
        return j

    @classmethod
    def constant(cls, value, order, shape=()):
        c = np.zeros(tuple(shape) + (order + 1,))
        c[..., 0] = value
        return cls._raw(c)

    @classmethod
    def from_derivatives(cls, derivs):
        """Build a jet from raw derivatives ``x, x', x'', ...`` along the last axis."""
        d = np.asarray(derivs, dtype=float)
        fact = np.array([math.factorial(k) for k in range(d.shape[-1])], dtype=float)
        return cls(d / fact)

    @property
    def order(self) -> int:
        return self.coeffs.shape[-1] - 1

    @property
    def value(self):
        v = self.coeffs[..., 0]
        return float(v) if v.ndim == 0 else v

    def derivatives(self) -> np.ndarray:
        """Raw time derivatives ``x^(k)`` (undo the ``1/k!`` scaling)."""
        fact = np.array([math.factorial(k) for k in range(self.order + 1)], dtype=float)
        return self.coeffs * fact

    def derivative(self, k: int):
        v = self.coeffs[..., k] * math.factorial(k)
        return float(v) if v.ndim == 0 else v

    def __len__(self):
        return self.coeffs.shape[0]

    def __getitem__(self, idx):
        # indexes batch axes only
        return Jet._raw(self.coeffs[idx])

    def __repr__(self):
        return f"Jet({self.coeffs.tolist()})"

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError(f"jet order mismatch: {self.order} vs {other.order}")
            return other.coeffs
        return None

    def __add__(self, other):
        oc = self._coerce(other)
        if oc is not None:
            return Jet._raw(self.coeffs + oc)
        c = self.coeffs.copy()
        c[..., 0] += other
        return Jet._raw(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet._raw(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        oc = self._coerce(other)
        if oc is None:
            return Jet._raw(self.coeffs * np.asarray(other, dtype=float)[..., None])
        a, b = np.broadcast_arrays(self.coeffs, oc)
        out = np.zeros(a.shape)
        for k in range(a.shape[-1]):
            out[..., k] = np.einsum("...i,...i->...", a[..., : k + 1], b[..., k::-1])
        return Jet._raw(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet._raw(self.coeffs / np.asarray(other, dtype=float)[..., None])

    def reciprocal(self):
        a = self.coeffs
        if np.any(a[..., 0] == 0):
            raise SingularBaseError("reciprocal of a jet with zero base")
        out = np.zeros(a.shape)
        out[..., 0] = 1.0 / a[..., 0]
        for k in range(1, a.shape[-1]):
            acc = np.einsum("...i,...i->...", a[..., 1 : k + 1], out[..., k - 1 :: -1])
            out[..., k] = -acc / a[..., 0]
        return Jet._raw(out)

    def __pow__(self, p):
        return jet_pow(self, p)

    def exp(self):
        a = self.coeffs
        out = np.zeros(a.shape)
        out[..., 0] = np.exp(a[..., 0])
        for k in range(1, a.shape[-1]):
            j = np.arange(1, k + 1)
            out[..., k] = np.einsum("...i,...i->...", j * a[..., 1 : k + 1], out[..., k - 1 :: -1]) / k
        return Jet._raw(out)

    def shift(self):
        """Jet of the time derivative, one order lower."""
        k = np.arange(1, self.order + 1, dtype=float)
        return Jet._raw(self.coeffs[..., 1:] * k)

    def truncate(self, order: int):
        return Jet._raw(self.coeffs[..., : order + 1].copy())

    def sum(self, axis=0):
        return Jet._raw(self.coeffs.sum(axis=axis))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))


def zero_jet(order, shape=()):
    return Jet.constant(0.0, order, shape)


def jet_add(a: Jet, b: Jet) -> Jet:
    return a + b


def jet_mul(a: Jet, b: Jet) -> Jet:
    return a * b


def jet_pow(a: Jet, p: float) -> Jet:
    """Jet of ``t -> a(t)**p`` for real ``p``; the base must stay positive.

    Uses ``k a0 h_k = sum_{j=1..k} ((p + 1) j - k) a_j h_{k-j}``, the
    coefficient form of ``(a**p)' a = p a' a**p``.
    """
    c = a.coeffs
    a0 = c[..., 0]
    if p == 1:
        return Jet._raw(c.copy())
    if np.any(a0 <= 0) or not np.all(np.isfinite(a0)):
        raise SingularBaseError(f"real power {p} of a jet with non-positive base {a0}")
    out = np.zeros(c.shape)
    out[..., 0] = a0**p
    for k in range(1, c.shape[-1]):
        j = np.arange(1, k + 1, dtype=float)
        w = (p + 1.0) * j - k
        out[..., k] = np.einsum("...i,...i->...", w * c[..., 1 : k + 1], out[..., k - 1 :: -1]) / (k * a0)
    return Jet._raw(out)


def jet_norm_sq(v: Jet) -> Jet:
    """Jet of ``sum_v s_v(t)**2`` over the leading (channel) axis."""
    if v.coeffs.ndim < 2 or v.coeffs.shape[0] == 0:
        raise ValueError("expected a non-empty jet vector of shape (channels, order + 1)")
    return (v * v).sum(axis=0)


def jet_radial(v: Jet, m: float) -> tuple[Jet, Jet]:
    """Jets of ``||v||**m`` and ``v / ||v||**m`` for a vector jet with ``v0 != 0``.

    ``v`` is split into its component ``a`` along the current direction ``u``
    and a perpendicular remainder ``q`` (``q0 = 0``), so that
    ``||v||**2 = a**2 (1 + rho)`` with ``rho = ||q||**2 / a**2``.  Going
    through ``(||v||**2)**(-m/2)`` instead loses everything to cancellation
    once ``||v0||`` is small against the higher coefficients; here motion
    along ``u`` (always the case for one channel) gives ``q = 0`` exactly.
    """
    c = v.coeffs
    if c.ndim != 2:
        raise ValueError("expected a jet vector of shape (channels, order + 1)")
    r0 = float(np.linalg.norm(c[:, 0]))
    if r0 == 0.0 or not math.isfinite(r0):
        raise SingularBaseError("radial split of a jet vector at the origin")
    u = c[:, 0] / r0
    ac = u @ c
    ac[0] = r0
    a = Jet._raw(ac)
    qc = c - u[:, None] * ac[None, :]
    qc[:, 0] = 0.0
    q = Jet._raw(qc)
    one_plus_rho = jet_norm_sq(q) / (a * a) + 1.0
    y = jet_pow(a, m) * jet_pow(one_plus_rho, 0.5 * m)
    direction = (jet_pow(a, 1.0 - m) * u + q * jet_pow(a, -m)) * jet_pow(one_plus_rho, -0.5 * m)
    return y, direction


def jet_compose_recip_deriv(w, v: Jet, m_eff: float) -> Jet:
    """Jet of ``1 / W'(y)`` along ``y(t) = ||v(t)||**m_eff``."""
    from ptsmc.stability import w_jet

    if not (0.0 < m_eff <= 1.0):
        raise ValueError(f"effective exponent must lie in (0, 1], got {m_eff}")
    y, _ = jet_radial(v, m_eff)
    return w_jet(w, y)
