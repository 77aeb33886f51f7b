"""Compiled fast path for the control law used inside the simulation loop.

Mirrors :func:`ptsmc.controller.control_input` operation for operation on
raw coefficient arrays; the jet-based implementation stays the reference and
the two are cross-checked in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_SIN_ARCTAN = 0
KIND_EXP_COMPLEMENT = 1


@njit(cache=True)
def _cauchy(a, b, out):
    K = a.shape[0]
    for k in range(K):
        acc = 0.0
        for i in range(k + 1):
            acc += a[i] * b[k - i]
        out[k] = acc


@njit(cache=True)
def _pow(a, p, out):
    K = a.shape[0]
    a0 = a[0]
    out[0] = a0**p
    for k in range(1, K):
        acc = 0.0
        for j in range(1, k + 1):
            acc += ((p + 1.0) * j - k) * a[j] * out[k - j]
        out[k] = acc / (k * a0)


@njit(cache=True)
def _exp(a, out):
    K = a.shape[0]
    out[0] = math.exp(a[0])
    for k in range(1, K):
        acc = 0.0
        for j in range(1, k + 1):
            acc += j * a[j] * out[k - j]
        out[k] = acc / k


@njit(cache=True)
def _div(num, den, out):
    K = num.shape[0]
    for k in range(K):
        acc = num[k]
        for j in range(1, k + 1):
            acc -= den[j] * out[k - j]
        out[k] = acc / den[0]


@njit(cache=True)
def _radial(s, K1, m, y, direction):
    """``||s||**m`` and ``s / ||s||**m`` through the parallel/perpendicular split (see ``jet_radial``)."""
    p = s.shape[0]
    r0 = 0.0
    for v in range(p):
        r0 += s[v, 0] ** 2
    r0 = math.sqrt(r0)
    u = np.empty(p)
    for v in range(p):
        u[v] = s[v, 0] / r0
    a = np.zeros(K1)
    for i in range(K1):
        for v in range(p):
            a[i] += u[v] * s[v, i]
    a[0] = r0
    q = np.empty((p, K1))
    for v in range(p):
        for i in range(K1):
            q[v, i] = s[v, i] - u[v] * a[i]
        q[v, 0] = 0.0
    tmp = np.empty(K1)
    qq = np.zeros(K1)
    for v in range(p):
        _cauchy(q[v], q[v], tmp)
        qq += tmp
    aa = np.empty(K1)
    _cauchy(a, a, aa)
    rho = np.empty(K1)
    _div(qq, aa, rho)
    rho[0] += 1.0
    up = np.empty(K1)
    down = np.empty(K1)
    _pow(rho, 0.5 * m, up)
    _pow(rho, -0.5 * m, down)
    am = np.empty(K1)
    _pow(a, m, am)
    _cauchy(am, up, y)
    a_par = np.empty(K1)
    a_perp = np.empty(K1)
    _pow(a, 1.0 - m, a_par)
    _pow(a, -m, a_perp)
    for v in range(p):
        _cauchy(q[v], a_perp, tmp)
        tmp += u[v] * a_par
        _cauchy(tmp, down, direction[v])


@njit(cache=True)
def _recip_slope(kind, y, out):
    K = y.shape[0]
    if kind == KIND_SIN_ARCTAN:
        tmp = np.empty(K)
        _cauchy(y, y, tmp)
        tmp[0] += 1.0
        _pow(tmp, 1.5, out)
    else:
        _exp(y, out)


@njit(cache=True)
def _stack(coeffs, m, T_c, kind, delta_num, tops, norms):
    """Evaluate the surface stack; returns the outer surface and a bitmask of floored levels."""
    p, n = coeffs.shape
    s = coeffs.copy()
    singular = 0
    for k in range(n - 1):
        K1 = n - k  # coefficient count of s_k
        norms[k] = math.sqrt(np.sum(s[:, 0] ** 2))
        N = np.zeros(K1)
        tmp = np.empty(K1)
        for v in range(p):
            _cauchy(s[v, :K1], s[v, :K1], tmp)
            N += tmp
        g = np.zeros((p, K1))
        if N[0] < delta_num * delta_num:
            if m[k] >= 1.0:
                singular |= 1 << k
        else:
            y = np.empty(K1)
            direction = np.empty((p, K1))
            _radial(s[:, :K1], K1, m[k], y, direction)
            R = np.empty(K1)
            _recip_slope(kind, y, R)
            R /= m[k] * T_c
            for v in range(p):
                _cauchy(direction[v], R, tmp)
                g[v] = tmp
        fact = 1.0
        for i in range(2, K1):
            fact *= i
        for v in range(p):
            tops[k, v] = g[v, K1 - 1] * fact
        nxt = np.zeros_like(s)
        for v in range(p):
            for i in range(K1 - 1):
                nxt[v, i] = (i + 1) * s[v, i + 1] + g[v, i]
        s = nxt
    outer = s[:, 0].copy()
    norms[n - 1] = math.sqrt(np.sum(outer**2))
    return outer, singular


@njit(cache=True)
def control_kernel(e_der, bias, binv, m_nom, T_c, kind, eps, switching, gate, u_max, u_prev_norm,
                   delta_num, delta_slide):
    """Return ``(u, m_eff, norms, outer, switched, singular_mask)``.

    ``e_der`` holds raw error derivatives with shape ``(channels, n)`` and
    ``bias = f - y_d^(n)``.
    """
    p, n = e_der.shape
    coeffs = e_der.copy()
    fact = 1.0
    for i in range(1, n):
        fact *= i
        coeffs[:, i] /= fact
    tops = np.zeros((n, p))
    norms = np.zeros(n)
    m_eff = m_nom.copy()
    outer, singular = _stack(coeffs, m_eff, T_c, kind, delta_num, tops, norms)
    switched = False
    if switching and (not gate or u_prev_norm > u_max):
        for k in range(n - 1):
            if norms[k + 1] > delta_slide and norms[k] <= eps and m_eff[k] != 1.0:
                m_eff[k] = 1.0
                switched = True
        if switched:
            outer, singular = _stack(coeffs, m_eff, T_c, kind, delta_num, tops, norms)
    acc = bias.copy()
    for k in range(n - 1):
        acc += tops[k]
    onorm = norms[n - 1]
    if onorm >= delta_num:
        ml = m_eff[n - 1]
        y = onorm**ml
        if kind == KIND_SIN_ARCTAN:
            R = (1.0 + y * y) ** 1.5
        else:
            R = math.exp(y)
        acc += R * outer / (ml * T_c * y)
    u = -(binv @ acc)
    return u, m_eff, norms, outer, switched, singular


@njit(cache=True)
def rk4_chain(x, u_eff, a, b, d0, d1, d2, dt):
    """RK4 for the linear chain with ``u`` held and disturbance samples at t, t+dt/2, t+dt."""
    n, p = x.shape
    bu = b @ u_eff

    def rhs(z, dval):
        dz = np.empty_like(z)
        for i in range(n - 1):
            dz[i] = z[i + 1]
        last = bu + dval
        for i in range(n):
            last = last + a[i] * z[i]
        dz[n - 1] = last
        return dz

    k1 = rhs(x, d0)
    k2 = rhs(x + 0.5 * dt * k1, d1)
    k3 = rhs(x + 0.5 * dt * k2, d1)
    k4 = rhs(x + dt * k3, d2)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
