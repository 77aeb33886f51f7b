"""Independent references for the control law (no jets involved) and test state families."""

from __future__ import annotations

import functools

import numpy as np
import sympy as sp

from ptsmc.controller import ControllerConfig, control_input
from ptsmc.stability import WFunction, WKind


def recip_slope(kind, y):
    return (1 + y * y) ** 1.5 if kind is WKind.SIN_ARCTAN else np.exp(y)


def recip_slope_prime(kind, y):
    return 3 * y * np.sqrt(1 + y * y) if kind is WKind.SIN_ARCTAN else np.exp(y)


def first_correction(e, m, T_c, kind):
    r = np.linalg.norm(e)
    y = r**m
    return recip_slope(kind, y) * e / (m * T_c * y)


def second_order_sliding_control(e, f, yd_dd, b, m, T_c, kind):
    """Closed-form input on ``s_1 = 0`` for the second-order plant.

    With ``g(e) = c(|e|) e`` and ``e' = -g(e)`` the derivative of ``g`` along
    the motion is ``-(R/(m T_c^2 y^2)) ((1-m)/m R + y R'(y)) e``, ``y = |e|^m``.
    """
    y = np.linalg.norm(e) ** m
    R = recip_slope(kind, y)
    g_dot = -(R / (m * T_c**2 * y**2)) * ((1 - m) / m * R + y * recip_slope_prime(kind, y)) * e
    return -np.linalg.solve(b, f - yd_dd + g_dot)


@functools.lru_cache(maxsize=None)
def symbolic_control(n: int, p: int, kind: WKind):
    """Lambdified ``u(E, f, yd_n, m..., T_c)`` from symbolic differentiation of the surface recursion.

    ``E[j, i]`` is the i-th derivative of channel j.  Time derivatives are taken
    with the chain rule ``d/dt e_{j,i} = e_{j,i+1}``; ``b = I``.
    """
    # plain symbols: real ones let sqrt(e**2) collapse to Abs, whose derivatives are distributions
    E = sp.Matrix(p, n + 1, lambda j, i: sp.Symbol(f"e_{j}_{i}"))
    ms = sp.symbols(f"m0:{n}", positive=True)
    T_c = sp.Symbol("T_c", positive=True)
    f = sp.Matrix(p, 1, lambda j, _: sp.Symbol(f"f_{j}"))
    ydn = sp.Matrix(p, 1, lambda j, _: sp.Symbol(f"yd_{j}"))

    def D(expr):
        return sum((sp.diff(expr, E[j, i]) * E[j, i + 1] for j in range(p) for i in range(n)), sp.S.Zero)

    def R(y):
        return (1 + y**2) ** sp.Rational(3, 2) if kind is WKind.SIN_ARCTAN else sp.exp(y)

    def g(s, mk):
        r = sp.sqrt(sum(si**2 for si in s))
        y = r**mk
        return [R(y) * si / (mk * T_c * y) for si in s]

    s = [E[j, 0] for j in range(p)]
    total = [f[j] - ydn[j] for j in range(p)]
    for k in range(n - 1):
        gk = g(s, ms[k])
        # derivative order n-1-k of g_k enters the input
        dg = gk
        for _ in range(n - 1 - k):
            dg = [D(c) for c in dg]
        total = [t + c for t, c in zip(total, dg)]
        s = [D(si) + gi for si, gi in zip(s, gk)]
    gl = g(s, ms[n - 1])
    total = [t + c for t, c in zip(total, gl)]
    u = [-t for t in total]
    args = list(E) + list(f) + list(ydn) + list(ms) + [T_c]
    return sp.lambdify(args, u, "math")


def symbolic_u(E, f, ydn, m, T_c, kind):
    """Evaluate :func:`symbolic_control` for numeric ``E`` of shape ``(p, n)``."""
    E = np.asarray(E, dtype=float)
    p, n = E.shape
    fn = symbolic_control(n, p, kind)
    full = np.zeros((p, n + 1))
    full[:, :n] = E
    return np.array(fn(*full.ravel(), *np.ravel(f), *np.ravel(ydn), *m, T_c), dtype=float)


def surface_state(sigma, cfg, w):
    """Error derivatives ``(1, n)`` whose surfaces take the values ``sigma`` (scalar channel).

    Level ``j`` depends on ``e^(j)`` with unit weight, so each derivative is
    fixed in turn.
    """
    from ptsmc.jets import Jet
    from ptsmc.surfaces import eval_stack

    n = cfg.n
    der = np.zeros((1, n))
    for j in range(n):
        probe = eval_stack(Jet.from_derivatives(der), cfg, w)
        der[0, j] += sigma[j] - probe.levels[j].coeffs[0, 0]
    return der


def sharpness_family(n, k):
    """``||u||`` along states with ``s_k -> 0`` and ``s_k' != 0`` when ``m_k`` exceeds its bound."""
    m = [0.3, 0.4, 0.5][-n:]
    m[k] = 1 / (n - k) + 0.2 if k < n - 1 else 1.2
    cfg = ControllerConfig(n=n, T_c=1.0, m=tuple(m), switching_enabled=False)
    w = WFunction(cfg.w_kind)
    norms = []
    for delta in (1e-2, 1e-4, 1e-6, 1e-8):
        # s_k -> 0 while its successor (hence s_k') stays at 1
        sigma = [0.0] * n
        sigma[k] = delta
        if k + 1 < n:
            sigma[k + 1] = 1.0
        der = surface_state(sigma, cfg, w)
        out = control_input(np.zeros(1), np.eye(1), der.T, np.zeros((n + 1, 1)), cfg, w)
        assert not out.events
        norms.append(float(np.linalg.norm(out.u)))
    return norms
