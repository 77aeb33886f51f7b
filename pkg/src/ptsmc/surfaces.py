"""Recursive predefined-time sliding surfaces.

``s_0 = e`` and ``s_{k+1} = s_k' + g_k(s_k)`` with the correction term

    g_k(s) = 1 / (m_k T_c) * R(||s||**m_k) * s / ||s||**m_k,   R = 1 / W'

Every level is carried as a jet so the time derivatives that the control law
needs are read off directly.  Each level consumes one derivative, so ``s_k``
has order ``n - 1 - k`` when the error jet has order ``n - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ptsmc.jets import Jet, jet_norm_sq, jet_radial, zero_jet
from ptsmc.stability import WFunction, w_deriv_inverse, w_jet

if TYPE_CHECKING:
    from ptsmc.controller import ControllerConfig

SINGULAR_BASE = "singular_base"


@dataclass
class SurfaceStack:
    levels: list[Jet]
    corrections: list[Jet]
    m_effective: list[float]
    n: int
    events: list[str] = field(default_factory=list)

    def norms(self) -> list[float]:
        return [float(np.linalg.norm(s.coeffs[:, 0])) for s in self.levels]

    @property
    def outer(self) -> np.ndarray:
        return self.levels[-1].coeffs[:, 0]


def build_error_jets(state, desired) -> Jet:
    """Error jet ``e^(i) = x_{i+1} - y_d^(i)`` for ``i = 0..n-1``.

    ``state`` has shape ``(n, channels)``; ``desired`` holds ``y_d`` and its
    derivatives with shape ``(n + 1, channels)`` (or at least ``n`` rows).
    """
    x = np.atleast_2d(np.asarray(state, dtype=float))
    yd = np.atleast_2d(np.asarray(desired, dtype=float))
    n, p = x.shape
    if yd.shape[0] < n or yd.shape[1] != p:
        raise ValueError(f"desired derivatives {yd.shape} do not match state {x.shape}")
    return Jet.from_derivatives((x - yd[:n]).T)


def correction_term(s: Jet, m: float, T_c: float, w: WFunction, delta_num: float = 1e-12):
    """Jet of ``g(s)``; zero inside the numerical floor.  Returns ``(jet, hit_floor)``."""
    norm_sq = jet_norm_sq(s)
    if norm_sq.coeffs[0] < delta_num * delta_num:
        return zero_jet(s.order, (s.coeffs.shape[0],)), True
    y, direction = jet_radial(s, m)
    return direction * (w_jet(w, y) * (1.0 / (m * T_c))), False


def eval_stack(e_jet: Jet, cfg: ControllerConfig, w: WFunction, m_effective=None) -> SurfaceStack:
    n = cfg.n
    if e_jet.order < n - 1:
        raise ValueError(f"error jet of order {e_jet.order} cannot feed a stack of order {n}")
    m_eff = list(cfg.m) if m_effective is None else list(m_effective)
    levels = [e_jet.truncate(n - 1)]
    corrections = []
    events = []
    for k in range(n - 1):
        s = levels[-1]
        g, at_origin = correction_term(s, m_eff[k], cfg.T_c, w, cfg.delta_num)
        if at_origin and m_eff[k] >= 1.0:
            # s/||s|| has no limit at the origin; zero is used instead
            events.append(f"{SINGULAR_BASE}:{k}")
        corrections.append(g)
        levels.append(s.shift() + g.truncate(s.order - 1))
    return SurfaceStack(levels=levels, corrections=corrections, m_effective=m_eff, n=n, events=events)


def switch_exponents(s_norms, cfg: ControllerConfig, u_norm_prev: float = 0.0) -> list[float]:
    """Effective exponents after the singularity-avoiding switch.

    Level ``k < n - 1`` drops to ``m_k = 1`` while its successor is still
    reaching (``||s_{k+1}|| > delta_slide``) and ``||s_k|| <= eps``.  With the
    gate enabled, ``eps`` is only active when the previous control norm
    exceeded ``u_max``.
    """
    m = list(cfg.m)
    if not cfg.switching_enabled:
        return m
    if cfg.gate_enabled and not u_norm_prev > cfg.u_max:
        return m
    eps = cfg.epsilon
    for k in range(cfg.n - 1):
        reaching = s_norms[k + 1] > cfg.delta_slide
        if reaching and s_norms[k] <= eps:
            m[k] = 1.0
    return m


def sliding_phase_term(s_last, m_last: float, cfg: ControllerConfig, w: WFunction) -> np.ndarray:
    """Reaching-law term ``g_{n-1}(s_{n-1})`` as a plain vector."""
    s = np.asarray(s_last, dtype=float)
    norm = float(np.linalg.norm(s))
    if norm < cfg.delta_num:
        return np.zeros_like(s)
    y = norm**m_last
    return w_deriv_inverse(w, y) * s / (m_last * cfg.T_c * y)
