"""Nonsingular predefined-time sliding mode control law for chains of integrators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from ptsmc.stability import WFunction, WKind
from ptsmc.surfaces import (
    SurfaceStack,
    build_error_jets,
    eval_stack,
    sliding_phase_term,
    switch_exponents,
)


class ConfigError(ValueError):
    pass


@dataclass
class ControllerConfig:
    n: int
    T_c: float
    m: tuple[float, ...]
    epsilon: float = 1e-4
    u_max: float = 15.0
    gate_enabled: bool = True
    switching_enabled: bool = True
    delta_num: float = 1e-12
    delta_slide: float = 1e-6
    w_kind: WKind = WKind.SIN_ARCTAN

    def __post_init__(self):
        if isinstance(self.m, (int, float)):
            self.m = (float(self.m),) * int(self.n)
        self.m = tuple(float(v) for v in self.m)
        self.w_kind = WKind(self.w_kind)

    @property
    def w(self) -> WFunction:
        # per-level exponents are passed explicitly; only the kind matters here
        return WFunction(self.w_kind)

    def replace(self, **changes) -> ControllerConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return ControllerConfig(**kw)


@dataclass
class Finding:
    field: str
    ok: bool
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(f.ok for f in self.findings)

    def failures(self) -> list[Finding]:
        return [f for f in self.findings if not f.ok]

    def __str__(self):
        return "\n".join(f"{'PASS' if f.ok else 'FAIL'} {f.field}: {f.message}" for f in self.findings)


def _positive(name, value) -> Finding:
    ok = isinstance(value, (int, float)) and math.isfinite(value) and value > 0
    return Finding(name, ok, f"{name} = {value} {'> 0' if ok else 'must be > 0'}")


def validate(cfg: ControllerConfig) -> ValidationReport:
    """Check the nonsingular exponent range ``0 < m_k <= 1/(n-k)`` and positivity of the gains."""
    rep = ValidationReport()
    n = cfg.n
    if not isinstance(n, int) or n < 1:
        rep.findings.append(Finding("n", False, f"plant order must be an integer >= 1, got {n}"))
        return rep
    if len(cfg.m) != n:
        rep.findings.append(Finding("m", False, f"expected {n} exponents, got {len(cfg.m)}"))
        return rep
    for k, mk in enumerate(cfg.m[:-1]):
        bound = 1.0 / (n - k)
        ok = 0.0 < mk <= bound + 1e-12
        rep.findings.append(
            Finding(f"m{k}", ok, f"m{k} = {mk:g}; 0 < m{k} <= 1/{n - k} = {bound:.6g} required")
        )
    last = cfg.m[-1]
    rep.findings.append(
        Finding(f"m{n - 1}", 0.0 < last < 1.0, f"m{n - 1} = {last:g}; 0 < m{n - 1} < 1 required")
    )
    for name in ("T_c", "epsilon", "u_max", "delta_num", "delta_slide"):
        rep.findings.append(_positive(name, getattr(cfg, name)))
    return rep


def robust_term(d_hat, s_last, b) -> np.ndarray:
    """Discontinuous disturbance-rejection input ``-b^-1 ||d_hat|| sign(s_{n-1})``.

    The sign is chosen so that the term opposes the surface, which is what
    makes the outer Lyapunov derivative non-positive; ``sign(0) = 0``.
    """
    d_hat = np.asarray(d_hat, dtype=float)
    s = np.asarray(s_last, dtype=float)
    mag = float(np.linalg.norm(d_hat))
    if mag == 0.0:
        return np.zeros_like(s)
    return -np.linalg.solve(np.asarray(b, dtype=float), mag * np.sign(s))


@dataclass
class ControlOutput:
    u: np.ndarray
    u_r: np.ndarray
    stack: SurfaceStack
    m_effective: list[float]
    switched: bool
    events: list[str]


def control_input(f, b, state, desired, cfg: ControllerConfig, w: WFunction | None = None,
                  u_prev_norm: float = 0.0, d_hat=None) -> ControlOutput:
    """Evaluate the control law at one instant.

    ``f`` is the drift vector and ``b`` the input matrix at the current state,
    ``state`` has shape ``(n, channels)`` and ``desired`` holds ``y_d`` with
    its first ``n`` derivatives, shape ``(n + 1, channels)``.
    """
    w = w or cfg.w
    n = cfg.n
    desired = np.atleast_2d(np.asarray(desired, dtype=float))
    e_jet = build_error_jets(state, desired)

    stack = eval_stack(e_jet, cfg, w)
    m_eff = switch_exponents(stack.norms(), cfg, u_prev_norm)
    switched = m_eff != list(cfg.m)
    if switched:
        stack = eval_stack(e_jet, cfg, w, m_eff)

    # s_{n-1}' = e^(n) + sum_k g_k^(n-1-k); impose s_{n-1}' = -g_{n-1}(s_{n-1})
    acc = np.asarray(f, dtype=float) - desired[n]
    for k, g in enumerate(stack.corrections):
        acc = acc + g.derivative(n - 1 - k)
    acc = acc + sliding_phase_term(stack.outer, m_eff[-1], cfg, w)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    u = -np.linalg.solve(b, acc)

    if d_hat is None:
        u_r = np.zeros_like(u)
    else:
        u_r = robust_term(d_hat, stack.outer, b)
    return ControlOutput(u=u, u_r=u_r, stack=stack, m_effective=m_eff, switched=switched,
                         events=list(stack.events))


class Controller:
    """Stateful wrapper feeding the previous control norm into the chattering gate."""

    def __init__(self, cfg: ControllerConfig, w: WFunction | None = None):
        self.cfg = cfg
        self.w = w or cfg.w
        self.u_prev_norm = 0.0

    def reset(self):
        self.u_prev_norm = 0.0

    def __call__(self, f, b, state, desired, d_hat=None) -> ControlOutput:
        out = control_input(f, b, state, desired, self.cfg, self.w, self.u_prev_norm, d_hat)
        self.u_prev_norm = float(np.linalg.norm(out.u))
        return out
