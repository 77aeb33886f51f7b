"""Chain-of-integrator MIMO plants, fixed-step RK4 and the closed-loop runner."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ptsmc.controller import ConfigError, Controller, ControllerConfig, validate
from ptsmc.stability import WFunction, WKind

BLOWUP_THRESHOLD = 1e6


class FKind(str, enum.Enum):
    ZERO = "zero"
    SECOND_ORDER_DAMPED = "second_order_damped"  # f = -x2
    THIRD_ORDER_DAMPED = "third_order_damped"  # f = -x2 - 2 x3
    LINEAR = "linear"  # f = sum_i a_i x_{i+1}


@dataclass(frozen=True)
class Disturbance:
    kind: str = "zero"  # zero | sinusoid | constant
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "sinusoid", "constant"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")

    def __call__(self, t: float) -> float:
        if self.kind == "sinusoid":
            return self.amplitude * math.sin(self.frequency * t)
        if self.kind == "constant":
            return self.amplitude
        return 0.0


@dataclass
class PlantModel:
    """``x_i' = x_{i+1}``, ``x_n' = f(x) + b (u + u_r) + d(t)`` on ``channels`` parallel chains.

    ``f`` is linear in the state blocks: ``f = sum_i a_i x_{i+1}`` with
    per-block scalar weights ``a``; ``b`` is a constant square matrix.
    """

    n: int
    channels: int
    f_kind: FKind = FKind.ZERO
    f_coeffs: tuple[float, ...] | None = None
    b: np.ndarray | None = None
    disturbance: Disturbance = field(default_factory=Disturbance)

    def __post_init__(self):
        self.f_kind = FKind(self.f_kind)
        preset = {
            FKind.ZERO: (0.0,) * self.n,
            FKind.SECOND_ORDER_DAMPED: (0.0, -1.0),
            FKind.THIRD_ORDER_DAMPED: (0.0, -1.0, -2.0),
        }
        if self.f_kind is FKind.LINEAR:
            if self.f_coeffs is None:
                raise ValueError("linear drift needs f_coeffs")
            coeffs = tuple(float(c) for c in self.f_coeffs)
        else:
            coeffs = preset[self.f_kind]
        if len(coeffs) != self.n:
            raise ValueError(f"{self.f_kind.value} drift has {len(coeffs)} weights for a plant of order {self.n}")
        self.f_coeffs = coeffs
        self.b = np.eye(self.channels) if self.b is None else np.atleast_2d(np.asarray(self.b, dtype=float))
        if self.b.shape != (self.channels, self.channels):
            raise ValueError(f"b must be {self.channels}x{self.channels}, got {self.b.shape}")
        if abs(np.linalg.det(self.b)) < 1e-12:
            raise ValueError("b must be invertible")
        self._a = np.asarray(self.f_coeffs)[:, None]

    def f(self, x, t=0.0) -> np.ndarray:
        return (self._a * x).sum(axis=0)

    def d(self, t) -> np.ndarray:
        return np.full(self.channels, self.disturbance(t))

    def rhs(self, x, t, u) -> np.ndarray:
        dx = np.empty_like(x)
        dx[:-1] = x[1:]
        dx[-1] = self.f(x, t) + self.b @ u + self.d(t)
        return dx


def step_rk4(model: PlantModel, x, u, dt: float, t: float = 0.0) -> np.ndarray:
    """Classical RK4 step with ``u`` held over the step."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    k1 = model.rhs(x, t, u)
    k2 = model.rhs(x + 0.5 * dt * k1, t + 0.5 * dt, u)
    k3 = model.rhs(x + 0.5 * dt * k2, t + 0.5 * dt, u)
    k4 = model.rhs(x + dt * k3, t + dt, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class Reference:
    """Per-channel desired outputs: ``"cos"`` for ``cos(t)`` or a constant."""

    channels: tuple = ("cos", 1.0, -5.0, 5.0)

    def derivatives(self, t: float, order: int) -> np.ndarray:
        out = np.zeros((order + 1, len(self.channels)))
        c, s = math.cos(t), math.sin(t)
        cyc = (c, -s, -c, s)
        for j, ch in enumerate(self.channels):
            if ch == "cos":
                out[:, j] = [cyc[i % 4] for i in range(order + 1)]
            else:
                out[0, j] = float(ch)
        return out

    def derivatives_grid(self, t: np.ndarray, order: int) -> np.ndarray:
        """Vectorised :meth:`derivatives`; shape ``(len(t), order + 1, channels)``."""
        t = np.asarray(t, dtype=float)
        out = np.zeros((t.size, order + 1, len(self.channels)))
        cyc = (np.cos(t), -np.sin(t), -np.cos(t), np.sin(t))
        for j, ch in enumerate(self.channels):
            if ch == "cos":
                for i in range(order + 1):
                    out[:, i, j] = cyc[i % 4]
            else:
                out[:, 0, j] = float(ch)
        return out


@dataclass
class Scenario:
    model: PlantModel
    cfg: ControllerConfig
    reference: Reference = field(default_factory=Reference)
    x0: np.ndarray | None = None  # shape (n, channels); zeros by default
    dt: float = 1e-4
    t_end: float = 3.0
    stride: int = 100
    d_hat: str = "matched"  # matched | none
    name: str = ""

    def __post_init__(self):
        if self.x0 is None:
            self.x0 = np.zeros((self.model.n, self.model.channels))
        self.x0 = np.asarray(self.x0, dtype=float).reshape(self.model.n, self.model.channels)
        if self.cfg.n != self.model.n:
            raise ValueError(f"controller order {self.cfg.n} != plant order {self.model.n}")
        if len(self.reference.channels) != self.model.channels:
            raise ValueError("reference must name one signal per channel")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class SimulationResult:
    t: np.ndarray  # sampled time grid
    x: np.ndarray  # (samples, n, channels)
    e: np.ndarray  # (samples, channels)
    u: np.ndarray  # (samples, channels)
    m_eff: np.ndarray  # (samples, n)
    flags: np.ndarray  # (samples,) bitmask, see FLAG_*
    t_full: np.ndarray  # every step
    e_norm: np.ndarray
    u_full: np.ndarray  # (steps, channels)
    s_outer_norm: np.ndarray
    events: list[tuple[float, str]]
    blowup_time: float | None
    wall_time: float
    scenario: Scenario | None = None

    @property
    def blew_up(self) -> bool:
        return self.blowup_time is not None

    @property
    def max_u(self) -> float:
        return float(np.max(np.linalg.norm(self.u_full, axis=1))) if len(self.u_full) else 0.0

    def count(self, prefix: str) -> int:
        return sum(1 for _, name in self.events if name.startswith(prefix))


FLAG_SWITCHED = 1
FLAG_SINGULAR = 2
FLAG_BLOWUP = 4


def simulate(scenario: Scenario, allow_invalid: bool = False, blowup_threshold: float = BLOWUP_THRESHOLD,
             record_switches: bool = False, fast: bool = True) -> SimulationResult:
    """Run the closed loop with zero-order hold on ``u`` until ``t_end`` or blow-up.

    ``fast`` selects the compiled control kernel; ``fast=False`` steps the
    jet-based :class:`~ptsmc.controller.Controller` instead (slow, reference).
    """
    cfg = scenario.cfg
    if not allow_invalid:
        rep = validate(cfg)
        if not rep.passed:
            raise ConfigError(str(rep))
    if fast:
        return _simulate_fast(scenario, blowup_threshold, record_switches)
    model = scenario.model
    ref = scenario.reference
    n = model.n
    ctrl = Controller(cfg)
    dt = scenario.dt
    steps = int(round(scenario.t_end / dt))
    stride = max(1, int(scenario.stride))

    x = scenario.x0.copy()
    t_full = np.empty(steps + 1)
    e_norm = np.empty(steps + 1)
    u_full = np.zeros((steps + 1, model.channels))
    s_outer = np.empty(steps + 1)
    samples = {"t": [], "x": [], "e": [], "u": [], "m": [], "flags": []}
    events: list[tuple[float, str]] = []
    blowup_time = None
    start = time.perf_counter()
    last = steps

    for i in range(steps + 1):
        t = i * dt
        yd = ref.derivatives(t, n)
        d_hat = model.d(t) if scenario.d_hat == "matched" and model.disturbance.kind != "zero" else None
        flag = 0
        try:
            out = ctrl(model.f(x, t), model.b, x, yd, d_hat)
            u = out.u + out.u_r
            finite = bool(np.all(np.isfinite(u)))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            events.append((t, f"error:{type(exc).__name__}"))
            out, u, finite = None, np.full(model.channels, np.nan), False
        e = x[0] - yd[0]
        t_full[i] = t
        e_norm[i] = float(np.linalg.norm(e))
        u_full[i] = u
        s_outer[i] = float(np.linalg.norm(out.stack.outer)) if out is not None else np.nan
        if out is not None:
            if out.switched:
                flag |= FLAG_SWITCHED
                if record_switches:
                    events.append((t, "switch"))
            if out.events:
                flag |= FLAG_SINGULAR
                events.extend((t, ev) for ev in out.events)
        if not finite or float(np.linalg.norm(u)) > blowup_threshold:
            flag |= FLAG_BLOWUP
            blowup_time = t
            events.append((t, "blowup" if finite else "nan"))
        if i % stride == 0 or flag & FLAG_BLOWUP:
            samples["t"].append(t)
            samples["x"].append(x.copy())
            samples["e"].append(e)
            samples["u"].append(u)
            samples["m"].append(out.m_effective if out is not None else [np.nan] * n)
            samples["flags"].append(flag)
        if blowup_time is not None or i == steps:
            last = i
            break
        x = step_rk4(model, x, u, dt, t)
        if not np.all(np.isfinite(x)):
            blowup_time = t + dt
            events.append((t + dt, "nan_state"))
            last = i
            break

    wall = time.perf_counter() - start
    return SimulationResult(
        t=np.asarray(samples["t"]),
        x=np.asarray(samples["x"]),
        e=np.asarray(samples["e"]),
        u=np.asarray(samples["u"]),
        m_eff=np.asarray(samples["m"], dtype=float),
        flags=np.asarray(samples["flags"], dtype=int),
        t_full=t_full[: last + 1],
        e_norm=e_norm[: last + 1],
        u_full=u_full[: last + 1],
        s_outer_norm=s_outer[: last + 1],
        events=events,
        blowup_time=blowup_time,
        wall_time=wall,
        scenario=scenario,
    )


def _simulate_fast(scenario: Scenario, blowup_threshold: float, record_switches: bool) -> SimulationResult:
    from ptsmc import _kernel

    cfg, model = scenario.cfg, scenario.model
    n, p = model.n, model.channels
    dt = scenario.dt
    steps = int(round(scenario.t_end / dt))
    stride = max(1, int(scenario.stride))
    kind = _kernel.KIND_SIN_ARCTAN if cfg.w_kind is WKind.SIN_ARCTAN else _kernel.KIND_EXP_COMPLEMENT
    m_nom = np.asarray(cfg.m, dtype=float)
    b = model.b
    binv = np.linalg.inv(b)
    a = np.asarray(model.f_coeffs, dtype=float)

    t_full = np.arange(steps + 1) * dt
    yd_all = scenario.reference.derivatives_grid(t_full, n)
    dist = model.disturbance
    matched = scenario.d_hat == "matched" and dist.kind != "zero"

    x = scenario.x0.copy()
    e_norm = np.empty(steps + 1)
    u_full = np.zeros((steps + 1, p))
    s_outer = np.empty(steps + 1)
    samples = {"t": [], "x": [], "e": [], "u": [], "m": [], "flags": []}
    events: list[tuple[float, str]] = []
    blowup_time = None
    u_prev = 0.0
    last = steps
    start = time.perf_counter()

    for i in range(steps + 1):
        t = t_full[i]
        yd = yd_all[i]
        e_der = np.ascontiguousarray((x - yd[:n]).T)
        bias = a @ x - yd[n]
        u_nom, m_eff, norms, outer, switched, singular = _kernel.control_kernel(
            e_der, bias, binv, m_nom, cfg.T_c, kind, cfg.epsilon, cfg.switching_enabled,
            cfg.gate_enabled, cfg.u_max, u_prev, cfg.delta_num, cfg.delta_slide)
        d_now = dist(t)
        u = u_nom
        if matched and d_now != 0.0:
            u = u_nom + _robust(binv, abs(d_now) * math.sqrt(p), outer)
        u_prev = float(np.linalg.norm(u_nom))
        u_norm = float(np.linalg.norm(u))
        finite = math.isfinite(u_norm)
        flag = 0
        if switched:
            flag |= FLAG_SWITCHED
            if record_switches:
                events.append((t, "switch"))
        if singular:
            flag |= FLAG_SINGULAR
            events.extend((t, f"singular_base:{k}") for k in range(n) if singular >> k & 1)
        e_norm[i] = math.sqrt(float(e_der[:, 0] @ e_der[:, 0]))
        u_full[i] = u
        s_outer[i] = norms[n - 1]
        if not finite or u_norm > blowup_threshold:
            flag |= FLAG_BLOWUP
            blowup_time = float(t)
            events.append((float(t), "blowup" if finite else "nan"))
        if i % stride == 0 or flag & FLAG_BLOWUP:
            samples["t"].append(t)
            samples["x"].append(x.copy())
            samples["e"].append(e_der[:, 0].copy())
            samples["u"].append(u)
            samples["m"].append(m_eff)
            samples["flags"].append(flag)
        if blowup_time is not None or i == steps:
            last = i
            break
        x = _kernel.rk4_chain(x, u, a, b, d_now, dist(t + 0.5 * dt), dist(t + dt), dt)
        if not np.all(np.isfinite(x)):
            blowup_time = float(t + dt)
            events.append((blowup_time, "nan_state"))
            last = i
            break

    wall = time.perf_counter() - start
    return SimulationResult(
        t=np.asarray(samples["t"]),
        x=np.asarray(samples["x"]),
        e=np.asarray(samples["e"]),
        u=np.asarray(samples["u"]),
        m_eff=np.asarray(samples["m"], dtype=float),
        flags=np.asarray(samples["flags"], dtype=int),
        t_full=t_full[: last + 1],
        e_norm=e_norm[: last + 1],
        u_full=u_full[: last + 1],
        s_outer_norm=s_outer[: last + 1],
        events=events,
        blowup_time=blowup_time,
        wall_time=wall,
        scenario=scenario,
    )


def _robust(binv, magnitude, s_last):
    return -(binv @ (magnitude * np.sign(s_last)))


@dataclass
class SettlingRecord:
    t: np.ndarray
    x: np.ndarray
    settling_time: float | None
    predicted: float


def run_scalar_law(w: WFunction, m: float, T_c: float, x0: float, dt: float = 1e-5,
                      tol: float | None = None, t_end: float | None = None) -> SettlingRecord:
    """Integrate ``x' = -(1/(m T_c)) R(|x|**m) x/|x|**m`` with RK4 and time the arrival at the origin.

    Arrival is the first step at which ``|x|`` stops shrinking, i.e. the state
    has hit the step-size floor around zero.  A threshold crossing
    ``|x| < tol`` ends the clock earlier and underestimates the settling time
    by ``T_c W(tol**m)``, which is large for small ``m``.
    """
    if x0 == 0 or not dt > 0:
        raise ValueError("need x0 != 0 and dt > 0")
    from ptsmc.stability import w_value

    t_end = 1.5 * T_c if t_end is None else t_end
    w = WFunction(w.kind, m)
    gain = 1.0 / (m * T_c)
    if w.kind is WKind.SIN_ARCTAN:
        def recip(y):
            return (1.0 + y * y) ** 1.5
    else:
        recip = math.exp

    def rhs(x):
        ax = abs(x)
        if ax == 0.0:
            return 0.0
        y = ax**m
        return -gain * recip(y) * x / y

    steps = int(round(t_end / dt))
    xs = np.empty(steps + 1)
    x = float(x0)
    settled = None
    for i in range(steps + 1):
        xs[i] = x
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        nxt = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if settled is None and (abs(nxt) >= abs(x) or (tol is not None and abs(x) < tol)):
            settled = i * dt
        x = nxt
    predicted = T_c * (w_value(w, abs(x0) ** m) - w_value(w, 0.0))
    return SettlingRecord(t=np.arange(steps + 1) * dt, x=xs, settling_time=settled, predicted=predicted)


# At rest, with the cosine channel on its reference and every constant
# channel one unit short of its target on the side of the origin.
TRACKING_X1_START = (1.0, 0.0, -4.0, 4.0)
TRACKING_REFERENCE = ("cos", 1.0, -5.0, 5.0)


def tracking_initial_state(order: int) -> np.ndarray:
    x0 = np.zeros((order, len(TRACKING_X1_START)))
    x0[0] = TRACKING_X1_START
    return x0


def _order_defaults(order: int):
    if order == 2:
        return FKind.SECOND_ORDER_DAMPED, dict(epsilon=1e-4, u_max=15.0)
    if order == 3:
        return FKind.THIRD_ORDER_DAMPED, dict(epsilon=1e-3, u_max=50.0)
    raise ValueError("stock tracking scenarios exist for order 2 and 3 only")


def tracking_scenario(order: int, m, *, gate: bool = True, switching: bool = True, dt: float | None = None,
                   t_end: float | None = None, disturbance: Disturbance | None = None,
                   x0=None, w_kind: WKind = WKind.SIN_ARCTAN) -> Scenario:
    """Four-channel second- or third-order cosine and set-point tracking with the stock gains."""
    f_kind, gains = _order_defaults(order)
    T_c = 1.0 if order == 2 else 5.0
    dt = (1e-4 if order == 2 else 1e-3) if dt is None else dt
    t_end = (3.0 if order == 2 else 18.0) if t_end is None else t_end
    model = PlantModel(order, 4, f_kind, disturbance=disturbance or Disturbance())
    cfg = ControllerConfig(order, T_c, m, gate_enabled=gate, switching_enabled=switching, w_kind=w_kind, **gains)
    x0 = tracking_initial_state(order) if x0 is None else x0
    return Scenario(model, cfg, Reference(TRACKING_REFERENCE), x0=x0, dt=dt, t_end=t_end,
                    stride=max(1, int(round(0.01 / dt))), name=f"order{order}_m{m}")


def singularity_scenario(order: int, m, *, switching: bool = False, gate: bool = True, dt: float = 1e-4,
                         t_end: float = 2.0, x0=None) -> Scenario:
    """Single channel tracking ``cos(t)`` from rest at the origin with ``T_c = 1``."""
    f_kind, gains = _order_defaults(order)
    model = PlantModel(order, 1, f_kind)
    cfg = ControllerConfig(order, 1.0, m, gate_enabled=gate, switching_enabled=switching, **gains)
    return Scenario(model, cfg, Reference(("cos",)), x0=x0, dt=dt, t_end=t_end,
                    stride=max(1, int(round(0.01 / dt))), name=f"singular_order{order}_m{m}")
