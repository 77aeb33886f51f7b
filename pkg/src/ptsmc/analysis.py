"""Settling times, reaching-time predictions, chattering and parameter sweeps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ptsmc.controller import ConfigError, validate
from ptsmc.plant import BLOWUP_THRESHOLD, Scenario, SimulationResult, simulate
from ptsmc.stability import WFunction, w_value

SETTLE_TOL = 1e-2
# Sliding counts as detected once the outer surface is within this plot-scale band.
SLIDE_TOL = 1e-2


def settling_time(result: SimulationResult, tol: float = SETTLE_TOL) -> float | None:
    """First time after which ``||e||`` stays below ``tol`` up to ``t_end``.

    ``None`` means not settled, which includes runs that stopped early on a blow-up.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if result.blew_up or len(result.e_norm) == 0:
        return None
    above = np.flatnonzero(~(result.e_norm < tol))
    if above.size == 0:
        return 0.0
    if above[-1] == len(result.e_norm) - 1:
        return None
    return float(result.t_full[above[-1] + 1])


def predicted_reaching_time(w: WFunction, V0: float, m: float, T_c: float) -> float:
    """``T_c (W(V0**m) - W(0))``, never more than ``T_c``."""
    if not V0 >= 0:
        raise ValueError(f"V0 must be non-negative, got {V0}")
    wf = WFunction(w.kind, m)
    return T_c * (w_value(wf, V0**m) - w_value(wf, 0.0))


def chatter_metric(u, s_norm=None, slide_tol: float = SLIDE_TOL) -> float:
    """Total variation ``sum ||u[i+1] - u[i]||`` of a control history.

    With ``s_norm`` (outer surface norm per sample) the sum starts at the
    first sample where ``s_norm <= slide_tol``; NaN if sliding never starts.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] < 2:
        raise ValueError("need at least two control samples")
    start = 0
    if s_norm is not None:
        hits = np.flatnonzero(np.asarray(s_norm) <= slide_tol)
        if hits.size == 0:
            return math.nan
        start = int(hits[0])
    return float(np.sum(np.linalg.norm(np.diff(u[start:], axis=0), axis=1)))


def result_chatter(result: SimulationResult, slide_tol: float = SLIDE_TOL) -> float:
    if len(result.u_full) < 2:
        return math.nan
    return chatter_metric(result.u_full, result.s_outer_norm, slide_tol)


def singularity_onset(result: SimulationResult) -> float | None:
    return result.blowup_time


@dataclass
class SweepRow:
    m: tuple[float, ...]
    settling_time: float | None
    bound: float
    max_u: float
    chatter: float
    blowup_time: float | None = None
    singular_events: int = 0
    error: str = ""

    @property
    def blew_up(self) -> bool:
        return self.blowup_time is not None

    @property
    def within_bound(self) -> bool:
        return self.settling_time is not None and self.settling_time <= self.bound


@dataclass
class SweepReport:
    name: str
    rows: list[SweepRow] = field(default_factory=list)

    COLUMNS = ("m", "settling_time", "bound", "within_bound", "max_u", "chatter", "blowup_time",
               "singular_events", "error")

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            out.append({
                "m": r.m, "settling_time": r.settling_time, "bound": r.bound, "within_bound": r.within_bound,
                "max_u": r.max_u, "chatter": r.chatter, "blowup_time": r.blowup_time,
                "singular_events": r.singular_events, "error": r.error,
            })
        return out


def _run_row(args) -> SweepRow:
    template, m, tol, allow_invalid, threshold = args
    cfg = template.cfg.replace(m=m)
    bound = cfg.n * cfg.T_c
    sc = replace(template, cfg=cfg, x0=template.x0.copy())
    try:
        res = simulate(sc, allow_invalid=allow_invalid, blowup_threshold=threshold)
    except ConfigError:
        reason = "; ".join(f.message for f in validate(cfg).failures())
        return SweepRow(cfg.m, None, bound, math.nan, math.nan, error=reason)
    return SweepRow(
        m=cfg.m,
        settling_time=settling_time(res, tol),
        bound=bound,
        max_u=res.max_u,
        chatter=result_chatter(res),
        blowup_time=res.blowup_time,
        singular_events=res.count("singular_base"),
    )


def sweep(template: Scenario, m_values, *, tol: float = SETTLE_TOL, allow_invalid: bool = False,
          workers: int = 1, blowup_threshold: float = BLOWUP_THRESHOLD) -> SweepReport:
    """One simulation per exponent setting; a failing row never aborts the rest."""
    m_values = list(m_values)
    if not m_values:
        raise ValueError("sweep needs at least one m value")
    jobs = [(template, m, tol, allow_invalid, blowup_threshold) for m in m_values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row, jobs))
    else:
        rows = [_run_row(j) for j in jobs]
    return SweepReport(template.name, rows)
