import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptsmc.analysis import (
    SweepReport,
    chatter_metric,
    predicted_reaching_time,
    result_chatter,
    settling_time,
    sweep,
)
from ptsmc.plant import simulate, tracking_scenario
from ptsmc.stability import WFunction, WKind

SA = WFunction(WKind.SIN_ARCTAN)


def fake_result(t, e_norm, blowup_time=None):
    return SimpleNamespace(t_full=np.asarray(t, float), e_norm=np.asarray(e_norm, float),
                           blowup_time=blowup_time, blew_up=blowup_time is not None)


def test_settling_time_stays_below():
    t = np.arange(6) * 0.1
    assert settling_time(fake_result(t, [1, 0.5, 0.001, 0.02, 0.001, 0.001])) == pytest.approx(0.4)
    assert settling_time(fake_result(t, [0.001] * 6)) == 0.0


def test_settling_time_not_settled():
    t = np.arange(4) * 0.1
    assert settling_time(fake_result(t, [1, 0.001, 0.001, 0.5])) is None
    assert settling_time(fake_result(t, [0.001] * 4, blowup_time=0.3)) is None


def test_settling_time_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        settling_time(fake_result([0.0], [0.0]), tol=0.0)


def test_predicted_reaching_time_examples():
    assert predicted_reaching_time(SA, 1.0, 0.5, 1.0) == pytest.approx(1 / math.sqrt(2), rel=1e-14)
    assert predicted_reaching_time(SA, 0.0, 0.5, 1.0) == 0.0
    with pytest.raises(ValueError):
        predicted_reaching_time(SA, -1.0, 0.5, 1.0)


@settings(max_examples=200, deadline=None)
@given(kind=st.sampled_from(list(WKind)), a=st.floats(0, 1e3), b=st.floats(0, 1e3),
       m=st.floats(0.05, 1.0), T_c=st.floats(1e-2, 10))
def test_predicted_reaching_time_is_monotone_and_bounded(kind, a, b, m, T_c):
    w = WFunction(kind)
    lo, hi = sorted((a, b))
    t_lo, t_hi = predicted_reaching_time(w, lo, m, T_c), predicted_reaching_time(w, hi, m, T_c)
    assert 0.0 <= t_lo <= t_hi <= T_c


def test_chatter_examples():
    assert chatter_metric(np.full(10, 3.0)) == 0.0
    assert chatter_metric([0.0, 0.0, 1.0, 1.0]) == 1.0
    assert chatter_metric([[0.0, 0.0], [3.0, 4.0]]) == 5.0
    with pytest.raises(ValueError):
        chatter_metric([1.0])


def test_chatter_counts_from_sliding_onset():
    u = [5.0, 0.0, 1.0, 0.0]
    assert chatter_metric(u, s_norm=[1.0, 1e-3, 1e-3, 1e-3]) == 2.0
    assert math.isnan(chatter_metric(u, s_norm=[1.0] * 4))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50), st.floats(-1e3, 1e3))
def test_chatter_is_shift_invariant_and_non_negative(u, c):
    u = np.asarray(u)
    base = chatter_metric(u)
    assert base >= 0
    assert chatter_metric(u + c) == pytest.approx(base, rel=1e-9, abs=1e-6)


def test_result_chatter_on_a_run():
    res = simulate(tracking_scenario(2, 0.3, t_end=1.5))
    assert result_chatter(res) >= 0


def test_sweep_rows_and_errors():
    template = tracking_scenario(2, 0.3, t_end=1.0)
    report = sweep(template, [0.3, 0.9])
    ok, bad = report.rows
    assert ok.error == "" and ok.settling_time is not None and ok.within_bound
    assert "m0" in bad.error and bad.settling_time is None
    assert list(report.records()[0]) == list(SweepReport.COLUMNS)


def test_sweep_reports_blowups():
    report = sweep(tracking_scenario(2, 0.3, t_end=0.2), [0.3], blowup_threshold=10.0)
    assert report.rows[0].blew_up and not report.rows[0].within_bound


def test_sweep_workers_give_identical_rows():
    template = tracking_scenario(2, 0.3, t_end=0.3)
    serial = sweep(template, [0.2, 0.3])
    pooled = sweep(template, [0.2, 0.3], workers=2)
    # repr so that NaN chatter compares equal
    assert repr(serial.records()) == repr(pooled.records())


def test_empty_sweep_is_an_error():
    with pytest.raises(ValueError):
        sweep(tracking_scenario(2, 0.3), [])
