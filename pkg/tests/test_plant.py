import dataclasses
import math

import numpy as np
import pytest

from ptsmc.analysis import settling_time
from ptsmc.controller import ConfigError, ControllerConfig
from ptsmc.plant import (
    Disturbance,
    FKind,
    PlantModel,
    Reference,
    Scenario,
    run_scalar_law,
    simulate,
    step_rk4,
    tracking_scenario,
)
from ptsmc.stability import WFunction, WKind

EC = WFunction(WKind.EXP_COMPLEMENT)


def test_rk4_holds_the_equilibrium():
    model = PlantModel(2, 3, FKind.SECOND_ORDER_DAMPED)
    x = np.zeros((2, 3))
    np.testing.assert_array_equal(step_rk4(model, x, np.zeros(3), 1e-3), x)


def test_rk4_pure_integrator():
    x = step_rk4(PlantModel(1, 1), np.zeros((1, 1)), np.ones(1), 0.1)
    assert x[0, 0] == pytest.approx(0.1, abs=1e-15)


def test_rk4_damped_velocity_decays_exponentially():
    model = PlantModel(2, 1, FKind.SECOND_ORDER_DAMPED)
    x = np.array([[0.0], [1.0]])
    for i in range(1000):
        x = step_rk4(model, x, np.zeros(1), 1e-3, i * 1e-3)
    assert x[1, 0] == pytest.approx(math.exp(-1.0), abs=1e-6)


def test_plant_rejects_bad_inputs():
    with pytest.raises(ValueError):
        PlantModel(2, 2, b=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        PlantModel(3, 1, FKind.SECOND_ORDER_DAMPED)
    with pytest.raises(ValueError):
        Disturbance("chirp")


def test_reference_derivatives():
    ref = Reference(("cos", 2.0))
    d = ref.derivatives(0.3, 3)
    np.testing.assert_allclose(d[:, 0], [math.cos(0.3), -math.sin(0.3), -math.cos(0.3), math.sin(0.3)])
    np.testing.assert_array_equal(d[:, 1], [2.0, 0.0, 0.0, 0.0])
    grid = ref.derivatives_grid(np.array([0.3, 1.1]), 3)
    np.testing.assert_array_equal(grid[0], d)


# -- scalar predefined-time law ---------------------------------------------------------


def test_scalar_law_example():
    rec = run_scalar_law(EC, 0.5, 0.1, 1.0)
    assert rec.predicted == pytest.approx(0.063212, rel=1e-5)
    assert rec.settling_time == pytest.approx(0.063212, rel=0.02)
    assert rec.settling_time <= 0.1


def test_scalar_law_threshold_clock_stops_early():
    # stopping at |x| < tol misses the residual T_c W(tol**m)
    rec = run_scalar_law(EC, 0.1, 0.1, 1.0, tol=1e-6)
    residual = 0.1 * (1 - math.exp(-(1e-6**0.1)))
    assert rec.predicted - rec.settling_time == pytest.approx(residual, rel=0.1)


def test_scalar_law_rejects_zero_start():
    with pytest.raises(ValueError):
        run_scalar_law(EC, 0.5, 0.1, 0.0)


# -- closed loop ------------------------------------------------------------------------


def test_invalid_exponents_need_explicit_override():
    sc = tracking_scenario(2, 0.9, t_end=0.01)
    with pytest.raises(ConfigError):
        simulate(sc)
    assert not simulate(sc, allow_invalid=True).blew_up


def test_scenario_shape_checks():
    with pytest.raises(ValueError):
        Scenario(PlantModel(2, 1), ControllerConfig(n=3, T_c=1.0, m=0.3))
    with pytest.raises(ValueError):
        Scenario(PlantModel(2, 2), ControllerConfig(n=2, T_c=1.0, m=0.3), Reference(("cos",)))


@pytest.mark.parametrize("order, m", [(2, 0.3), (3, 0.2)])
def test_step_halving_changes_settling_time_little(order, m):
    coarse = tracking_scenario(order, m)
    fine = dataclasses.replace(coarse, dt=coarse.dt / 2, stride=coarse.stride * 2, x0=coarse.x0.copy())
    t1, t2 = settling_time(simulate(coarse)), settling_time(simulate(fine))
    assert t1 is not None and t2 is not None
    assert abs(t1 - t2) / t2 < 5e-3


@pytest.mark.parametrize("order, grid", [(2, [0.1, 0.2, 0.3, 0.4, 0.5]), (3, [0.1, 0.2, 0.3])])
def test_validated_runs_are_clean_and_within_n_T_c(order, grid):
    for m in grid:
        res = simulate(tracking_scenario(order, m))
        assert not res.blew_up
        assert res.count("singular_base") == 0
        assert np.all(np.isfinite(res.u_full))
        ts = settling_time(res)
        assert ts is not None and ts <= order * res.scenario.cfg.T_c


def test_blowup_stops_the_run():
    sc = tracking_scenario(2, 0.3, t_end=0.5)
    res = simulate(sc, blowup_threshold=1.0)
    assert res.blew_up and res.blowup_time == 0.0
    assert res.t_full.size == 1
    assert settling_time(res) is None


def test_matched_disturbance_is_rejected():
    d = Disturbance("sinusoid", 0.5, 3.0)
    with_robust = simulate(tracking_scenario(2, 0.3, disturbance=d))
    assert settling_time(with_robust) is not None and settling_time(with_robust) < 2.0
    assert with_robust.e_norm[-1] < 1e-3


def test_unmatched_disturbance_leaves_residual_error():
    d = Disturbance("constant", 0.5)
    sc = dataclasses.replace(tracking_scenario(2, 0.3, disturbance=d), d_hat="none")
    res = simulate(sc)
    robust = simulate(tracking_scenario(2, 0.3, disturbance=d))
    assert robust.e_norm[-1] < res.e_norm[-1]
