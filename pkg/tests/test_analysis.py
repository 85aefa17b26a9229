import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antikz.analysis import (TAU_SEARCH_GRID, BracketError, KzmTheory, SweepSpec,
                             find_tau_opt, fit_line, fit_power_law, fit_tau_opt_scaling,
                             heating_rate, quench_time_map, run_sweep)
from antikz.model import ModelParams
from antikz.observables import ObservableRecord


def _rec(tau, w2, n):
    return ObservableRecord("annealing", 1024, 1.0, tau, w2, "master-equation", n, 2 * n, 0.0)


def test_kzm_theory():
    th = KzmTheory()
    assert th.beta == 0.5
    assert th.tau_opt_exponent == pytest.approx(-2 / 3)


def test_exact_power_law():
    f = fit_power_law([(x, 3 * x**-0.5) for x in (1, 10, 100)])
    assert f.exponent == pytest.approx(-0.5, abs=1e-12)
    assert f.prefactor == pytest.approx(3.0, rel=1e-12)
    assert f.r2 == 1.0
    assert f.exponent_err >= 0 and f.prefactor_err >= 0


def test_constant_data():
    f = fit_power_law([(1, 2.0), (2, 2.0), (5, 2.0)])
    assert f.exponent == pytest.approx(0.0, abs=1e-15)
    assert 0 <= f.r2 <= 1


@pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, -2), (3, 3)], [(0, 1), (2, 2), (3, 3)]])
def test_power_law_errors(pts):
    with pytest.raises(ValueError):
        fit_power_law(pts)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(-2, 2))
def test_power_law_scale_equivariance(s, b):
    rng = np.random.default_rng(1)
    x = np.geomspace(1, 50, 6)
    y = 2.0 * x**b * np.exp(rng.normal(0, 0.05, x.size))
    f1 = fit_power_law(zip(x, y))
    f2 = fit_power_law(zip(s * x, y))
    assert f2.exponent == pytest.approx(f1.exponent, abs=1e-9)
    assert f2.prefactor == pytest.approx(f1.prefactor * s ** (-f1.exponent), rel=1e-9)
    assert f1.r2 <= 1.0


def test_heating_rate_exact_linear():
    taus = [10.0, 20.0, 40.0, 80.0]
    clean = [_rec(t, 0.0, 0.3 * t**-0.5) for t in taus]
    noisy = [_rec(t, 1e-3, 0.3 * t**-0.5 + 0.002 * t) for t in taus]
    h = heating_rate(noisy, clean)
    assert h.rate == pytest.approx(0.002, rel=1e-12)
    assert h.residual < 1e-12


def test_heating_rate_bias_bound():
    r, eps = 0.002, 1e-6
    taus = [10.0, 20.0, 40.0, 80.0, 160.0]
    clean = [_rec(t, 0.0, 0.0) for t in taus]
    noisy = [_rec(t, 1e-3, r * t + eps * t * t) for t in taus]
    h = heating_rate(noisy, clean)
    assert abs(h.rate - r) <= eps * max(taus)


def test_heating_rate_window():
    taus = [10.0, 100.0, 1000.0]
    clean = [_rec(t, 0.0, 0.01) for t in taus]
    noisy = [_rec(t, 1e-2, 0.01 + 1e-4 * t) for t in taus]
    h = heating_rate(noisy, clean)
    assert h.taus == (10.0,)
    with pytest.raises(ValueError):
        heating_rate([_rec(t, 1.0, 0.1) for t in taus], clean)


def test_heating_rate_grid_mismatch():
    with pytest.raises(ValueError):
        heating_rate([_rec(1.0, 1e-3, 0.1)], [_rec(2.0, 0.0, 0.1)])


def test_fit_line():
    f = fit_line([1, 2, 3, 4], [3, 5, 7, 9])
    assert (f.slope, f.intercept, f.r2) == (pytest.approx(2), pytest.approx(1), 1.0)


def _analytic(r, c):
    return lambda tau: r * tau + c * tau**-0.5


def test_tau_opt_analytic_model():
    spec = SweepSpec(tau_grid=TAU_SEARCH_GRID)
    tau, n = find_tau_opt(1e-3, spec, objective=_analytic(0.01, 1.0))
    assert tau == pytest.approx(50 ** (2 / 3), rel=1e-2)
    assert 50 ** (2 / 3) == pytest.approx(13.57, abs=5e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, -1), st.floats(-0.5, 0.5))
def test_tau_opt_analytic_any_constants(log_r, log_c):
    r, c = 10**log_r, 10**log_c
    exact = (c / (2 * r)) ** (2 / 3)
    grid = tuple(np.geomspace(exact / 30, exact * 30, 9))
    tau, _ = find_tau_opt(1e-3, SweepSpec(tau_grid=grid), objective=_analytic(r, c))
    assert tau == pytest.approx(exact, rel=1e-2)


def test_tau_opt_no_noise():
    with pytest.raises(BracketError):
        find_tau_opt(0.0, SweepSpec(tau_grid=TAU_SEARCH_GRID), objective=lambda t: t**-0.5)


def test_tau_opt_not_bracketed_reports_slopes():
    spec = SweepSpec(tau_grid=(1.0, 2.0, 4.0, 8.0))
    with pytest.raises(BracketError, match=r"start slope -.*end slope -"):
        find_tau_opt(1e-3, spec, objective=lambda t: t**-0.5)


def test_tau_opt_tie_keeps_smaller():
    spec = SweepSpec(tau_grid=(1.0, 2.0, 4.0, 8.0, 16.0))
    tau, n = find_tau_opt(1e-3, spec, objective=lambda t: 0.0 if 2.0 <= t <= 8.0 else 1.0)
    assert tau == 2.0 and n == 0.0


def test_tau_opt_scaling_synthetic():
    c = 1.0
    w2 = (1e-5, 1e-4, 1e-3, 1e-2)
    objective = lambda tau, w: w * tau + c * tau**-0.5  # noqa: E731
    grid = tuple(np.geomspace(1, 1e5, 16))
    fit = fit_tau_opt_scaling(w2, SweepSpec(tau_grid=grid), objective=objective, rtol=1e-6)
    assert fit.exponent == pytest.approx(-2 / 3, abs=1e-4)
    assert fit.prefactor == pytest.approx((c / 2) ** (2 / 3), rel=1e-3)


def test_tau_opt_scaling_preconditions():
    spec = SweepSpec(tau_grid=TAU_SEARCH_GRID)
    with pytest.raises(ValueError):
        fit_tau_opt_scaling((1e-4, 1e-3, 1e-2), spec)
    with pytest.raises(ValueError):
        fit_tau_opt_scaling((1e-4, 2e-4, 5e-4, 1e-3), spec)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(tau_grid=())
    with pytest.raises(ValueError):
        SweepSpec(tau_grid=(2.0, 1.0))
    with pytest.raises(ValueError):
        SweepSpec(tau_grid=(1.0,), w2_grid=(1e-3, 1e-3))


def test_run_sweep_order_and_callback():
    seen = []
    spec = SweepSpec(tau_grid=(2.0, 4.0), w2_grid=(0.0, 0.01),
                     base=ModelParams(N=16, tau=1.0))
    recs = run_sweep(spec, on_record=seen.append)
    assert [(r.w2, r.tau) for r in recs] == [(0.0, 2.0), (0.0, 4.0), (0.01, 2.0), (0.01, 4.0)]
    assert seen == recs


def test_quench_time_map():
    assert quench_time_map(100.0) == 25.0
    assert quench_time_map(4.0) == 1.0
    with pytest.raises(ValueError):
        quench_time_map(0.0)


def test_field_ratio_linearisation():
    tau, dt = 1.0, 1e-3
    exact = (tau - 2 * dt) / (tau + 2 * dt)
    # the remainder is the second-order term 8 (dt/tau)^2 = 8e-6
    rem = exact - (1 - 4 * dt / tau)
    assert rem == pytest.approx(8 * (dt / tau) ** 2, rel=5e-3)
