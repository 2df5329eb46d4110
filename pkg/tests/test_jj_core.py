from __future__ import annotations

import math

import numpy as np
import pytest

from jpgsim.constants import PHI0
from jpgsim.jj_core import (IvCurve, JunctionArrayParams, RsjDriveSpec, StepControl, compute_iv_curve,
                            extract_pulses, find_first_step, find_locking_range, fit_gaussian_pulse, shapiro_voltage,
                            simulate_rsj)


@pytest.fixture(scope="module")
def paper():
    return JunctionArrayParams.paper_device()


def test_phi0_codata():
    assert PHI0 == pytest.approx(2.067833848e-15, rel=1e-9)


def test_params_validation():
    with pytest.raises(ValueError):
        JunctionArrayParams(0.0, 1.0)
    with pytest.raises(ValueError):
        JunctionArrayParams(1e-3, -1.0)
    with pytest.raises(ValueError):
        JunctionArrayParams(1e-3, 1.0, n_junctions=0)
    with pytest.raises(ValueError):
        JunctionArrayParams(1e-3, 1.0, beta_c=0.01, intrinsic_capacitance=1.0)


def test_characteristic_time_and_frequency_agree(paper):
    assert paper.characteristic_time * paper.characteristic_frequency == pytest.approx(1.0, abs=1e-15)
    assert paper.characteristic_time == pytest.approx(PHI0 / (3.05e-3 * 6.93e-3))


def test_capacitance_consistent_with_beta_c(paper):
    c = paper.capacitance
    p2 = JunctionArrayParams(3.05e-3, 6.93e-3, 4650, 0.01, intrinsic_capacitance=c)
    assert p2.capacitance == c


def test_shapiro_voltage_examples():
    # independent evaluation with the CODATA flux quantum
    assert shapiro_voltage(4650, 2.679e9) == pytest.approx(4650 * 2.067833848e-15 * 2.679e9, rel=1e-9)
    assert shapiro_voltage(4650, 2.679e9) == pytest.approx(25.76e-3, abs=1e-5)
    assert shapiro_voltage(1, 3e9) == PHI0 * 3e9
    diff = shapiro_voltage(4650, 2.679e9) - shapiro_voltage(4649, 2.679e9)
    assert diff == pytest.approx(5.54e-6, rel=1e-3)
    with pytest.raises(ValueError):
        shapiro_voltage(0, 1e9)


def test_no_drive_no_bias_is_static():
    p = JunctionArrayParams(1e-3, 1.0)
    tr = simulate_rsj(p, RsjDriveSpec(i_dc=0.0, i_ac=0.0, drive_ratio=0.2, duration=50.0))
    assert np.all(tr.phase == 0.0)
    assert np.all(tr.voltage == 0.0)


def test_overdamped_dc_voltage_matches_closed_form():
    p = JunctionArrayParams(1e-3, 1.0, beta_c=0.01)
    tr = simulate_rsj(p, RsjDriveSpec(i_dc=1.5, i_ac=0.0, drive_ratio=0.2, duration=400.0))
    # average over whole slips so the window does not bias the mean
    ph = tr.phase
    levels = 2 * np.pi * np.arange(np.ceil(ph[len(ph) // 4] / (2 * np.pi)), np.floor(ph[-1] / (2 * np.pi)))
    tk = np.interp(levels, ph, tr.theta)
    v_mean = 2 * np.pi * (len(tk) - 1) / (tk[-1] - tk[0])
    assert v_mean == pytest.approx(math.sqrt(1.5 ** 2 - 1), rel=1e-4)


def test_voltage_is_second_josephson_relation():
    p = JunctionArrayParams(1e-3, 1.0, beta_c=0.01)
    tr = simulate_rsj(p, RsjDriveSpec(i_dc=1.2, i_ac=0.3, drive_ratio=0.2, duration=100.0))
    # theta = 2 pi t / tau, V = (Phi0 / 2 pi) dphi/dt
    tau = p.characteristic_time
    np.testing.assert_allclose(tr.time, tr.theta * tau / (2 * np.pi))
    np.testing.assert_allclose(tr.voltage, PHI0 / (2 * np.pi) * tr.dphase * (2 * np.pi / tau))


def test_beta_c_zero_rejected():
    p = JunctionArrayParams(1e-3, 1.0, beta_c=0.0)
    with pytest.raises(ValueError):
        simulate_rsj(p, RsjDriveSpec(i_dc=1.0, i_ac=0.0, drive_ratio=0.2, duration=10.0))


def test_drive_spec_validation():
    with pytest.raises(ValueError):
        RsjDriveSpec(i_dc=1.0, i_ac=0.0, drive_ratio=0.0, duration=1.0)
    with pytest.raises(ValueError):
        RsjDriveSpec(i_dc=1.0, i_ac=0.0, drive_ratio=0.2, duration=0.0)
    with pytest.raises(ValueError):
        RsjDriveSpec(i_dc=math.inf, i_ac=0.0, drive_ratio=0.2, duration=1.0)
    with pytest.raises(ValueError):
        StepControl(rtol=0.0)


def test_iv_plateau_at_shapiro_voltage(paper):
    f = 2.679e9
    grid = np.linspace(1.5e-3, 2.2e-3, 8)
    iv = compute_iv_curve(paper, 0.8, f, grid, n_periods=30)
    assert np.all(np.diff(iv.current) > 0)
    lock = find_locking_range(iv, f)
    assert lock is not None
    sel = (iv.current >= lock[0]) & (iv.current <= lock[1])
    assert np.all(np.abs(iv.voltage[sel] - shapiro_voltage(4650, f)) <= PHI0 * f / 2)


def test_iv_array_scaling_exact(paper):
    single = JunctionArrayParams(paper.critical_current, paper.normal_resistance, 1, paper.beta_c)
    grid = [0.5e-3, 1.9e-3, 2.8e-3]
    a = compute_iv_curve(paper, 0.8, 2.685e9, grid, n_periods=10)
    b = compute_iv_curve(single, 0.8, 2.685e9, grid, n_periods=10)
    np.testing.assert_array_equal(a.voltage, 4650 * b.voltage)


def test_iv_zero_drive_has_no_plateau(paper):
    grid = np.linspace(0.5e-3, 3.5e-3, 13)
    iv = compute_iv_curve(paper, 0.0, 2.679e9, grid, n_periods=20)
    assert find_locking_range(iv, 2.679e9) is None


def test_iv_threads_deterministic(paper):
    grid = np.linspace(1.0e-3, 2.5e-3, 6)
    a = compute_iv_curve(paper, 0.8, 2.685e9, grid, n_periods=10)
    b = compute_iv_curve(paper, 0.8, 2.685e9, grid[::-1], n_periods=10, threads=3)
    np.testing.assert_array_equal(a.bias_points, b.bias_points)


def test_iv_empty_grid_rejected(paper):
    with pytest.raises(ValueError):
        compute_iv_curve(paper, 0.8, 2.685e9, [])


def _synthetic_iv(voltages, currents, n=4650, f=2.679e9):
    v = np.asarray(voltages, float)
    return IvCurve(bias_points=np.column_stack([currents, v]), drive_frequency=f, n_junctions=n,
                   drive_amplitude=0.8, pulses_per_period=np.zeros(v.size), failed=np.zeros(v.size, bool))


def test_locking_range_constructed_plateau():
    f = 2.679e9
    vs = shapiro_voltage(4650, f)
    cur = np.linspace(0, 3e-3, 31)
    v = np.where((cur >= 1.2e-3) & (cur <= 2.0e-3), vs, 2 * vs)
    lo, hi = find_locking_range(_synthetic_iv(v, cur), f)
    assert lo == pytest.approx(1.2e-3)
    assert hi == pytest.approx(2.0e-3)


def test_locking_range_flat_zero_is_none():
    cur = np.linspace(0, 3e-3, 11)
    assert find_locking_range(_synthetic_iv(np.zeros(11), cur), 2.679e9) is None
    with pytest.raises(ValueError):
        find_locking_range(_synthetic_iv(np.zeros(11), cur), 2.679e9, voltage_tolerance=0.0)


def test_extract_pulses_trivial_cases():
    assert extract_pulses(np.zeros(100), 0.1) == []
    t = np.linspace(-1, 1, 201)
    v = np.exp(-0.5 * (t / 0.1) ** 2)
    w = extract_pulses(v, 0.5)
    assert len(w) == 1
    assert w[0].start <= 100 < w[0].stop
    with pytest.raises(ValueError):
        extract_pulses(v, 0.0)


def test_fit_exact_gaussian():
    sigma = 17e-12
    t = np.linspace(-100e-12, 100e-12, 201)
    v = 1e-3 * np.exp(-0.5 * (t / sigma) ** 2)
    fit = fit_gaussian_pulse(t, v)
    assert fit.sigma == pytest.approx(sigma, rel=1e-6)
    assert fit.center == pytest.approx(0.0, abs=1e-15)
    assert fit.area == pytest.approx(1e-3 * sigma * math.sqrt(2 * math.pi), rel=1e-4)


def test_fit_rejects_short_window():
    with pytest.raises(ValueError):
        fit_gaussian_pulse(np.arange(4.0), np.ones(4))


def _locked_trace(n_periods, spp=512):
    p = JunctionArrayParams(1e-3, 1.0, beta_c=0.01)
    step = find_first_step(p, 0.6, 0.2)
    assert step is not None
    i_dc = 0.5 * sum(step)
    return p, simulate_rsj(p, RsjDriveSpec.for_periods(i_dc, 0.6, 0.2, n_periods, samples_per_period=spp))


def test_seven_pulses_for_seven_periods():
    p, tr = _locked_trace(7)
    assert len(extract_pulses(tr.voltage, 0.5 * tr.voltage.max())) == 7


def test_pulse_area_quantized():
    p, tr = _locked_trace(12)
    n0 = 6 * 512
    v, t = tr.voltage[n0:], tr.time[n0:]
    for w in extract_pulses(v, 0.5 * v.max())[1:-1]:
        area = np.trapezoid(v[w.slice()], t[w.slice()])
        assert area == pytest.approx(PHI0, rel=0.01)


def test_integrator_tolerance_halving():
    p = JunctionArrayParams.paper_device()
    r = p.drive_ratio(2.685e9)
    means = []
    for rtol in (1e-8, 5e-9):
        sc = StepControl(rtol=rtol, atol=1e-11)
        tr = simulate_rsj(p, RsjDriveSpec.for_periods(1.9e-3 / p.critical_current, 0.8, r, 20, step_control=sc))
        means.append((tr.phase[-1] - tr.phase[len(tr.phase) // 2]) / (tr.theta[-1] - tr.theta[len(tr.theta) // 2]))
    assert abs(means[0] - means[1]) < 1e-8
