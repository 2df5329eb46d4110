from __future__ import annotations

import json
import math

import numpy as np
import pytest

from jpgsim.constants import PHI0
from jpgsim.fidelity import (BudgetTerm, JPG_ATTENUATION_STACK, coherence_limit, combined_digitization_curve,
                             digitization_infidelity, jitter_infidelity, leakage_infidelity, leakage_oracle,
                             power_dissipation, pulse_width_infidelity, stage_dissipation, total_budget)
from jpgsim.jj_core import JunctionArrayParams

T1, TPHI = 34e-6, 68e-6


def test_digitization_state_fidelity():
    assert digitization_infidelity(352) == pytest.approx(math.sin(math.pi / 1408) ** 2, rel=1e-14)
    assert digitization_infidelity(352) == pytest.approx(4.98e-6, rel=1e-3)
    assert digitization_infidelity(10 ** 9) < 1e-17
    with pytest.raises(ValueError):
        digitization_infidelity(0)
    with pytest.raises(ValueError):
        digitization_infidelity(10, "other")


def test_digitization_literal_close_to_one():
    v = digitization_infidelity(352, "literal_eq_s1")
    assert v == pytest.approx(1 - math.sin(math.pi * 351.5 / 352) ** 2, rel=1e-12)
    assert v > 0.9999


@pytest.mark.parametrize("mode", ["state_fidelity", "literal_eq_s1"])
def test_digitization_monotone(mode):
    vals = [digitization_infidelity(n, mode) for n in range(2, 400)]
    if mode == "state_fidelity":
        assert np.all(np.diff(vals) < 0)
    else:
        # the literal form approaches one from below as nu grows
        assert np.all(np.diff(vals) > 0)


def test_coherence_limit_examples():
    c = coherence_limit(131e-9, T1, TPHI)
    assert 1e-3 < c.simulated < 3e-3
    assert c.n_kicks == 352
    assert coherence_limit(131e-9, math.inf, math.inf).simulated == pytest.approx(0.0, abs=1e-13)
    with pytest.raises(ValueError):
        coherence_limit(0.0, T1, TPHI)


@pytest.mark.parametrize("tg", [10e-9, 50e-9, 131e-9, 300e-9, 500e-9])
def test_coherence_analytic_vs_simulated(tg):
    c = coherence_limit(tg, T1, TPHI)
    assert abs(c.analytic - c.simulated) <= 0.3 * max(c.analytic, c.simulated)


def test_combined_curve_interior_minimum_and_trend():
    grid = range(10, 301, 5)
    base = combined_digitization_curve(grid, T1, TPHI)
    assert base.interior_minimum
    doubled = combined_digitization_curve(grid, 2 * T1, 2 * TPHI)
    assert doubled.argmin > base.argmin
    off = combined_digitization_curve(grid, math.inf, math.inf)
    assert np.all(np.diff(off.combined) < 0)
    with pytest.raises(ValueError):
        combined_digitization_curve([], T1, TPHI)


def test_leakage_anchor_and_scaling():
    assert leakage_infidelity(352) == 7e-4
    assert leakage_infidelity(704) == pytest.approx(1.75e-4, rel=1e-14)
    for nu in (50, 100, 352, 1000):
        assert leakage_infidelity(3 * nu) == pytest.approx(leakage_infidelity(nu) / 9, rel=1e-13)
    with pytest.raises(ValueError):
        leakage_infidelity(352, 0.1)
    assert leakage_infidelity(352, 0.1, extrapolate=True) == pytest.approx(7e-4 / 4)
    with pytest.raises(ValueError):
        leakage_infidelity(352, 1.5)


def test_leakage_oracle_exponent():
    p2, slope = leakage_oracle([100, 200, 400])
    assert np.all(p2 > 0)
    assert slope == pytest.approx(-2.0, abs=0.3)


def test_pulse_width_delta_limit():
    r = pulse_width_infidelity(0.005)
    assert r.nu_pi == 352
    assert r.pulse_only < 1e-5


def test_pulse_width_finite_sigma_total():
    r = pulse_width_infidelity(0.19)
    assert r.nu_pi == 352
    assert 1.3e-3 <= r.total <= 3e-3
    assert r.pulse_only == pytest.approx(r.total - r.coherence)
    assert r.pulse_only > 0
    with pytest.raises(ValueError):
        pulse_width_infidelity(0.31)


def test_pulse_width_delta_normalization_grows_nu():
    r = pulse_width_infidelity(0.19, 100, normalization="delta")
    assert r.nu_pi > 150


def test_jitter_zero_is_zero():
    j = jitter_infidelity(0.0, 5.37e9 / 2, 352, n_trials=100)
    assert j.value == 0.0


def test_jitter_per_junction_small_and_deterministic():
    kw = dict(n_trials=100, seed=11, mode="per_junction")
    a = jitter_infidelity(3e-12, 5.37e9 / 2, 352, **kw)
    b = jitter_infidelity(3e-12, 5.37e9 / 2, 352, **kw)
    assert a == b
    assert abs(a.value) < 1e-5


def test_jitter_validation():
    with pytest.raises(ValueError):
        jitter_infidelity(3e-12, 5.37e9 / 2, 352, n_trials=10)
    with pytest.raises(ValueError):
        jitter_infidelity(3e-12, 2.0e9, 352, n_trials=100)


def test_budget_sum_and_ratio():
    b = total_budget({"digitization": (5e-6, "analytic"), "pulse_width": (3e-5, "simulated"),
                      "leakage": BudgetTerm(7e-4, "scaled"), "jitter": (5e-5, "simulated"),
                      "coherence": (1.9e-3, "simulated")})
    assert b.total == pytest.approx(5e-6 + 3e-5 + 7e-4 + 5e-5 + 1.9e-3)
    assert b.ratio_to(2.1e-2) == pytest.approx(b.total / 2.1e-2)
    d = json.loads(b.to_json(2.1e-2))
    assert set(d) == {"digitization", "pulse_width", "leakage", "jitter", "coherence", "total", "measured_r",
                      "ratio_to_measured"}
    assert d["leakage"]["method"] == "scaled"


def test_budget_zero_and_validation():
    assert total_budget({}).total == 0.0
    with pytest.raises(ValueError):
        total_budget({"thermal": (1e-3, "analytic")})
    with pytest.raises(ValueError):
        BudgetTerm(1.5, "analytic")
    with pytest.raises(ValueError):
        BudgetTerm(0.1, "guessed")


def test_power_example():
    p = JunctionArrayParams.paper_device()
    rep = power_dissipation(p, 2.685e9, 0.02)
    assert rep.on_chip_power == pytest.approx(PHI0 * 4650 * 3.05e-3 * 2.685e9 * 0.02, rel=1e-14)
    assert rep.on_chip_power == pytest.approx(1.6e-6, rel=0.02)
    assert rep.output_power_dbm is None
    assert power_dissipation(p, 2.685e9, 0.0).on_chip_power == 0.0
    with pytest.raises(ValueError):
        power_dissipation(p, 2.685e9, 1.5)


def test_power_linear_in_each_factor():
    p = JunctionArrayParams(3.05e-3, 6.93e-3, 4650)
    base = power_dissipation(p, 2.685e9, 0.02).on_chip_power
    assert power_dissipation(JunctionArrayParams(3.05e-3, 6.93e-3, 9300), 2.685e9, 0.02).on_chip_power == \
        pytest.approx(2 * base)
    assert power_dissipation(JunctionArrayParams(6.1e-3, 6.93e-3, 4650), 2.685e9, 0.02).on_chip_power == \
        pytest.approx(2 * base)
    assert power_dissipation(p, 5.37e9, 0.02).on_chip_power == pytest.approx(2 * base)
    assert power_dissipation(p, 2.685e9, 0.04).on_chip_power == pytest.approx(2 * base)


def test_output_power_and_stage_map():
    p = JunctionArrayParams.paper_device()
    rep = power_dissipation(p, 2.685e9, 0.02, full_duty_output_power=1e-6)
    assert rep.output_power_dbm == pytest.approx(10 * math.log10(2e-8 / 1e-3))
    assert set(rep.stage_dissipation) == set(JPG_ATTENUATION_STACK)
    stages = stage_dissipation(1.0, {"a": 10.0, "b": 10.0})
    assert stages["a"] == pytest.approx(0.9)
    assert stages["b"] == pytest.approx(0.09)
    json.loads(rep.to_json())
