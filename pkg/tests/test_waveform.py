from __future__ import annotations

import json
import math

import numpy as np
import pytest

from jpgsim.constants import PHI0
from jpgsim.waveform import (JitterModel, apply_jitter, build_drive, build_pulse_train, pattern_duration,
                             phase_for_axis, train_from_program)


def test_phase_codes():
    assert phase_for_axis("X", 2) == 0.0
    assert phase_for_axis("X", 5) == 0.0
    assert phase_for_axis("Y", 2) == pytest.approx(math.pi / 4)
    assert phase_for_axis("-X", 2) == pytest.approx(1.5 * math.pi)
    assert phase_for_axis("-Y", 2) == pytest.approx(math.pi / 4 + 1.5 * math.pi)
    assert phase_for_axis("Y", 3) == pytest.approx(math.pi / 6)
    with pytest.raises(ValueError):
        phase_for_axis("Y", 1)
    with pytest.raises(ValueError):
        phase_for_axis("Z", 2)


def test_xpi_program():
    prog = build_drive(["X_pi"], 352, 24, 2)
    (seg,) = prog.segments
    assert seg.n_periods == 352
    assert seg.phase == 0.0
    assert seg.n_samples(24) == 354 * 24
    assert prog.total_samples == 354 * 24


def test_idle_matches_xpi_length():
    idle = build_drive(["I"], 352, 24, 2)
    xpi = build_drive(["X_pi"], 352, 24, 2)
    assert idle.segments[0].n_periods == 0
    assert idle.total_samples == xpi.total_samples
    assert np.all(idle.samples() == 0)


def test_half_pi_pair_phases():
    prog = build_drive(["X_pi/2", "Y_pi/2"], 352, 24, 2)
    assert [s.n_periods for s in prog.segments] == [176, 176]
    assert prog.segments[1].phase == pytest.approx(math.pi / 4)
    assert prog.half_pulse_residual == 0.0


def test_odd_nu_pi_rounding():
    with pytest.raises(ValueError):
        build_drive(["X_pi/2"], 351, rounding="strict")
    prog = build_drive(["X_pi/2"], 351, rounding="floor")
    assert prog.segments[0].n_periods == 175
    assert prog.half_pulse_residual == 0.5
    # pi gates alone never need rounding
    assert build_drive(["X_pi"], 351, rounding="strict").segments[0].n_periods == 351


def test_build_drive_errors():
    with pytest.raises(ValueError):
        build_drive(["Z_pi"], 352)
    with pytest.raises(ValueError):
        build_drive(["X_pi"], 352, k=1)


def test_sample_count_exact():
    prog = build_drive(["X_pi", "Y_pi/2", "I", "-X_pi/2", "-Y_pi"], 352, 24, 2)
    assert prog.samples().size == prog.total_samples
    for s in prog.segments:
        assert 0 <= s.phase < 2 * math.pi


def test_y_then_x_restores_reference():
    # the Y delay is taken from the segment's own idle budget, so the next X starts on the reference grid
    a = build_drive(["Y_pi", "X_pi"], 20, 24, 2).samples()
    b = build_drive(["X_pi", "X_pi"], 20, 24, 2).samples()
    n = 22 * 24
    np.testing.assert_array_equal(a[n:], b[n:])
    np.testing.assert_array_equal(a[:n], np.roll(b[:n], 3))


def test_sample_rate_and_durations():
    assert build_drive([], 352, 24, 2, 2.68e9).sample_rate == pytest.approx(64.32e9)
    prog = build_drive(["X_pi"], 352, 24, 2, 2.685e9)
    assert pattern_duration(prog, active_only=True) == pytest.approx(131.1e-9, abs=0.05e-9)
    assert pattern_duration(prog) == pytest.approx(354 / 2.685e9)
    assert pattern_duration(build_drive([], 352)) == 0.0


def test_program_json_roundtrip_fields():
    prog = build_drive(["X_pi/2", "Y_pi/2"], 352)
    d = json.loads(prog.to_json())
    assert d["sample_rate_Hz"] == prog.sample_rate
    assert [s["label"] for s in d["segments"]] == ["X_pi/2", "Y_pi/2"]


def test_pulse_train_examples():
    tr = build_pulse_train(352, 35e-12, 2.685e9)
    assert len(tr) == 352
    assert tr.span == pytest.approx(131e-9, abs=0.2e-9)
    assert np.all(tr.areas == PHI0)
    assert len(build_pulse_train(0, 35e-12, 2.685e9)) == 0
    two = build_pulse_train(2, 35e-12, 2.685e9)
    assert two.times[1] - two.times[0] == pytest.approx(1 / 2.685e9, rel=1e-14)


def test_pulse_train_start_phase_and_validation():
    f = 2.685e9
    tr = build_pulse_train(3, 10e-12, f, start_phase=math.pi)
    assert tr.times[0] == pytest.approx(0.5 / f)
    with pytest.raises(ValueError):
        build_pulse_train(-1, 10e-12, f)
    with pytest.raises(ValueError):
        build_pulse_train(3, 0.0, f)


def test_sampled_rendering_area():
    f = 2.685e9
    tr = build_pulse_train(3, 20e-12, f)
    t = np.linspace(-0.5 / f, 3 / f, 20001)
    assert np.trapezoid(tr.sampled(t), t) == pytest.approx(3 * PHI0, rel=1e-6)


def test_train_from_program_follows_phase_delay():
    prog = build_drive(["X_pi", "Y_pi"], 10, 24, 2, 2.685e9)
    tr = train_from_program(prog, 20e-12)
    assert len(tr) == 20
    dt = 1 / prog.sample_rate
    assert tr.times[0] == pytest.approx(24 * dt)
    # second segment starts after 12 periods plus one idle period plus the 3-sample Y delay
    assert tr.times[10] == pytest.approx((12 * 24 + 24 + 3) * dt)


def test_jitter_zero_is_identity():
    tr = build_pulse_train(10, 20e-12, 2.685e9)
    assert apply_jitter(tr, JitterModel("drive", 0.0)) is tr


def test_jitter_drive_statistics():
    tr = build_pulse_train(10_000, 20e-12, 2.685e9)
    j = apply_jitter(tr, JitterModel("drive", 3e-12, seed=1))
    shifts = j.times - tr.times
    assert shifts.std() == pytest.approx(3e-12, rel=0.05)
    np.testing.assert_array_equal(j.sigmas, tr.sigmas)


def test_jitter_per_junction_statistics():
    # 1e5 draws of the arrival shift
    tr =build_pulse_train(100_000, 20e-12, 2.685e9)
    j = apply_jitter(tr, JitterModel("per_junction", 3e-12, n_junctions=4650, seed=2))
    assert (j.times - tr.times).std() == pytest.approx(3e-12 / math.sqrt(4650), rel=0.02)
    assert 3e-12 / math.sqrt(4650) == pytest.approx(0.044e-12, rel=0.01)
    np.testing.assert_allclose(j.sigmas, math.hypot(20e-12, 3e-12))


def test_jitter_centroid_oracle_small_array():
    # independent check of the central-limit width with explicit per-junction draws
    rng = np.random.default_rng(3)
    n_j = 100
    c = rng.normal(0.0, 3e-12, size=(20_000, n_j)).mean(axis=1)
    assert c.std() == pytest.approx(3e-12 / math.sqrt(n_j), rel=0.03)


def test_jitter_deterministic_and_pure():
    tr = build_pulse_train(100, 20e-12, 2.685e9)
    before = tr.times.copy()
    a = apply_jitter(tr, JitterModel("drive", 3e-12, seed=5))
    b = apply_jitter(tr, JitterModel("drive", 3e-12, seed=5))
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(tr.times, before)


def test_jitter_model_validation():
    with pytest.raises(ValueError):
        JitterModel("drive", -1e-12)
    with pytest.raises(ValueError):
        JitterModel("other", 1e-12)
    with pytest.raises(ValueError):
        JitterModel("per_junction", 1e-12, n_junctions=0)


def test_csv_exports(tmp_path):
    prog = build_drive(["X_pi/2"], 4, 8, 2)
    prog.to_csv(tmp_path / "p.csv")
    rows = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    assert rows.shape == (prog.total_samples, 2)
    tr = build_pulse_train(3, 10e-12, 2.685e9)
    tr.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "arrival_time_s,sigma_s,area_Vs"
