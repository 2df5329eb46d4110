from __future__ import annotations

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from jpgsim.experiments import RbConfig, gate_unitary, generate_rb_sequences, spam_fidelity
from jpgsim.fidelity import digitization_infidelity, leakage_infidelity, power_dissipation
from jpgsim.jj_core import JunctionArrayParams, shapiro_voltage
from jpgsim.qubit_sim import QubitModel, evolve_discrete
from jpgsim.waveform import GATE_LABELS, JitterModel, apply_jitter, build_drive, build_pulse_train, phase_for_axis

FAST = settings(max_examples=40, deadline=None)


@FAST
@given(st.integers(1, 10_000), st.floats(1e8, 2e10))
def test_shapiro_linear(n, f):
    assert math.isclose(shapiro_voltage(2 * n, f), 2 * shapiro_voltage(n, f), rel_tol=1e-14)
    assert math.isclose(shapiro_voltage(n, 3 * f), 3 * shapiro_voltage(n, f), rel_tol=1e-14)


@FAST
@given(st.integers(1, 5000), st.integers(2, 50))
def test_leakage_inverse_square(nu, c):
    assert math.isclose(leakage_infidelity(c * nu), leakage_infidelity(nu) / c ** 2, rel_tol=1e-12)


@FAST
@given(st.integers(2, 100_000))
def test_digitization_decreasing(nu):
    assert digitization_infidelity(nu + 1) < digitization_infidelity(nu)


@FAST
@given(st.integers(1, 20_000), st.floats(1e-4, 1e-2), st.floats(1e9, 1e10), st.floats(0.0, 0.5))
def test_power_linear(n, ic, f, eta):
    p = JunctionArrayParams(ic, 6.93e-3, n)
    base = power_dissipation(p, f, eta).on_chip_power
    assert math.isclose(power_dissipation(p, f, 2 * eta).on_chip_power, 2 * base, rel_tol=1e-12, abs_tol=1e-30)
    assert math.isclose(power_dissipation(p, 2 * f, eta).on_chip_power, 2 * base, rel_tol=1e-12, abs_tol=1e-30)


@FAST
@given(st.sampled_from(["X", "Y", "-X", "-Y"]), st.integers(2, 12))
def test_phase_codes_in_range(axis, k):
    assert 0 <= phase_for_axis(axis, k) < 2 * math.pi


@FAST
@given(st.lists(st.sampled_from(sorted(GATE_LABELS)), max_size=6), st.integers(1, 60).map(lambda n: 2 * n),
       st.integers(4, 32), st.integers(2, 4))
def test_program_sample_counts(gates, nu_pi, spp, k):
    prog = build_drive(gates, nu_pi, spp, k)
    assert prog.samples().size == prog.total_samples
    for g, seg in zip(gates, prog.segments):
        frac = GATE_LABELS[g][1]
        if GATE_LABELS[g][0] is None:
            assert seg.n_samples(spp) == (nu_pi + 2) * spp
        else:
            assert seg.n_periods == (nu_pi if frac == 1.0 else nu_pi // 2)
            assert seg.lead_idle == seg.trail_idle == spp


@FAST
@given(st.floats(0.0, 0.5), st.lists(st.floats(0, 2 * math.pi), min_size=1, max_size=30))
def test_discrete_trace_and_positivity(dth, axes):
    tr = evolve_discrete(QubitModel(), dth, 2, len(axes), axes)
    assert np.all(np.abs(tr.trace - 1) < 1e-9)
    assert np.linalg.eigvalsh(tr.states[-1]).min() > -1e-9


@FAST
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_spam_arithmetic(a, b):
    assert spam_fidelity(a, b) == 1.0 - a - b


@FAST
@given(st.sampled_from(sorted(GATE_LABELS)), st.floats(-0.1, 0.1))
def test_gate_unitary_is_unitary(label, eps):
    u = gate_unitary(label, eps)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0, 1]))
def test_rb_recovery_hits_pole(seed, pole):
    for s in generate_rb_sequences(RbConfig(lengths=(1, 9, 33), sequences_per_length=5, seed=seed,
                                            target_pole=pole)):
        u = np.eye(2, dtype=complex)
        for g in s.all_gates:
            u = gate_unitary(g) @ u
        assert abs(u[pole, 0]) ** 2 > 1 - 1e-9


@FAST
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["drive", "per_junction"]))
def test_jitter_seed_determinism(seed, mode):
    tr = build_pulse_train(50, 20e-12, 2.685e9)
    m = JitterModel(mode, 3e-12, 4650, seed)
    a, b = apply_jitter(tr, m), apply_jitter(tr, m)
    np.testing.assert_array_equal(a.times, b.times)
    assert np.all(np.diff(a.times) > 0)
