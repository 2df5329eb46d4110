"""Gate infidelity budget terms and the pulse generator power model."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np
from scipy import linalg

from .constants import PHI0
from .jj_core import JunctionArrayParams
from .qubit_sim import (QubitModel, _operators, _vec, evolve_discrete, ground_state, liouvillian,
                        normalize_coupling, periodic_xpi, rotation_superop)
from .waveform import JitterModel

__all__ = [
    "digitization_infidelity",
    "CoherenceLimit",
    "coherence_limit",
    "DigitizationCurve",
    "combined_digitization_curve",
    "PulseWidthResult",
    "pulse_width_infidelity",
    "LEAKAGE_REFERENCE",
    "leakage_infidelity",
    "leakage_oracle",
    "JitterEstimate",
    "jitter_infidelity",
    "BudgetTerm",
    "InfidelityBudget",
    "total_budget",
    "PowerReport",
    "power_dissipation",
    "stage_dissipation",
    "JPG_ATTENUATION_STACK",
]

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# digitization


def digitization_infidelity(nu_pi: int, interpretation: Literal["state_fidelity", "literal_eq_s1"] = "state_fidelity"
                            ) -> float:
    """Worst-case infidelity from a +-1/2 pulse rotation error.

    ``state_fidelity`` is 1 - cos^2(pi/(4 nu_pi)) = sin^2(pi/(4 nu_pi)), the
    miss of a rotation by pi(1 +- 1/(2 nu_pi)) on a Rabi curve
    sin^2(theta/2).  ``literal_eq_s1`` evaluates the printed formula
    1 - sin^2(pi (nu_pi +- 1/2)/nu_pi), which is close to one; it is kept
    only for comparison.
    """
    if nu_pi < 1:
        raise ValueError("nu_pi must be >= 1")
    if interpretation == "state_fidelity":
        return math.sin(math.pi / (4 * nu_pi)) ** 2
    if interpretation == "literal_eq_s1":
        return max(1 - math.sin(math.pi * (nu_pi + s * 0.5) / nu_pi) ** 2 for s in (+1, -1))
    raise ValueError(f"unknown interpretation {interpretation!r}")


# ---------------------------------------------------------------------------
# coherence limit


@dataclass(frozen=True)
class CoherenceLimit:
    simulated: float
    analytic: float
    gate_time: float
    n_kicks: int


def coherence_limit(gate_time: float, T1: float, Tphi: float, *, n_kicks: int | None = None,
                    drive_frequency: float = 2.685e9) -> CoherenceLimit:
    """X_pi infidelity of an otherwise ideal kicked gate lasting ``gate_time``.

    The gate is ``n_kicks`` instantaneous rotations of pi/n_kicks, each at the
    centre of an equal sub-interval, under relaxation and dephasing only
    (rotating frame, so the kicks share one axis).  The infidelity is
    1 - P1 at the end of the gate.  The analytic estimate
    (t/3)(1/T1 + 1/T2) is returned alongside.
    """
    if gate_time <= 0 or T1 <= 0 or Tphi <= 0:
        raise ValueError("gate_time, T1 and Tphi must be positive")
    n = n_kicks if n_kicks is not None else max(1, int(round(gate_time * drive_frequency)))
    inv_t2 = 1 / (2 * T1) + 1 / Tphi
    analytic = gate_time / 3 * (1 / T1 + inv_t2)
    q = QubitModel(T1=T1, Tphi=Tphi)
    _, _, _, c_ops = _operators(q)
    L = liouvillian(np.zeros((2, 2), complex), c_ops)
    half = linalg.expm(L * gate_time / (2 * n))
    step = half @ rotation_superop(q, math.pi / n) @ half
    v = np.linalg.matrix_power(step, n) @ _vec(ground_state(2).matrix)
    return CoherenceLimit(simulated=float(1 - v[3].real), analytic=analytic, gate_time=gate_time, n_kicks=n)


@dataclass
class DigitizationCurve:
    nu_pi: np.ndarray
    digitization: np.ndarray
    coherence: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return self.digitization + self.coherence

    @property
    def argmin(self) -> int:
        return int(self.nu_pi[int(np.argmin(self.combined))])

    @property
    def interior_minimum(self) -> bool:
        i = int(np.argmin(self.combined))
        return 0 < i < self.nu_pi.size - 1


def combined_digitization_curve(nu_grid: Sequence[int], T1: float, Tphi: float, *,
                                omega_10: float = TWO_PI * 5.37e9, k: int = 2) -> DigitizationCurve:
    """Digitization plus coherence-limited infidelity versus nu_pi.

    Gate time is nu_pi drive periods at w_d = w10/k.  ``T1 = Tphi = inf``
    switches decay off.
    """
    nu = np.asarray(sorted(set(int(n) for n in nu_grid)))
    if nu.size == 0 or nu[0] < 1:
        raise ValueError("nu grid must hold integers >= 1")
    f_d = omega_10 / TWO_PI / k
    dig = np.array([digitization_infidelity(int(n)) for n in nu])
    if math.isinf(T1) and math.isinf(Tphi):
        coh = np.zeros_like(dig)
    else:
        coh = np.array([coherence_limit(n / f_d, T1, Tphi, n_kicks=int(n)).simulated for n in nu])
    return DigitizationCurve(nu_pi=nu, digitization=dig, coherence=coh)


# ---------------------------------------------------------------------------
# finite pulse width


@dataclass(frozen=True)
class PulseWidthResult:
    sigma_over_Tq: float
    nu_pi: int
    total: float
    pulse_only: float
    coherence: float
    no_decay: float
    omega_d: float


def pulse_width_infidelity(sigma_over_Tq: float, target_nu_pi: int = 352, qubit: QubitModel | None = None, *,
                           k: int = 2, normalization: Literal["finite", "delta"] = "finite",
                           margin: int = 12) -> PulseWidthResult:
    """X_pi infidelity of a Gaussian pulse train and its pulse-only part.

    ``finite`` normalizes the coupling so the train at this sigma has
    nu_pi = target; ``delta`` normalizes in the delta limit so nu_pi grows
    with sigma.  pulse_only = total - coherence_limit(nu_pi(sigma) gate
    time), the coherence limit taken on the same kick grid (one kick per
    drive period, sampled half a period after the last kick).
    """
    q = qubit or QubitModel()
    if not 0 < sigma_over_Tq <= 0.3:
        raise ValueError("sigma must lie in (0, 0.3] T_q")
    sigma = sigma_over_Tq * q.period
    if normalization == "finite":
        om = normalize_coupling(q, target_nu_pi, sigma, k)
        n_max = target_nu_pi + margin
    elif normalization == "delta":
        om = math.pi / (2 * target_nu_pi)
        n_max = int(target_nu_pi * math.exp(0.5 * (TWO_PI * sigma_over_Tq) ** 2) * 1.3) + margin
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    lossy = periodic_xpi(q, om, sigma, n_max, k)
    clean = periodic_xpi(q.without_decay(), om, sigma, n_max, k)
    nu = lossy.nu_pi
    if nu >= n_max:
        raise ValueError("scan too short to contain the first Rabi maximum")
    total = 1 - lossy.fidelity
    f_d = q.frequency / k
    coh = coherence_limit(nu / f_d, q.T1, q.Tphi, n_kicks=nu).simulated if math.isfinite(q.T1 + q.Tphi) else 0.0
    return PulseWidthResult(sigma_over_Tq=sigma_over_Tq, nu_pi=nu, total=total, pulse_only=total - coh,
                            coherence=coh, no_decay=1 - clean.fidelity, omega_d=om)


# ---------------------------------------------------------------------------
# leakage

#: anharmonicity -> (reference nu_pi, infidelity at that nu_pi)
LEAKAGE_REFERENCE: dict[float, tuple[int, float]] = {0.05: (352, 7e-4)}


def leakage_infidelity(nu_pi: int, alpha: float = 0.05, *, reference: Mapping[float, tuple[int, float]] | None = None,
                       extrapolate: bool = False) -> float:
    """Reference-anchored leakage, scaled as nu_pi^-2.

    An anharmonicity missing from the table raises unless ``extrapolate``
    is set, in which case the nearest entry is scaled by (alpha_ref/alpha)^2
    (off-resonant leakage ~ (drive/detuning)^2).
    """
    if nu_pi < 1:
        raise ValueError("nu_pi must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    table = dict(LEAKAGE_REFERENCE if reference is None else reference)
    hit = next((a for a in table if math.isclose(a, alpha, rel_tol=1e-12)), None)
    if hit is not None:
        nu_ref, val = table[hit]
        return val * (nu_ref / nu_pi) ** 2
    if not extrapolate:
        raise ValueError(f"alpha={alpha} not in the leakage reference table; pass extrapolate=True")
    a_ref = min(table, key=lambda a: abs(math.log(a / alpha)))
    nu_ref, val = table[a_ref]
    return val * (nu_ref / nu_pi) ** 2 * (a_ref / alpha) ** 2


def leakage_oracle(nu_values: Sequence[int], alpha: float = 0.05, *, k: int = 2,
                   omega_10: float = TWO_PI * 5.37e9) -> tuple[np.ndarray, float]:
    """|2> population after an X_pi of nu delta kicks on a decay-free qutrit.

    Returns the populations and the fitted power-law exponent.
    """
    q = QubitModel(omega_10=omega_10, anharmonicity_alpha=alpha, levels=3).without_decay()
    p2 = np.array([evolve_discrete(q, math.pi / n, k, int(n)).leakage[-1] for n in nu_values])
    slope = np.polyfit(np.log(np.asarray(nu_values, float)), np.log(p2), 1)[0]
    return p2, float(slope)


# ---------------------------------------------------------------------------
# timing jitter


@dataclass(frozen=True)
class JitterEstimate:
    value: float
    stderr: float
    baseline: float
    n_trials: int
    mode: str


def jitter_infidelity(sigma_jitter: float, drive_frequency: float, nu_pi: int, qubit: QubitModel | None = None, *,
                      n_trials: int = 500, seed: int = 0, mode: Literal["drive", "per_junction"] = "drive",
                      sigma_over_Tq: float = 0.19, n_junctions: int = 4650, margin: int = 8) -> JitterEstimate:
    """Mean X_pi infidelity increase from pulse timing jitter.

    Each trial draws an independent jittered train (per-trial streams
    spawned from ``seed``) and records 1 - max idle-centre P1; the
    jitter-free train gives the baseline.  The coupling is normalized so the
    clean train has nu_pi pulses.  In per-junction mode the static
    broadening is part of the calibrated pulse, so coupling and baseline
    use the broadened width and only the arrival scatter counts as jitter.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    q = qubit or QubitModel()
    k = int(round(q.frequency / drive_frequency))
    if k < 1 or not math.isclose(k * drive_frequency, q.frequency, rel_tol=1e-9):
        raise ValueError("drive frequency must be a subharmonic of the qubit frequency")
    sigma = sigma_over_Tq * q.period
    model = JitterModel(mode=mode, sigma_jitter=sigma_jitter, n_junctions=n_junctions, seed=seed)
    if mode == "drive":
        sig_eff, shift_std = sigma, sigma_jitter
    else:
        sig_eff, shift_std = math.hypot(sigma, sigma_jitter), sigma_jitter / math.sqrt(n_junctions)
    om = normalize_coupling(q, nu_pi, sig_eff, k)
    n = nu_pi + margin
    base = 1 - periodic_xpi(q, om, sig_eff, n, k).fidelity
    if sigma_jitter == 0:
        return JitterEstimate(0.0, 0.0, base, n_trials, mode)
    streams = np.random.SeedSequence(model.seed).spawn(n_trials)
    vals = np.empty(n_trials)
    for i, ss in enumerate(streams):
        shifts = np.random.default_rng(ss).normal(0.0, shift_std, n)
        vals[i] = 1 - periodic_xpi(q, om, sig_eff, n, k, shifts=shifts).fidelity
    return JitterEstimate(value=float(vals.mean() - base), stderr=float(vals.std(ddof=1) / math.sqrt(n_trials)),
                          baseline=base, n_trials=n_trials, mode=mode)


# ---------------------------------------------------------------------------
# budget


@dataclass(frozen=True)
class BudgetTerm:
    value: float
    method: Literal["analytic", "simulated", "scaled"]

    def __post_init__(self):
        if not 0 <= self.value <= 1:
            raise ValueError(f"budget term {self.value} outside [0, 1]")
        if self.method not in ("analytic", "simulated", "scaled"):
            raise ValueError(f"unknown method tag {self.method!r}")


_TERMS = ("digitization", "pulse_width", "leakage", "jitter", "coherence")


@dataclass(frozen=True)
class InfidelityBudget:
    """Independent small error terms combined by a plain sum."""

    digitization: BudgetTerm
    pulse_width: BudgetTerm
    leakage: BudgetTerm
    jitter: BudgetTerm
    coherence: BudgetTerm

    @property
    def total(self) -> float:
        return sum(getattr(self, t).value for t in _TERMS)

    def ratio_to(self, measured_r: float) -> float:
        return self.total / measured_r

    def as_dict(self, measured_r: float | None = None) -> dict:
        out = {t: asdict(getattr(self, t)) for t in _TERMS}
        out["total"] = {"value": self.total, "method": "sum"}
        if measured_r is not None:
            out["measured_r"] = measured_r
            out["ratio_to_measured"] = self.ratio_to(measured_r)
        return out

    def to_json(self, measured_r: float | None = None) -> str:
        return json.dumps(self.as_dict(measured_r), indent=2, sort_keys=True)


def total_budget(components: Mapping[str, BudgetTerm | tuple[float, str]]) -> InfidelityBudget:
    """Assemble a budget; missing terms count as zero (analytic)."""
    unknown = set(components) - set(_TERMS)
    if unknown:
        raise ValueError(f"unknown budget terms {sorted(unknown)}")
    kw = {}
    for t in _TERMS:
        c = components.get(t, BudgetTerm(0.0, "analytic"))
        kw[t] = c if isinstance(c, BudgetTerm) else BudgetTerm(float(c[0]), c[1])
    return InfidelityBudget(**kw)


# ---------------------------------------------------------------------------
# power

#: JPG control line attenuators (dB) at the 3 K, 1 K, 0.05 K and 0.01 K stages.
JPG_ATTENUATION_STACK: dict[str, float] = {"3K": 9.0, "1K": 3.0, "0.05K": 6.0, "0.01K": 10.0}


@dataclass(frozen=True)
class PowerReport:
    on_chip_power: float
    duty_cycle: float
    output_power_dbm: float | None
    stage_dissipation: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.on_chip_power < 0:
            raise ValueError("power must be non-negative")
        if not 0 <= self.duty_cycle <= 1:
            raise ValueError("duty cycle must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _dbm(watts: float) -> float:
    return 10 * math.log10(watts / 1e-3) if watts > 0 else -math.inf


def stage_dissipation(incident_power: float, stack: Mapping[str, float]) -> dict[str, float]:
    """Power absorbed by each attenuator of a cascade (ordered warm to cold)."""
    out = {}
    p = incident_power
    for name, att_db in stack.items():
        passed = p * 10 ** (-att_db / 10)
        out[name] = p - passed
        p = passed
    return out


def power_dissipation(params: JunctionArrayParams, drive_frequency: float, duty_cycle: float, *,
                      full_duty_output_power: float | None = None,
                      attenuation_stack: Mapping[str, float] | None = None) -> PowerReport:
    """On-chip dissipation P = Phi0 N I_c f_d eta_d.

    The pulse output power is not derived here: ``full_duty_output_power``
    (watts, measured at eta_d = 1) is scaled by the duty cycle.  When given,
    the output is pushed through ``attenuation_stack`` to get per-stage
    dissipation.
    """
    if not 0 <= duty_cycle <= 1:
        raise ValueError("duty cycle must lie in [0, 1]")
    if drive_frequency <= 0:
        raise ValueError("drive frequency must be positive")
    p = PHI0 * params.n_junctions * params.critical_current * drive_frequency * duty_cycle
    out_dbm = None
    stages: dict[str, float] = {}
    if full_duty_output_power is not None:
        p_out = full_duty_output_power * duty_cycle
        out_dbm = _dbm(p_out)
        stages = stage_dissipation(p_out, JPG_ATTENUATION_STACK if attenuation_stack is None else attenuation_stack)
    return PowerReport(on_chip_power=p, duty_cycle=duty_cycle, output_power_dbm=out_dbm, stage_dissipation=stages)
