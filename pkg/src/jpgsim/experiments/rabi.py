"""Rabi scans driven through the junction-array model, Rabi fits and chevrons."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..jj_core import (FitError, JunctionArrayParams, RsjDriveSpec, SimulationError, extract_pulses,
                       fit_gaussian_pulse, simulate_rsj)
from ..qubit_sim import QubitModel, evolve_discrete
from .records import ExperimentRecord, FitResult, fit_curve

__all__ = ["ChainConfig", "ChainCharacterization", "characterize_chain", "rabi_scan", "fit_rabi",
           "rabi_chevron", "nu_pi_plateau"]

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class ChainConfig:
    """Links the array bias to the per-pulse tip angle.

    The coupling is unknown, so it is fixed by one calibration point:
    ``reference_nu_pi`` pulses make a pi rotation at ``reference_bias``.
    Away from it the tip angle follows the simulated pulse shape.
    """

    device: JunctionArrayParams = field(default_factory=JunctionArrayParams.paper_device)
    i_ac: float = 0.8
    qubit: QubitModel = field(default_factory=QubitModel)
    k: int = 2
    reference_bias: float = 1.9e-3
    reference_nu_pi: float = 351.7
    n_periods: int = 24
    warmup_periods: int = 8
    samples_per_period: int = 256

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_periods - self.warmup_periods < 4:
            raise ValueError("need at least 4 steady-state periods")
        if self.reference_nu_pi <= 0:
            raise ValueError("reference_nu_pi must be positive")

    @property
    def drive_frequency(self) -> float:
        return self.qubit.frequency / self.k


@dataclass
class ChainCharacterization:
    """Per-bias pulse statistics from RSJ runs."""

    bias: np.ndarray               # A
    pulses_per_period: np.ndarray
    harmonic: np.ndarray           # |per-period Fourier weight at omega_10| / Phi0
    sigma: np.ndarray              # s, NaN where not locked
    area: np.ndarray               # Wb per junction per pulse, NaN where not locked
    locked: np.ndarray
    ref_sigma: float
    ref_harmonic: float
    chain: ChainConfig

    def _gauss_weight(self, sigma):
        return np.exp(-0.5 * (self.chain.qubit.omega_10 * sigma) ** 2)

    def tip_factor(self) -> np.ndarray:
        """Tip angle relative to the reference bias, at the characterized points.

        Locked points use the fitted Gaussian width; elsewhere the coherent
        qubit-frequency content of the output relative to the reference.
        """
        out = self.harmonic / self.ref_harmonic
        g = self._gauss_weight(self.sigma) / self._gauss_weight(self.ref_sigma)
        return np.where(self.locked, g, out)

    def delta_theta(self, bias: np.ndarray | float) -> np.ndarray:
        """Per-pulse tip angle at any bias, linear between characterized points."""
        base = math.pi / self.chain.reference_nu_pi
        return base * np.interp(np.asarray(bias, float), self.bias, self.tip_factor())

    def to_csv(self, path) -> None:
        cols = np.column_stack([self.bias, self.pulses_per_period, self.harmonic, self.sigma, self.area,
                                self.locked.astype(int), self.tip_factor()])
        np.savetxt(path, cols, delimiter=",", comments="", fmt="%.9e",
                   header="bias_A,pulses_per_period,harmonic_weight,sigma_s,area_Wb,locked,tip_factor")


def _characterize_point(chain: ChainConfig, bias: float):
    dev = chain.device
    r = dev.drive_ratio(chain.drive_frequency)
    spec = RsjDriveSpec.for_periods(bias / dev.critical_current, chain.i_ac, r, chain.n_periods,
                                    samples_per_period=chain.samples_per_period)
    tr = simulate_rsj(dev, spec)
    n0 = chain.warmup_periods * chain.samples_per_period
    n_ss = chain.n_periods - chain.warmup_periods
    th, dphi = tr.theta[n0:], tr.dphase[n0:]
    ppp = (tr.phase[-1] - tr.phase[n0]) / TWO_PI / n_ss
    # omega_10 * t = k * r * theta
    h = abs(np.trapezoid(dphi * np.exp(-1j * chain.k * r * th), th)) / TWO_PI / n_ss
    locked = abs(ppp - 1.0) < 1e-3
    sigma = area = float("nan")
    if locked:
        v, t = tr.voltage[n0:], tr.time[n0:]
        wins = extract_pulses(v, 0.5 * v.max())[1:-1]
        fits = []
        for w in wins:
            try:
                fits.append(fit_gaussian_pulse(t[w.slice()], v[w.slice()]))
            except FitError:
                continue
        if fits:
            sigma = float(np.median([f.sigma for f in fits]))
            area = float(np.median([f.area for f in fits]))
        else:
            locked = False
    return ppp, h, sigma, area, locked


def characterize_chain(chain: ChainConfig, bias_points: Sequence[float]) -> ChainCharacterization:
    """Simulate the array at each bias (plus the reference) and tabulate pulses."""
    bias = np.unique(np.asarray(bias_points, float))
    rows = []
    for b in bias:
        try:
            rows.append(_characterize_point(chain, float(b)))
        except SimulationError:
            rows.append((float("nan"), 0.0, float("nan"), float("nan"), False))
    ref = _characterize_point(chain, chain.reference_bias)
    if not ref[4]:
        raise ValueError("reference bias is not on the first Shapiro step")
    arr = list(zip(*rows))
    return ChainCharacterization(bias=bias, pulses_per_period=np.array(arr[0]), harmonic=np.array(arr[1]),
                                 sigma=np.array(arr[2]), area=np.array(arr[3]), locked=np.array(arr[4], bool),
                                 ref_sigma=ref[2], ref_harmonic=ref[1], chain=chain)


def rabi_scan(bias_grid: Sequence[float], nu_grid: Sequence[int], chain: ChainConfig | None = None, *,
              characterization: ChainCharacterization | None = None) -> ExperimentRecord:
    """P1 versus array bias and number of drive periods.

    Each bias gets its tip angle from the chain; the qubit then sees that
    many kicks, one per drive period, with decay in between.
    """
    chain = chain or ChainConfig()
    bias = np.asarray(bias_grid, float)
    nu = np.asarray(nu_grid, int)
    if bias.size == 0 or nu.size == 0:
        raise ValueError("bias and nu grids must be nonempty")
    if nu.min() < 0:
        raise ValueError("nu must be non-negative")
    char = characterization or characterize_chain(chain, bias)
    dth = char.delta_theta(bias)
    n_max = int(nu.max())
    vals = np.empty((bias.size, nu.size))
    for i, d in enumerate(dth):
        p1 = evolve_discrete(chain.qubit, float(d), chain.k, n_max).p1
        vals[i] = p1[nu]
    return ExperimentRecord(
        name="rabi_scan", axes={"bias_A": bias, "nu": nu}, values=vals,
        metadata={"i_ac": chain.i_ac, "k": chain.k, "drive_frequency_Hz": chain.drive_frequency,
                  "reference_bias_A": chain.reference_bias, "reference_nu_pi": chain.reference_nu_pi,
                  "beta_c": chain.device.beta_c},
        coords={"delta_theta_rad": ("bias_A", dth)})


def _rabi_model(nu, a, b, nu_pi, nu_d):
    return b + 0.5 * a * (1 - np.exp(-nu / nu_d) * np.cos(math.pi * nu / nu_pi))


def fit_rabi(nu: Sequence[float], p1: Sequence[float], *, damped: bool = True) -> FitResult:
    """Fit P1(nu) = b + a/2 (1 - exp(-nu/nu_d) cos(pi nu / nu_pi)).

    Without damping this is b + a sin^2(pi nu / (2 nu_pi)).  The result
    carries ``nu_pi`` and its integer rounding in ``extras``.
    """
    x = np.asarray(nu, float)
    y = np.asarray(p1, float)
    if x.size < 5:
        raise FitError("need at least 5 points for a Rabi fit")
    if np.ptp(y) < 0.1:
        raise FitError("no Rabi oscillation detected", float(np.std(y)))
    # period guess from a scan of single-tone fits
    span = np.ptp(x)
    trial = np.linspace(max(span / 40, 1.0), 4 * span, 800)
    yc = y - y.mean()
    power = [abs(np.dot(yc, np.exp(1j * math.pi * x / t))) for t in trial]
    nu0 = float(trial[int(np.argmax(power))])
    if nu0 >= 2 * span:
        raise FitError("no full Rabi oscillation in range", float(np.std(y)))
    b0, a0 = float(y.min()), float(np.ptp(y))
    if damped:
        res = fit_curve("rabi_damped", _rabi_model, x, y, [a0, b0, nu0, 50 * span], ["a", "b", "nu_pi", "nu_decay"],
                        bounds=([0, -0.5, 0.5 * nu0, 1e-3 * span], [2, 1, 2 * nu0, np.inf]))
    else:
        def f(v, a, b, nu_pi):
            return b + a * np.sin(math.pi * v / (2 * nu_pi)) ** 2
        res = fit_curve("rabi", f, x, y, [a0, b0, nu0], ["a", "b", "nu_pi"],
                        bounds=([0, -0.5, 0.5 * nu0], [2, 1, 2 * nu0]))
    if 2 * res.params["nu_pi"] > span * (1 + 1e-9):
        raise FitError("no full Rabi oscillation in range", res.residual_norm)
    res.extras["nu_pi_rounded"] = int(round(res.params["nu_pi"]))
    return res


def nu_pi_plateau(record: ExperimentRecord, center: float, width: float) -> dict:
    """Fitted nu_pi at each bias within [center - width/2, center + width/2]."""
    bias = record.axes["bias_A"]
    sel = np.flatnonzero(np.abs(bias - center) <= width / 2 + 1e-15)
    if sel.size == 0:
        raise ValueError("no bias points inside the requested window")
    nus = []
    for i in sel:
        nus.append(fit_rabi(record.axes["nu"], record.values[i]).params["nu_pi"])
    nus = np.array(nus)
    return {"bias_A": bias[sel], "nu_pi": nus, "spread": float(np.ptp(nus)),
            "rounded": [int(round(v)) for v in nus]}


def rabi_chevron(detuning_grid: Sequence[float], nu_grid: Sequence[int], qubit: QubitModel | None = None, *,
                 delta_theta: float = math.pi / 352, k: int = 2) -> ExperimentRecord:
    """P1 versus drive detuning (rad/s) and number of pulses.

    A drive detuned by d slips the kick axis by k * d * T_d per drive period
    (first order in d / omega_d); spacing stays k qubit periods, so the
    chevron is exactly symmetric in d.
    """
    q = qubit or QubitModel()
    det = np.asarray(detuning_grid, float)
    nu = np.asarray(nu_grid, int)
    if det.size == 0 or nu.size == 0:
        raise ValueError("detuning and nu grids must be nonempty")
    t_d = k * q.period
    n_max = int(nu.max())
    vals = np.empty((det.size, nu.size))
    for i, d in enumerate(det):
        slip = -k * d * t_d
        p1 = evolve_discrete(q, delta_theta, k, n_max, axes=lambda j, s=slip: (j * s) % TWO_PI).p1
        vals[i] = p1[nu]
    return ExperimentRecord(name="rabi_chevron", axes={"detuning_rad_s": det, "nu": nu}, values=vals,
                            metadata={"delta_theta": delta_theta, "k": k})
