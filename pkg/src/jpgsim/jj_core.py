"""Resistively shunted junction (RSJ) model of a Josephson pulse-generator array.

The junction phase obeys, in dimensionless time ``theta = 2*pi*t/tau``::

    beta_c * phi'' + phi' + sin(phi) = i_dc + i_ac * sin(r * theta)

with ``r = f_d / f_c`` and ``tau = Phi0 / (I_c R_n)``.  The voltage across one
junction is ``V = (Phi0 / 2pi) dphi/dt = I_c R_n * phi'``.  The array is
treated as ``n_junctions`` identical junctions, so array voltages are the
single-junction solution scaled by ``n_junctions``.

Integration runs in dimensionless units with a compiled Dormand-Prince 5(4)
scheme; SI conversion happens only at the boundaries.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy import optimize, signal

from .constants import PHI0

__all__ = [
    "JunctionArrayParams",
    "StepControl",
    "RsjDriveSpec",
    "RsjTrace",
    "IvCurve",
    "PulseWindow",
    "PulseFit",
    "SimulationError",
    "IntegratorError",
    "FitError",
    "simulate_rsj",
    "compute_iv_curve",
    "shapiro_voltage",
    "find_locking_range",
    "extract_pulses",
    "fit_gaussian_pulse",
    "find_first_step",
]


class SimulationError(RuntimeError):
    """Numerical failure inside a simulation."""


class IntegratorError(SimulationError):
    """Adaptive integration failed; carries the last accepted step."""

    def __init__(self, message: str, last_theta: float, last_step: float):
        super().__init__(f"{message} (last accepted theta={last_theta:.6g}, h={last_step:.3g})")
        self.last_theta = last_theta
        self.last_step = last_step


class FitError(RuntimeError):
    """A least-squares fit did not converge to a usable result."""

    def __init__(self, message: str, residual_norm: float = float("nan")):
        super().__init__(message)
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class JunctionArrayParams:
    """Uniform series array of shunted Josephson junctions.

    Parameters
    ----------
    critical_current : float
        Junction critical current I_c in amperes.
    normal_resistance : float
        Shunt (normal-state) resistance R_n in ohms.
    n_junctions : int
        Number of junctions in series.
    beta_c : float
        Stewart-McCumber parameter. The simulator needs ``beta_c > 0``.
    intrinsic_capacitance : float, optional
        Junction capacitance in farads. When given it must agree with
        ``beta_c = 2*pi*f_c*R_n*C``; when omitted it is derived from ``beta_c``.
    """

    critical_current: float
    normal_resistance: float
    n_junctions: int = 1
    beta_c: float = 0.01
    intrinsic_capacitance: float | None = None

    def __post_init__(self):
        if not self.critical_current > 0:
            raise ValueError("critical_current must be positive")
        if not self.normal_resistance > 0:
            raise ValueError("normal_resistance must be positive")
        if int(self.n_junctions) != self.n_junctions or self.n_junctions < 1:
            raise ValueError("n_junctions must be a positive integer")
        if not self.beta_c >= 0:
            raise ValueError("beta_c must be non-negative")
        if self.intrinsic_capacitance is not None:
            implied = self.beta_c / (2 * math.pi * self.characteristic_frequency * self.normal_resistance)
            if not math.isclose(implied, self.intrinsic_capacitance, rel_tol=1e-6):
                raise ValueError(
                    f"intrinsic_capacitance {self.intrinsic_capacitance:g} F inconsistent with "
                    f"beta_c={self.beta_c:g} (implies {implied:g} F)"
                )

    @property
    def characteristic_time(self) -> float:
        """tau = Phi0 / (I_c R_n) in seconds."""
        return PHI0 / (self.critical_current * self.normal_resistance)

    @property
    def characteristic_frequency(self) -> float:
        return self.critical_current * self.normal_resistance / PHI0

    @property
    def capacitance(self) -> float:
        if self.intrinsic_capacitance is not None:
            return self.intrinsic_capacitance
        return self.beta_c / (2 * math.pi * self.characteristic_frequency * self.normal_resistance)

    @property
    def voltage_scale(self) -> float:
        """I_c R_n: the volts corresponding to phi' = 1."""
        return self.critical_current * self.normal_resistance

    def drive_ratio(self, drive_frequency: float) -> float:
        return drive_frequency / self.characteristic_frequency

    @classmethod
    def paper_device(cls, beta_c: float = 0.01) -> "JunctionArrayParams":
        """The 4650-junction aSi-barrier array (I_c = 3.05 mA, R_n = 6.93 mOhm)."""
        return cls(critical_current=3.05e-3, normal_resistance=6.93e-3, n_junctions=4650, beta_c=beta_c)


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_steps: int = 50_000_000
    first_step: float = 1e-3

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("integrator tolerances must be positive")


@dataclass(frozen=True)
class RsjDriveSpec:
    """Dimensionless drive for a single RSJ run.

    ``duration`` is in theta units.  ``samples_per_period`` sets the regular
    output grid relative to one drive period ``2*pi/drive_ratio``.
    """

    i_dc: float
    i_ac: float
    drive_ratio: float
    duration: float
    step_control: StepControl = field(default_factory=StepControl)
    samples_per_period: int = 512
    phi0: float = 0.0
    dphi0: float = 0.0

    def __post_init__(self):
        if not self.drive_ratio > 0:
            raise ValueError("drive_ratio must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not (math.isfinite(self.i_dc) and math.isfinite(self.i_ac)):
            raise ValueError("bias currents must be finite")
        if self.samples_per_period < 2:
            raise ValueError("samples_per_period must be >= 2")

    @property
    def period(self) -> float:
        """Drive period in theta units."""
        return 2 * math.pi / self.drive_ratio

    @classmethod
    def for_periods(cls, i_dc: float, i_ac: float, drive_ratio: float, n_periods: int, **kw) -> "RsjDriveSpec":
        return cls(i_dc=i_dc, i_ac=i_ac, drive_ratio=drive_ratio,
                   duration=n_periods * 2 * math.pi / drive_ratio, **kw)


@dataclass
class RsjTrace:
    """Regularly sampled RSJ solution.

    ``voltage`` is the single-junction voltage in volts; ``time`` in seconds.
    """

    theta: np.ndarray
    phase: np.ndarray
    dphase: np.ndarray
    voltage: np.ndarray
    time: np.ndarray
    params: JunctionArrayParams
    drive: RsjDriveSpec

    @property
    def array_voltage(self) -> np.ndarray:
        return self.voltage * self.params.n_junctions

    def drive_current(self) -> np.ndarray:
        """Normalized ac drive i_ac*sin(r*theta) on the output grid."""
        return self.drive.i_ac * np.sin(self.drive.drive_ratio * self.theta)


# ---------------------------------------------------------------------------
# compiled integrator

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A71, _A73, _A74, _A75, _A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

_OK, _MAXSTEPS, _UNDERFLOW, _NAN = 0, 1, 2, 3


@njit(cache=True)
def _accel(theta, phi, v, beta_c, i_dc, i_ac, ratio):
    return (i_dc + i_ac * math.sin(ratio * theta) - math.sin(phi) - v) / beta_c


@njit(cache=True, nogil=True)
def _dopri5(beta_c, i_dc, i_ac, ratio, phi, v, theta_end, dtheta_out,
            rtol, atol, h, max_steps, out_phi, out_v):
    """Integrate to theta_end, writing phi/v at theta = k*dtheta_out.

    Returns (status, last_theta, last_h).  The phase error is scaled against
    2*pi rather than |phi|, since only phi mod 2*pi enters the dynamics.
    """
    n_out = out_phi.shape[0]
    theta = 0.0
    out_phi[0] = phi
    out_v[0] = v
    k_out = 1
    a1 = _accel(theta, phi, v, beta_c, i_dc, i_ac, ratio)
    steps = 0
    two_pi = 2.0 * math.pi
    while theta < theta_end and k_out < n_out:
        if steps >= max_steps:
            return _MAXSTEPS, theta, h
        if theta + h > theta_end:
            h = theta_end - theta
        # stages; state y = (phi, v), f(y) = (v, accel)
        p1, q1 = v, a1
        y2p = phi + h * _A21 * p1
        y2v = v + h * _A21 * q1
        p2, q2 = y2v, _accel(theta + _C2 * h, y2p, y2v, beta_c, i_dc, i_ac, ratio)
        y3p = phi + h * (_A31 * p1 + _A32 * p2)
        y3v = v + h * (_A31 * q1 + _A32 * q2)
        p3, q3 = y3v, _accel(theta + _C3 * h, y3p, y3v, beta_c, i_dc, i_ac, ratio)
        y4p = phi + h * (_A41 * p1 + _A42 * p2 + _A43 * p3)
        y4v = v + h * (_A41 * q1 + _A42 * q2 + _A43 * q3)
        p4, q4 = y4v, _accel(theta + _C4 * h, y4p, y4v, beta_c, i_dc, i_ac, ratio)
        y5p = phi + h * (_A51 * p1 + _A52 * p2 + _A53 * p3 + _A54 * p4)
        y5v = v + h * (_A51 * q1 + _A52 * q2 + _A53 * q3 + _A54 * q4)
        p5, q5 = y5v, _accel(theta + _C5 * h, y5p, y5v, beta_c, i_dc, i_ac, ratio)
        y6p = phi + h * (_A61 * p1 + _A62 * p2 + _A63 * p3 + _A64 * p4 + _A65 * p5)
        y6v = v + h * (_A61 * q1 + _A62 * q2 + _A63 * q3 + _A64 * q4 + _A65 * q5)
        p6, q6 = y6v, _accel(theta + h, y6p, y6v, beta_c, i_dc, i_ac, ratio)
        np_ = phi + h * (_A71 * p1 + _A73 * p3 + _A74 * p4 + _A75 * p5 + _A76 * p6)
        nv = v + h * (_A71 * q1 + _A73 * q3 + _A74 * q4 + _A75 * q5 + _A76 * q6)
        p7, q7 = nv, _accel(theta + h, np_, nv, beta_c, i_dc, i_ac, ratio)
        ep = h * (_E1 * p1 + _E3 * p3 + _E4 * p4 + _E5 * p5 + _E6 * p6 + _E7 * p7)
        ev = h * (_E1 * q1 + _E3 * q3 + _E4 * q4 + _E5 * q5 + _E6 * q6 + _E7 * q7)
        if not (math.isfinite(np_) and math.isfinite(nv)):
            return _NAN, theta, h
        sp = atol + rtol * two_pi
        sv = atol + rtol * max(abs(v), abs(nv))
        err = math.sqrt(0.5 * ((ep / sp) ** 2 + (ev / sv) ** 2))
        steps += 1
        if err <= 1.0:
            t_new = theta + h
            # cubic Hermite dense output on [theta, t_new]
            while k_out < n_out and k_out * dtheta_out <= t_new + 1e-12 * t_new:
                s = (k_out * dtheta_out - theta) / h
                h00 = (1 + 2 * s) * (1 - s) ** 2
                h10 = s * (1 - s) ** 2
                h01 = s * s * (3 - 2 * s)
                h11 = s * s * (s - 1)
                out_phi[k_out] = h00 * phi + h10 * h * v + h01 * np_ + h11 * h * nv
                out_v[k_out] = h00 * v + h10 * h * a1 + h01 * nv + h11 * h * q7
                k_out += 1
            theta = t_new
            phi, v, a1 = np_, nv, q7
            fac = 0.9 * err ** -0.2 if err > 0 else 10.0
            h *= min(10.0, max(0.2, fac))
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, theta):
                return _UNDERFLOW, theta, h
    return _OK, theta, h


def _run(params: JunctionArrayParams, drive: RsjDriveSpec, dtheta_out: float):
    if not params.beta_c > 0:
        raise ValueError("simulation requires beta_c > 0")
    n_out = int(math.floor(drive.duration / dtheta_out + 1e-9)) + 1
    out_phi = np.empty(n_out)
    out_v = np.empty(n_out)
    sc = drive.step_control
    status, last, h = _dopri5(params.beta_c, drive.i_dc, drive.i_ac, drive.drive_ratio,
                              drive.phi0, drive.dphi0, drive.duration, dtheta_out,
                              sc.rtol, sc.atol, sc.first_step, sc.max_steps, out_phi, out_v)
    if status == _NAN:
        raise SimulationError(f"NaN in RSJ state at theta={last:.6g}")
    if status != _OK:
        reason = "step budget exhausted" if status == _MAXSTEPS else "step size underflow"
        raise IntegratorError(f"RSJ integration failed: {reason}", last, h)
    theta = np.arange(n_out) * dtheta_out
    return theta, out_phi, out_v


def simulate_rsj(params: JunctionArrayParams, drive: RsjDriveSpec) -> RsjTrace:
    """Integrate the ac-driven RSJ equation on a regular output grid.

    Raises
    ------
    IntegratorError
        The adaptive integrator could not meet the tolerances.
    SimulationError
        The state became non-finite.
    """
    dtheta = drive.period / drive.samples_per_period
    theta, phi, dphi = _run(params, drive, dtheta)
    tau = params.characteristic_time
    return RsjTrace(theta=theta, phase=phi, dphase=dphi, voltage=dphi * params.voltage_scale,
                    time=theta * tau / (2 * math.pi), params=params, drive=drive)


def shapiro_voltage(n_junctions: int, drive_frequency: float) -> float:
    """First Shapiro-step voltage N * Phi0 * f_d in volts."""
    if n_junctions <= 0 or drive_frequency <= 0:
        raise ValueError("n_junctions and drive_frequency must be positive")
    return n_junctions * PHI0 * drive_frequency


# ---------------------------------------------------------------------------
# I-V curves


@dataclass
class IvCurve:
    """Time-averaged array voltage versus dc bias.

    ``bias_points`` is an (n, 2) array of (current [A], mean voltage [V]).
    Failed points carry NaN voltage and ``failed[i] = True``.
    ``pulses_per_period`` is the mean net 2*pi slip count per drive period.
    """

    bias_points: np.ndarray
    drive_frequency: float
    n_junctions: int
    drive_amplitude: float
    pulses_per_period: np.ndarray
    failed: np.ndarray

    @property
    def current(self) -> np.ndarray:
        return self.bias_points[:, 0]

    @property
    def voltage(self) -> np.ndarray:
        return self.bias_points[:, 1]

    def to_csv(self, path) -> None:
        header = "bias_current_A,mean_voltage_V,pulses_per_period,failed"
        rows = np.column_stack([self.current, self.voltage, self.pulses_per_period, self.failed.astype(int)])
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt=["%.9e", "%.9e", "%.6f", "%d"])


def _mean_voltage_point(params, i_dc, i_ac, ratio, n_periods, warmup_fraction, step_control):
    drive = RsjDriveSpec.for_periods(i_dc, i_ac, ratio, n_periods, step_control=step_control)
    # one output sample per drive period is enough for slip counting
    _, phi, _ = _run(params, drive, drive.period)
    start = int(math.ceil(warmup_fraction * n_periods))
    n_avg = n_periods - start
    slips = (phi[-1] - phi[start]) / (2 * math.pi)
    mean_dphi = (phi[-1] - phi[start]) / (n_avg * drive.period)
    return mean_dphi * params.voltage_scale, slips / n_avg


def compute_iv_curve(
    params: JunctionArrayParams,
    drive_amplitude: float,
    drive_frequency: float,
    bias_grid: Sequence[float],
    *,
    n_periods: int = 40,
    warmup_fraction: float = 0.2,
    step_control: StepControl | None = None,
    threads: int = 1,
) -> IvCurve:
    """Array I-V curve under sinusoidal drive.

    ``drive_amplitude`` is i_ac = I_ac / I_c.  Each bias point is simulated for
    ``n_periods`` drive periods; the first ``warmup_fraction`` is discarded and
    the mean voltage is taken over the remaining whole periods, which makes a
    locked point exactly N*Phi0*f_d up to integration error.
    """
    bias = np.asarray(bias_grid, dtype=float)
    if bias.size == 0:
        raise ValueError("bias grid is empty")
    if not 0 <= warmup_fraction < 1:
        raise ValueError("warmup_fraction must be in [0, 1)")
    order = np.argsort(bias, kind="stable")
    bias = bias[order]
    ratio = params.drive_ratio(drive_frequency)
    sc = step_control or StepControl()

    def point(ib):
        try:
            return _mean_voltage_point(params, ib / params.critical_current, drive_amplitude,
                                       ratio, n_periods, warmup_fraction, sc)
        except SimulationError:
            return float("nan"), float("nan")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(point, bias))
    else:
        results = [point(ib) for ib in bias]
    v = np.array([r[0] for r in results]) * params.n_junctions
    ppp = np.array([r[1] for r in results])
    failed = ~np.isfinite(v)
    return IvCurve(bias_points=np.column_stack([bias, v]), drive_frequency=drive_frequency,
                   n_junctions=params.n_junctions, drive_amplitude=drive_amplitude,
                   pulses_per_period=ppp, failed=failed)


def find_locking_range(iv: IvCurve, drive_frequency: float,
                       voltage_tolerance: float | None = None) -> tuple[float, float] | None:
    """Largest contiguous bias interval sitting on the first Shapiro step.

    The default tolerance is half a single-junction step, Phi0*f_d/2.
    Returns ``(I_low, I_high)`` in amperes, or None when no point qualifies.
    """
    if voltage_tolerance is None:
        voltage_tolerance = PHI0 * drive_frequency / 2
    if not voltage_tolerance > 0:
        raise ValueError("voltage_tolerance must be positive")
    target = shapiro_voltage(iv.n_junctions, drive_frequency)
    ok = np.abs(iv.voltage - target) <= voltage_tolerance
    ok &= np.isfinite(iv.voltage)
    best, best_len, start = None, 0, None
    for i, flag in enumerate(np.append(ok, False)):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best_len:
                best, best_len = (start, i - 1), i - start
            start = None
    if best is None:
        return None
    return float(iv.current[best[0]]), float(iv.current[best[1]])


def find_first_step(params: JunctionArrayParams, i_ac: float, drive_ratio: float, *,
                    n_periods: int = 30, grid: int = 161, i_max: float = 2.5,
                    step_control: StepControl | None = None) -> tuple[float, float] | None:
    """Normalized dc-bias interval (i_low, i_high) of the first Shapiro step.

    Coarse grid scan for one-slip-per-period points, then bisection of both
    edges to grid/64 resolution.
    """
    sc = step_control or StepControl(rtol=1e-8, atol=1e-10)

    def locked(i):
        _, ppp = _mean_voltage_point(params, i, i_ac, drive_ratio, n_periods, 0.3, sc)
        return abs(ppp - 1.0) < 1e-3

    grid_i = np.linspace(0.0, i_max, grid)
    flags = np.array([locked(i) for i in grid_i])
    if not flags.any():
        return None
    # largest contiguous run
    idx = np.flatnonzero(flags)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    run = max(runs, key=len)
    lo_in, hi_in = grid_i[run[0]], grid_i[run[-1]]
    lo_out = grid_i[run[0] - 1] if run[0] > 0 else lo_in
    hi_out = grid_i[run[-1] + 1] if run[-1] + 1 < grid else hi_in
    for _ in range(6):
        mid = 0.5 * (lo_in + lo_out)
        if locked(mid):
            lo_in = mid
        else:
            lo_out = mid
        mid = 0.5 * (hi_in + hi_out)
        if locked(mid):
            hi_in = mid
        else:
            hi_out = mid
    return float(lo_in), float(hi_in)


# ---------------------------------------------------------------------------
# pulse extraction and fitting


@dataclass(frozen=True)
class PulseWindow:
    start: int
    stop: int  # exclusive
    peak: int

    def slice(self) -> slice:
        return slice(self.start, self.stop)


def extract_pulses(voltage: np.ndarray, threshold: float) -> list[PulseWindow]:
    """Disjoint windows around voltage maxima above ``threshold``.

    Neighbouring windows meet at the voltage minimum between their peaks.
    Outer edges follow the pulse down its flank until the signal stops
    falling, so an isolated pulse keeps its full support.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    v = np.asarray(voltage, dtype=float)
    if v.size == 0:
        return []
    peaks, _ = signal.find_peaks(v, height=threshold)
    # plateau-free edge case: a maximum at the array boundary
    if v.size > 1 and v[0] > threshold and v[0] > v[1]:
        peaks = np.insert(peaks, 0, 0)
    if v.size > 1 and v[-1] > threshold and v[-1] > v[-2]:
        peaks = np.append(peaks, v.size - 1)
    if peaks.size == 0:
        return []
    bounds = [int(p + np.argmin(v[p:q + 1])) for p, q in zip(peaks[:-1], peaks[1:])]
    left = int(peaks[0])
    while left > 0 and v[left - 1] <= v[left]:
        left -= 1
    right = int(peaks[-1])
    while right < v.size - 1 and v[right + 1] <= v[right]:
        right += 1
    edges = [left] + bounds + [right + 1]
    return [PulseWindow(start=edges[i], stop=edges[i + 1], peak=int(p)) for i, p in enumerate(peaks)]


@dataclass(frozen=True)
class PulseFit:
    center: float
    sigma: float
    amplitude: float
    area: float
    residual_norm: float

    def as_dict(self) -> dict:
        return {"center_s": self.center, "sigma_s": self.sigma, "amplitude_V": self.amplitude,
                "area_Wb": self.area, "residual_norm": self.residual_norm}


def _gauss(t, a, c, s):
    return a * np.exp(-0.5 * ((t - c) / s) ** 2)


def fit_gaussian_pulse(time: np.ndarray, voltage: np.ndarray) -> PulseFit:
    """Least-squares Gaussian fit of one pulse window.

    The area is the trapezoidal integral of the samples themselves, not of
    the fitted model.  ``residual_norm`` is the rms residual relative to the
    fitted amplitude.
    """
    t = np.asarray(time, dtype=float)
    v = np.asarray(voltage, dtype=float)
    if t.size < 8:
        raise ValueError("need at least 8 samples to fit a pulse")
    i_pk = int(np.argmax(v))
    a0 = v[i_pk]
    half = v >= a0 / 2
    fwhm = max(np.ptp(t[half]), t[1] - t[0])
    p0 = (a0, t[i_pk], fwhm / 2.3548)
    try:
        popt, _ = optimize.curve_fit(_gauss, t, v, p0=p0, maxfev=20_000)
    except (RuntimeError, optimize.OptimizeWarning) as exc:
        resid = float(np.sqrt(np.mean((v - _gauss(t, *p0)) ** 2)) / max(abs(a0), 1e-300))
        raise FitError(f"Gaussian pulse fit did not converge: {exc}", resid) from exc
    a, c, s = popt
    s = abs(s)
    resid = float(np.sqrt(np.mean((v - _gauss(t, a, c, s)) ** 2)) / abs(a))
    if not (np.all(np.isfinite(popt)) and s > 0):
        raise FitError("Gaussian pulse fit returned non-finite parameters", resid)
    area = float(np.trapezoid(v, t))
    return PulseFit(center=float(c), sigma=float(s), amplitude=float(a), area=area, residual_norm=resid)
