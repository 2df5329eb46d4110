"""Drive programs and pulse trains for a subharmonically clocked pulse generator.

A drive program is a concatenation of integer sine periods sampled with an
integer number of samples per period.  Gate axes are set by delaying the drive
relative to the x timing reference; every pi and pi/2 gate carries two idle
periods (one leading, one trailing) so the delay can be absorbed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from .constants import PHI0

__all__ = [
    "GATE_LABELS",
    "Segment",
    "DriveProgram",
    "PulseTrain",
    "JitterModel",
    "phase_for_axis",
    "build_drive",
    "build_pulse_train",
    "apply_jitter",
    "pattern_duration",
    "train_from_program",
]

TWO_PI = 2 * math.pi

# label -> (axis, rotation in units of pi)
GATE_LABELS: dict[str, tuple[str | None, float]] = {
    "I": (None, 1.0),
    "X_pi": ("X", 1.0),
    "Y_pi": ("Y", 1.0),
    "-X_pi": ("X", 1.0),
    "-Y_pi": ("Y", 1.0),
    "X_pi/2": ("X", 0.5),
    "Y_pi/2": ("Y", 0.5),
    "-X_pi/2": ("-X", 0.5),
    "-Y_pi/2": ("-Y", 0.5),
}


def phase_for_axis(axis: str, k: int) -> float:
    """Drive phase offset (radians, in [0, 2pi)) selecting a rotation axis.

    Pulses only rotate in one sense, so negative axes are reached with an
    extra 3pi/2 of drive phase.
    """
    if k < 2:
        raise ValueError("subharmonic k must be >= 2")
    y = math.pi / (2 * k)
    table = {"X": 0.0, "Y": y, "-X": 1.5 * math.pi, "-Y": y + 1.5 * math.pi}
    try:
        return table[axis] % TWO_PI
    except KeyError:
        raise ValueError(f"unknown axis {axis!r}") from None


@dataclass(frozen=True)
class Segment:
    label: str
    n_periods: int          # active sine periods (nu)
    phase: float            # drive phase offset phi_d
    lead_idle: int          # idle samples before the active sine
    trail_idle: int         # idle samples after

    def n_samples(self, samples_per_period: int) -> int:
        return self.lead_idle + self.n_periods * samples_per_period + self.trail_idle


@dataclass(frozen=True)
class DriveProgram:
    samples_per_period: int
    subharmonic_k: int
    drive_frequency: float
    segments: tuple[Segment, ...] = ()
    half_pulse_residual: float = 0.0   # rotation lost to floor(nu_pi/2), in pulses

    @property
    def sample_rate(self) -> float:
        return self.samples_per_period * self.drive_frequency

    @property
    def total_samples(self) -> int:
        return sum(s.n_samples(self.samples_per_period) for s in self.segments)

    def samples(self) -> np.ndarray:
        """Render the program as a sampled unit-amplitude sine stream.

        A phase offset phi delays the sine by round(phi/(2pi)*spp) samples,
        taken from the segment's leading idle budget.
        """
        spp = self.samples_per_period
        out = []
        for seg in self.segments:
            delay = _delay_samples(seg.phase, spp)
            lead = seg.lead_idle + delay
            trail = seg.trail_idle - delay
            if trail < 0:  # delay exceeds trailing budget for idle-free segments
                lead, trail = seg.lead_idle, seg.trail_idle
            n = np.arange(seg.n_periods * spp)
            active = np.sin(TWO_PI * n / spp) if seg.n_periods else np.zeros(0)
            out.append(np.concatenate([np.zeros(lead), active, np.zeros(trail)]))
        return np.concatenate(out) if out else np.zeros(0)

    def to_json(self) -> str:
        return json.dumps({
            "samples_per_period": self.samples_per_period,
            "subharmonic_k": self.subharmonic_k,
            "drive_frequency_Hz": self.drive_frequency,
            "sample_rate_Hz": self.sample_rate,
            "half_pulse_residual": self.half_pulse_residual,
            "segments": [
                {"label": s.label, "n_periods": s.n_periods, "phase_rad": s.phase,
                 "lead_idle_samples": s.lead_idle, "trail_idle_samples": s.trail_idle}
                for s in self.segments
            ],
        }, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        y = self.samples()
        t = np.arange(y.size) / self.sample_rate
        np.savetxt(path, np.column_stack([t, y]), delimiter=",", header="time_s,drive_amplitude",
                   comments="", fmt=["%.9e", "%.9f"])


def _delay_samples(phase: float, spp: int) -> int:
    return int(round((phase % TWO_PI) / TWO_PI * spp)) % spp


def build_drive(gates: Sequence[str], nu_pi: int, samples_per_period: int = 24, k: int = 2,
                drive_frequency: float = 2.685e9, *,
                rounding: Literal["strict", "floor"] = "floor") -> DriveProgram:
    """Assemble the drive program for a gate sequence.

    Pi gates get ``nu_pi`` active periods, pi/2 gates ``nu_pi/2``; the idle
    gate is as long as a pi gate.  Each segment carries one leading and one
    trailing idle period.  With ``rounding="floor"`` an odd ``nu_pi`` gives
    pi/2 gates of ``nu_pi // 2`` periods and the missing half pulse is
    recorded in ``half_pulse_residual``; ``"strict"`` rejects odd ``nu_pi``.
    """
    if k < 2:
        raise ValueError("subharmonic k must be >= 2")
    if nu_pi < 1 or samples_per_period < 1:
        raise ValueError("nu_pi and samples_per_period must be positive")
    needs_half = any(GATE_LABELS.get(g, (None, 1.0))[1] == 0.5 for g in gates)
    if needs_half and nu_pi % 2 and rounding == "strict":
        raise ValueError(f"odd nu_pi={nu_pi} cannot be halved without a rounding rule")
    spp = samples_per_period
    segs = []
    residual = 0.0
    for g in gates:
        if g not in GATE_LABELS:
            raise ValueError(f"unknown gate label {g!r}")
        axis, frac = GATE_LABELS[g]
        if axis is None:
            segs.append(Segment(g, 0, 0.0, spp * (nu_pi + 2) // 2, spp * (nu_pi + 2) - spp * (nu_pi + 2) // 2))
            continue
        nu = nu_pi if frac == 1.0 else nu_pi // 2
        if frac == 0.5 and nu_pi % 2:
            residual += 0.5
        segs.append(Segment(g, nu, phase_for_axis(axis, k), spp, spp))
    return DriveProgram(samples_per_period=spp, subharmonic_k=k, drive_frequency=drive_frequency,
                        segments=tuple(segs), half_pulse_residual=residual)


def pattern_duration(program: DriveProgram, *, active_only: bool = False) -> float:
    """Program length in seconds (or only its active sine periods)."""
    if active_only:
        periods = sum(s.n_periods for s in program.segments)
        return periods / program.drive_frequency
    return program.total_samples / program.sample_rate


@dataclass(frozen=True)
class PulseTrain:
    """Pulse events: arrival time [s], Gaussian sigma [s], area [V s].

    ``unit_area`` is the area that the qubit coupling is normalized to; a
    pulse with ``area == unit_area`` delivers one nominal tip angle.
    """

    times: np.ndarray
    sigmas: np.ndarray
    areas: np.ndarray
    drive_frequency: float
    unit_area: float = PHI0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sigmas", np.broadcast_to(np.asarray(self.sigmas, float), t.shape).copy())
        object.__setattr__(self, "areas", np.broadcast_to(np.asarray(self.areas, float), t.shape).copy())
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("arrival times must be strictly increasing")
        if np.any(self.sigmas <= 0):
            raise ValueError("pulse sigma must be positive")

    def __len__(self) -> int:
        return self.times.size

    @property
    def weights(self) -> np.ndarray:
        return self.areas / self.unit_area

    @property
    def span(self) -> float:
        """First-to-last pulse span plus one period, i.e. the gate time."""
        return len(self) / self.drive_frequency if len(self) else 0.0

    def sampled(self, t: np.ndarray) -> np.ndarray:
        """Voltage rendering sum_j area_j * gaussian(t - t_j; sigma_j)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for tj, sj, aj in zip(self.times, self.sigmas, self.areas):
            near = np.abs(t - tj) < 10 * sj
            out[near] += aj * np.exp(-0.5 * ((t[near] - tj) / sj) ** 2) / (math.sqrt(TWO_PI) * sj)
        return out

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.times, self.sigmas, self.areas]), delimiter=",",
                   header="arrival_time_s,sigma_s,area_Vs", comments="", fmt="%.12e")


def build_pulse_train(n_pulses: int, sigma: float, drive_frequency: float, start_phase: float = 0.0,
                      *, area: float | None = None, unit_area: float | None = None) -> PulseTrain:
    """Equally spaced identical pulses, one per drive period.

    ``start_phase`` delays the whole train by start_phase/(2 pi f_d).
    """
    if n_pulses < 0:
        raise ValueError("n_pulses must be non-negative")
    period = 1.0 / drive_frequency
    t = (start_phase % TWO_PI) / TWO_PI * period + period * np.arange(n_pulses)
    ua = PHI0 if unit_area is None else unit_area
    return PulseTrain(times=t, sigmas=np.full(n_pulses, sigma), areas=np.full(n_pulses, ua if area is None else area),
                      drive_frequency=drive_frequency, unit_area=ua)


def train_from_program(program: DriveProgram, sigma: float, *, area: float | None = None,
                       unit_area: float | None = None, pulse_lag: float = 0.0) -> PulseTrain:
    """One pulse per active drive period, at the period start plus any delay.

    ``pulse_lag`` is a constant lag (seconds) between a drive period start
    and its output pulse; it is common to every pulse.
    """
    spp = program.samples_per_period
    dt = 1.0 / program.sample_rate
    times = []
    cursor = 0
    for seg in program.segments:
        delay = _delay_samples(seg.phase, spp)
        lead = seg.lead_idle + delay
        if seg.trail_idle - delay < 0:
            lead = seg.lead_idle
        start = cursor + lead
        times.extend((start + spp * np.arange(seg.n_periods)) * dt + pulse_lag)
        cursor += seg.n_samples(spp)
    ua = PHI0 if unit_area is None else unit_area
    n = len(times)
    return PulseTrain(times=np.array(times), sigmas=np.full(n, sigma),
                      areas=np.full(n, ua if area is None else area),
                      drive_frequency=program.drive_frequency, unit_area=ua)


@dataclass(frozen=True)
class JitterModel:
    """Pulse timing jitter.

    ``drive``: each pulse is displaced by an independent N(0, sigma_jitter)
    draw shared by every junction of the array.
    ``per_junction``: each junction jitters independently; the summed pulse
    broadens to sqrt(sigma^2 + sigma_jitter^2) and its centroid moves by
    N(0, sigma_jitter / sqrt(n_junctions)).
    """

    mode: Literal["drive", "per_junction"] = "drive"
    sigma_jitter: float = 0.0
    n_junctions: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("drive", "per_junction"):
            raise ValueError(f"unknown jitter mode {self.mode!r}")
        if not self.sigma_jitter >= 0:
            raise ValueError("sigma_jitter must be non-negative")
        if self.n_junctions < 1:
            raise ValueError("n_junctions must be >= 1")


def apply_jitter(train: PulseTrain, model: JitterModel,
                 rng: np.random.Generator | None = None) -> PulseTrain:
    """Return a jittered copy of ``train``; the input is never modified.

    Without an explicit ``rng`` a generator is seeded from ``model.seed``.
    """
    if model.sigma_jitter == 0 or len(train) == 0:
        return train
    rng = np.random.default_rng(model.seed) if rng is None else rng
    n = len(train)
    if model.mode == "drive":
        shifts = rng.normal(0.0, model.sigma_jitter, n)
        sigmas = train.sigmas
    else:
        shifts = rng.normal(0.0, model.sigma_jitter / math.sqrt(model.n_junctions), n)
        sigmas = np.sqrt(train.sigmas ** 2 + model.sigma_jitter ** 2)
    times = train.times + shifts
    order = np.argsort(times, kind="stable")
    return replace(train, times=times[order], sigmas=sigmas[order], areas=train.areas[order])
