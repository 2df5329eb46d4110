"""Phase calibration of the y axis by delaying a second X_pi/2 segment."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..jj_core import FitError
from ..qubit_sim import QubitModel, apply_superop, kick_sequence_superop
from ..waveform import DriveProgram, Segment, train_from_program
from .records import ExperimentRecord, FitResult, fit_curve

__all__ = ["y_axis_program", "y_axis_calibration", "analyze_y_axis"]


def y_axis_program(n_phi: int, nu_pi: int = 352, samples_per_period: int = 24, k: int = 2,
                   drive_frequency: float = 2.685e9) -> DriveProgram:
    """X_pi/2, then ``n_phi`` zero samples, then X_pi/2 (both on the x phase)."""
    if n_phi < 0:
        raise ValueError("n_phi must be >= 0")
    spp = samples_per_period
    half = Segment("X_pi/2", nu_pi // 2, 0.0, spp, spp)
    gap = Segment("delay", 0, 0.0, int(n_phi), 0)
    return DriveProgram(samples_per_period=spp, subharmonic_k=k, drive_frequency=drive_frequency,
                        segments=(half, gap, half), half_pulse_residual=float(nu_pi % 2))


def y_axis_calibration(n_phi_grid: Sequence[int], detuning_grid: Sequence[float] = (0.0,),
                       samples_per_period: int = 24, k: int = 2, *, nu_pi: int = 352,
                       qubit: QubitModel | None = None) -> ExperimentRecord:
    """P1 versus inserted delay (samples) and drive detuning (rad/s).

    The drive runs at omega_10/k + detuning; each pulse is a delta kick of
    pi/nu_pi whose axis follows the qubit phase at its arrival time.
    """
    q = qubit or QubitModel()
    n_phi = np.asarray(n_phi_grid, int)
    det = np.asarray(detuning_grid, float)
    if n_phi.size == 0 or det.size == 0:
        raise ValueError("grids must be nonempty")
    vals = np.empty((n_phi.size, det.size))
    for j, d in enumerate(det):
        f_d = (q.omega_10 / k + d) / (2 * math.pi)
        if f_d <= 0:
            raise ValueError("drive frequency must stay positive")
        for i, n in enumerate(n_phi):
            prog = y_axis_program(int(n), nu_pi, samples_per_period, k, f_d)
            train = train_from_program(prog, 1e-15)  # only the times matter
            S = kick_sequence_superop(q, train.times, math.pi / nu_pi, t_start=0.0)
            vals[i, j] = apply_superop(S, levels=q.levels).matrix[1, 1].real
    return ExperimentRecord(name="y_axis_calibration", axes={"n_phi": n_phi, "detuning_rad_s": det}, values=vals,
                            metadata={"samples_per_period": samples_per_period, "k": k, "nu_pi": nu_pi})


def analyze_y_axis(record: ExperimentRecord, detuning: float = 0.0) -> FitResult:
    """Fit P1(n_phi) = b + a cos(2 pi n / period + phi) at one detuning.

    ``extras["n_phi_y"]`` is the first delay at which P1 falls to one half
    (interpolated), i.e. where the second segment lands on the y axis.
    """
    n = record.axes["n_phi"].astype(float)
    y = record.slice(detuning_rad_s=detuning)
    if n.size < 5:
        raise FitError("need at least 5 delays")
    spp = record.metadata["samples_per_period"]
    k = record.metadata["k"]
    guess = spp / k  # one qubit period of delay

    def f(x, a, b, period, phi):
        return b + a * np.cos(2 * math.pi * x / period + phi)

    res = fit_curve("cosine", f, n, y, [0.5, 0.5, guess, 0.0], ["a", "b", "period", "phi"],
                    bounds=([0, -1, 0.5 * guess, -math.pi], [1, 2, 2 * guess, math.pi]))
    below = np.flatnonzero(y <= 0.5 + 1e-9)
    if below.size == 0:
        res.extras["n_phi_y"] = None
    else:
        i = int(below[0])
        if i == 0 or abs(y[i] - 0.5) < 1e-9:
            res.extras["n_phi_y"] = float(n[i])
        else:
            x0, x1, y0, y1 = n[i - 1], n[i], y[i - 1], y[i]
            res.extras["n_phi_y"] = float(x0 + (0.5 - y0) * (x1 - x0) / (y1 - y0))
    return res
