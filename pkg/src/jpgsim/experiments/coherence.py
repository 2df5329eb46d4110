"""T1 and Ramsey measurements with shot noise and repeat statistics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from scipy import linalg

from ..jj_core import FitError
from ..qubit_sim import QubitModel, ground_state, rotating_frame_generator, rotation_superop
from .records import ExperimentRecord, FitResult, fit_curve

__all__ = ["t1_experiment", "ramsey_experiment", "ramsey_curve", "spawn_generators"]


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-task streams, so results do not depend on scheduling."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _measure(p1: np.ndarray, spam: tuple[float, float], n_shots: int | None, rng) -> np.ndarray:
    e0, e1 = spam
    p = e0 + (1.0 - e0 - e1) * p1
    p = np.clip(p, 0.0, 1.0)
    if n_shots is None:
        return p
    return rng.binomial(n_shots, p) / n_shots


def _exp_model(t, a, tau, b):
    return a * np.exp(-t / tau) + b


def _fit_t1(t, y, guess):
    return fit_curve("exp_decay", _exp_model, t, y, [max(y[0] - y[-1], 0.1), guess, float(y[-1])],
                     ["A", "T1", "B"], bounds=([0, 1e-3 * guess, -1], [2, 1e3 * guess, 2]))


def _ramsey_model(t, a, tau, f, phi, b):
    return b + a * np.exp(-t / tau) * np.cos(2 * math.pi * f * t + phi)


def _fit_ramsey(t, y, guess_tau, guess_f):
    if guess_f == 0:
        res = fit_curve("ramsey_decay", _exp_model, t, y, [0.5, guess_tau, 0.5], ["A", "T2", "B"],
                        bounds=([0, 1e-3 * guess_tau, -1], [2, 1e3 * guess_tau, 2]))
        res.params["f"], res.stderr["f"] = 0.0, 0.0
        return res
    return fit_curve("ramsey", _ramsey_model, t, y, [0.5, guess_tau, guess_f, 0.0, 0.5],
                     ["A", "T2", "f", "phi", "B"],
                     bounds=([0, 1e-3 * guess_tau, 0.5 * guess_f, -math.pi, -1],
                             [2, 1e3 * guess_tau, 1.5 * guess_f, math.pi, 2]))


def _summarize(name: str, key: str, fits: list, truth: float) -> FitResult:
    vals = np.array([f.params[key] if f is not None else np.nan for f in fits])
    ok = np.isfinite(vals)
    if not ok.any():
        raise FitError(f"every {name} repeat failed to fit")
    good = vals[ok]
    counts, edges = np.histogram(good, bins=min(30, max(5, good.size // 10)))
    mean = float(good.mean())
    std = float(good.std(ddof=1)) if good.size > 1 else 0.0
    return FitResult(
        model=f"{name}_distribution", params={f"{key}_mean": mean, f"{key}_std": std},
        stderr={f"{key}_mean": std / math.sqrt(good.size) if good.size > 1 else 0.0, f"{key}_std": 0.0},
        residual_norm=float(np.sqrt(np.mean((good - truth) ** 2))),
        extras={"per_repeat": vals, "failed": np.flatnonzero(~ok).tolist(),
                "histogram": {"counts": counts, "edges": edges}})


def _run_repeats(fn, n_repeats, seed, threads):
    rngs = spawn_generators(seed, n_repeats)
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, rngs))
    return [fn(r) for r in rngs]


def t1_experiment(n_repeats: int = 500, delays: Sequence[float] | None = None, qubit: QubitModel | None = None, *,
                  n_shots: int | None = 1000, spam: tuple[float, float] = (0.0, 0.0), t1_spread: float = 0.0,
                  seed: int = 0, threads: int = 1) -> tuple[ExperimentRecord, FitResult]:
    """Excite, wait, measure; fit A exp(-t/T1) + B per repeat.

    ``spam`` is (P(1|0), P(0|1)).  ``t1_spread`` draws each repeat's true T1
    from N(T1, t1_spread).  ``n_shots=None`` gives noise-free populations.
    Repeats whose fit fails are recorded as NaN and listed in the result.
    """
    q = qubit or QubitModel()
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    t = np.linspace(0, 5 * q.T1, 41) if delays is None else np.asarray(delays, float)
    if t.size < 4 or np.any(t < 0):
        raise ValueError("need at least 4 non-negative delays")

    def one(rng):
        t1 = q.T1 + (t1_spread * rng.standard_normal() if t1_spread else 0.0)
        y = _measure(np.exp(-t / max(t1, 1e-12)), spam, n_shots, rng)
        try:
            fit = _fit_t1(t, y, q.T1)
        except FitError:
            fit = None
        return y, fit

    out = _run_repeats(one, n_repeats, seed, threads)
    vals = np.array([o[0] for o in out])
    fit = _summarize("t1", "T1", [o[1] for o in out], q.T1)
    try:
        fit.extras["average_fit"] = _fit_t1(t, vals.mean(0), q.T1).as_dict()
    except FitError:
        fit.extras["average_fit"] = None
    rec = ExperimentRecord(name="t1", axes={"repeat": np.arange(n_repeats), "delay_s": t}, values=vals,
                           metadata={"seed": seed, "T1_true": q.T1, "n_shots": n_shots, "spam": list(spam),
                                     "t1_spread": t1_spread, "passive_reset_s": 15 * q.T1})
    return rec, fit


def ramsey_curve(qubit: QubitModel, delays: np.ndarray, detuning: float) -> np.ndarray:
    """P1 after X_pi/2, wait, X_pi/2, from the Lindblad model in the rotating frame."""
    L = rotating_frame_generator(qubit, detuning)
    K = rotation_superop(qubit, math.pi / 2, 0.0)
    rho0 = ground_state(qubit.levels).matrix.reshape(-1, order="F")
    v1 = K @ rho0
    d = qubit.levels
    p1 = np.empty(len(delays))
    for i, t in enumerate(delays):
        v = K @ (linalg.expm(t * L) @ v1)
        p1[i] = v.reshape(d, d, order="F")[1, 1].real
    return p1


def ramsey_experiment(n_repeats: int = 500, delays: Sequence[float] | None = None, detuning: float = 2 * math.pi * 0.2e6,
                      qubit: QubitModel | None = None, *, n_shots: int | None = 1000,
                      spam: tuple[float, float] = (0.0, 0.0), seed: int = 0,
                      threads: int = 1) -> tuple[ExperimentRecord, FitResult]:
    """Two X_pi/2 kicks separated by a delay with an artificial detuning (rad/s).

    Each repeat is fit with B + A exp(-t/T2) cos(2 pi f t + phi); the
    distribution of T2 and the mean fringe frequency are returned.
    """
    q = qubit or QubitModel()
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    t = np.linspace(0, 3 * q.T2, 121) if delays is None else np.asarray(delays, float)
    if t.size < 6 or np.any(t < 0):
        raise ValueError("need at least 6 non-negative delays")
    p1 = ramsey_curve(q, t, detuning)
    f0 = abs(detuning) / (2 * math.pi)
    guess_tau = q.T2 if math.isfinite(q.T2) else 1e3 * max(t.max(), 1e-9)

    def one(rng):
        y = _measure(p1, spam, n_shots, rng)
        try:
            fit = _fit_ramsey(t, y, guess_tau, f0)
        except FitError:
            fit = None
        return y, fit

    out = _run_repeats(one, n_repeats, seed, threads)
    vals = np.array([o[0] for o in out])
    fits = [o[1] for o in out]
    fit = _summarize("ramsey", "T2", fits, q.T2)
    fr = np.array([f.params["f"] for f in fits if f is not None])
    fit.params["f_mean"] = float(fr.mean())
    fit.stderr["f_mean"] = float(fr.std(ddof=1) / math.sqrt(fr.size)) if fr.size > 1 else 0.0
    rec = ExperimentRecord(name="ramsey", axes={"repeat": np.arange(n_repeats), "delay_s": t}, values=vals,
                           metadata={"seed": seed, "T2_true": q.T2, "detuning_rad_s": detuning, "n_shots": n_shots,
                                     "spam": list(spam), "passive_reset_s": 15 * q.T1})
    return rec, fit
