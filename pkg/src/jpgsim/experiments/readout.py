"""Single-shot dispersive readout: voltage histograms, thermal population, SPAM."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.mixture import GaussianMixture

from ..jj_core import FitError
from .records import FitResult

__all__ = ["ReadoutModel", "single_shot_batch", "fit_bimodal", "PthEstimate", "estimate_pth", "spam_fidelity",
           "assignment_errors"]


@dataclass(frozen=True)
class ReadoutModel:
    """Integrated readout voltage model.

    The |0> and |1> lobes sit at -/+ lobe_separation/2 with Gaussian
    noise; cavity and photon-number fields are bookkeeping only.
    """

    bare_cavity_frequency: float = 2 * math.pi * 7.0e9
    dispersive_shift: float = 2 * math.pi * 1.0e6
    lobe_separation: float = 8.0
    noise_sigma: float = 1.0
    readout_duration: float = 400e-9
    p_th_true: float = 0.035
    T1: float = 34e-6
    n_r: float = 50.0
    n_crit: float = 115.0

    def __post_init__(self):
        if not (self.lobe_separation > 0 and self.noise_sigma > 0):
            raise ValueError("lobe_separation and noise_sigma must be positive")
        if not 0 <= self.p_th_true <= 1:
            raise ValueError("p_th_true must be in [0, 1]")
        if not (self.readout_duration >= 0 and self.T1 > 0):
            raise ValueError("readout_duration must be >= 0 and T1 > 0")

    @property
    def photon_warning(self) -> bool:
        return self.n_r > self.n_crit / 2

    @property
    def decay_probability(self) -> float:
        return 1.0 - math.exp(-self.readout_duration / self.T1)

    @property
    def dressed_frequencies(self) -> tuple[float, float]:
        return self.bare_cavity_frequency + self.dispersive_shift, self.bare_cavity_frequency - self.dispersive_shift


def single_shot_batch(model: ReadoutModel, n_shots: int, apply_pi: bool = False, *, prepared_p1: float | None = None,
                      seed: int | np.random.Generator = 0) -> np.ndarray:
    """Integrated voltages for ``n_shots`` shots.

    The state is |1> with probability p_th (flipped by an ideal pi pulse).
    An excited shot decays during the window with the model's decay
    probability at a uniform time, so its mean moves between the lobes.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p1 = model.p_th_true if prepared_p1 is None else prepared_p1
    if not 0 <= p1 <= 1:
        raise ValueError("prepared_p1 must be in [0, 1]")
    if apply_pi:
        p1 = 1.0 - p1
    half = 0.5 * model.lobe_separation
    excited = rng.random(n_shots) < p1
    decays = excited & (rng.random(n_shots) < model.decay_probability)
    frac = np.where(decays, rng.random(n_shots), excited.astype(float))  # time spent in |1>
    mean = -half + model.lobe_separation * frac
    return mean + model.noise_sigma * rng.standard_normal(n_shots)


def fit_bimodal(voltages: np.ndarray, *, seed: int = 0) -> FitResult:
    """Two-component Gaussian mixture, components ordered by mean.

    Raises FitError when one Gaussian describes the data at least as well
    (by BIC) as two, or the components collapse onto each other.
    """
    v = np.asarray(voltages, float).reshape(-1, 1)
    n = v.shape[0]
    if n < 2:
        raise FitError("need at least 2 samples")
    if n < 1000:
        warnings.warn("fewer than 1000 shots; bimodal fit is unreliable", stacklevel=2)
    one = GaussianMixture(1, random_state=seed).fit(v)
    two = GaussianMixture(2, random_state=seed, n_init=3).fit(v)
    if not two.converged_:
        raise FitError("bimodal fit did not converge")
    if two.bic(v) >= one.bic(v):
        raise FitError("degenerate bimodal fit: one component suffices")
    mu = two.means_.ravel()
    sd = np.sqrt(two.covariances_.ravel())
    w = two.weights_
    order = np.argsort(mu)
    mu, sd, w = mu[order], sd[order], w[order]
    if abs(mu[1] - mu[0]) < 0.5 * min(sd):
        raise FitError("degenerate bimodal fit: components collapse")
    params = {"mu0": mu[0], "mu1": mu[1], "sigma0": sd[0], "sigma1": sd[1], "w0": w[0], "w1": w[1]}
    err = {"mu0": sd[0] / math.sqrt(max(n * w[0], 1)), "mu1": sd[1] / math.sqrt(max(n * w[1], 1)),
           "sigma0": sd[0] / math.sqrt(max(2 * n * w[0], 1)), "sigma1": sd[1] / math.sqrt(max(2 * n * w[1], 1)),
           "w0": math.sqrt(w[0] * w[1] / n), "w1": math.sqrt(w[0] * w[1] / n)}
    return FitResult(model="bimodal_gaussian", params={k: float(x) for k, x in params.items()},
                     stderr={k: float(x) for k, x in err.items()}, residual_norm=float(-two.score(v)),
                     extras={"n_samples": n, "bic_one": float(one.bic(v)), "bic_two": float(two.bic(v))})


@dataclass(frozen=True)
class PthEstimate:
    value: float
    uncertainty: float
    statistical: float
    fit: FitResult | None


def estimate_pth(voltages: np.ndarray, threshold: float = 0.0, *, systematic: float = 0.01) -> PthEstimate:
    """Weight of the fitted mixture above ``threshold``.

    The uncertainty adds the shot-noise term and ``systematic`` (decay
    during the measurement) in quadrature.  Single-lobe data falls back to
    one Gaussian.
    """
    v = np.asarray(voltages, float)
    try:
        fit = fit_bimodal(v)
        p = fit.params
        comps = [(p["w0"], p["mu0"], p["sigma0"]), (p["w1"], p["mu1"], p["sigma1"])]
    except FitError:
        fit = None
        comps = [(1.0, float(v.mean()), float(v.std()) or 1e-300)]
    value = float(sum(w * stats.norm.sf(threshold, mu, s) for w, mu, s in comps))
    stat = math.sqrt(max(value * (1 - value), 0.0) / v.size)
    return PthEstimate(value=value, uncertainty=math.hypot(stat, systematic), statistical=stat, fit=fit)


def assignment_errors(model: ReadoutModel, n_shots: int = 10_000, *, threshold: float = 0.0,
                      seed: int = 0) -> tuple[float, float]:
    """(P(1|0), P(0|1)) from thresholded shots with and without a pi pulse."""
    ss = np.random.SeedSequence(seed).spawn(2)
    v0 = single_shot_batch(model, n_shots, False, seed=np.random.default_rng(ss[0]))
    v1 = single_shot_batch(model, n_shots, True, seed=np.random.default_rng(ss[1]))
    return float(np.mean(v0 > threshold)), float(np.mean(v1 <= threshold))


def spam_fidelity(p_1_given_0: float, p_0_given_1: float) -> float:
    """1 - P(1|0) - P(0|1)."""
    for p in (p_1_given_0, p_0_given_1):
        if not 0 <= p <= 1:
            raise ValueError("probabilities must be in [0, 1]")
    return 1.0 - p_1_given_0 - p_0_given_1
