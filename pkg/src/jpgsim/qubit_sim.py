"""Dissipative qubit (or qutrit) driven by pulse trains.

Conventions
-----------
Basis |0>, |1>, |2> with lab-frame Hamiltonian

    H(t) = diag(0, w10, 2*w10 - alpha*w10) - Omega_d * s(t) * X

where ``X = |0><1| + sqrt(2)|1><2| + h.c.`` (truncated to two levels when
``levels == 2``) and ``s(t)`` is a sum of unit-area Gaussians, each scaled by
its relative area.  No rotating-wave approximation is made.  A delta pulse of
unit area therefore rotates the qubit by ``2*Omega_d`` about x.

Relaxation uses ``sqrt(1/T1) * a`` and pure dephasing ``sqrt(2/Tphi) * n``,
which give 1/T2 = 1/(2 T1) + 1/Tphi on the 0-1 coherence.

Superoperators act on column-stacked density matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Iterable, Literal, Sequence

import numpy as np
from scipy import integrate, linalg, optimize

from .constants import HBAR, PHI0
from .waveform import PulseTrain

TWO_PI = 2 * math.pi

__all__ = [
    "QubitModel",
    "CouplingParams",
    "DensityState",
    "Trajectory",
    "ground_state",
    "tip_angle",
    "evolve_discrete",
    "evolve_continuous",
    "evolve_continuous_ode",
    "excited_population",
    "xpi_fidelity",
    "gaussian_tip_angle",
    "normalize_coupling",
    "periodic_xpi",
    "rotation_superop",
    "rotating_frame_generator",
    "kick_sequence_superop",
    "apply_superop",
    "liouvillian",
]


@dataclass(frozen=True)
class QubitModel:
    """Transmon-like qubit.

    ``omega_10`` in rad/s; ``anharmonicity_alpha`` as a fraction of omega_10
    (only used for three levels); ``T1``/``Tphi`` in seconds, ``math.inf``
    disables the channel.
    """

    omega_10: float = TWO_PI * 5.37e9
    anharmonicity_alpha: float = 0.05
    T1: float = 34e-6
    Tphi: float = 68e-6
    levels: int = 2

    def __post_init__(self):
        if not self.omega_10 > 0:
            raise ValueError("omega_10 must be positive")
        if not (self.T1 > 0 and self.Tphi > 0):
            raise ValueError("T1 and Tphi must be positive")
        if self.levels not in (2, 3):
            raise ValueError("levels must be 2 or 3")
        if self.levels == 3 and not 0 < self.anharmonicity_alpha < 1:
            raise ValueError("three-level model needs 0 < alpha < 1")

    @property
    def T2(self) -> float:
        return 1.0 / (1.0 / (2 * self.T1) + 1.0 / self.Tphi)

    @property
    def period(self) -> float:
        return TWO_PI / self.omega_10

    @property
    def frequency(self) -> float:
        return self.omega_10 / TWO_PI

    def without_decay(self) -> "QubitModel":
        return replace(self, T1=math.inf, Tphi=math.inf)

    @classmethod
    def from_t2(cls, T1: float, T2: float, **kw) -> "QubitModel":
        """Build from T1 and T2 (Ramsey) instead of Tphi."""
        inv = 1.0 / T2 - 1.0 / (2 * T1)
        if inv < 0:
            raise ValueError("T2 cannot exceed 2*T1")
        return cls(T1=T1, Tphi=math.inf if inv == 0 else 1.0 / inv, **kw)


@dataclass(frozen=True)
class CouplingParams:
    """Pulse-to-qubit coupling, physical (circuit values) or normalized.

    Normalized mode fixes the delta-limit tip angle to pi/target_nu_pi.
    """

    mode: Literal["physical", "normalized"] = "normalized"
    target_nu_pi: int | None = 352
    attenuation: float | None = None
    coupling_capacitance: float | None = None
    qubit_capacitance: float | None = None
    n_junctions: int | None = None

    def __post_init__(self):
        if self.mode == "normalized":
            if self.target_nu_pi is None or self.target_nu_pi < 1:
                raise ValueError("normalized coupling needs target_nu_pi >= 1")
        elif self.mode == "physical":
            vals = (self.attenuation, self.coupling_capacitance, self.qubit_capacitance, self.n_junctions)
            if any(v is None for v in vals):
                raise ValueError("physical coupling needs attenuation, coupling_capacitance, "
                                 "qubit_capacitance and n_junctions")
            if any(v <= 0 for v in vals):
                raise ValueError("physical coupling values must be positive")
        else:
            raise ValueError(f"unknown coupling mode {self.mode!r}")


def tip_angle(coupling: CouplingParams, qubit: QubitModel) -> float:
    """Rotation per delta pulse in radians."""
    if coupling.mode == "normalized":
        return math.pi / coupling.target_nu_pi
    return (coupling.n_junctions * coupling.attenuation * coupling.coupling_capacitance * PHI0
            * math.sqrt(2 * qubit.omega_10 / (HBAR * coupling.qubit_capacitance)))


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True)
class DensityState:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def validate(self, tol: float = 1e-9) -> None:
        m = self.matrix
        if abs(np.trace(m) - 1) > tol:
            raise ValueError(f"trace {np.trace(m).real:.12f} != 1")
        if np.max(np.abs(m - m.conj().T)) > 1e-12 + tol * 1e-3:
            raise ValueError("matrix is not Hermitian")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -tol:
            raise ValueError("matrix has negative eigenvalues")

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def bloch(self) -> np.ndarray:
        """Bloch vector of the 0-1 block: (<X>, <Y>, <Z>) with Z = p0 - p1."""
        m = self.matrix
        return np.array([2 * m[0, 1].real, -2 * m[0, 1].imag, (m[0, 0] - m[1, 1]).real])

    @classmethod
    def pure(cls, psi: Sequence[complex]) -> "DensityState":
        v = np.asarray(psi, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))


def ground_state(levels: int = 2) -> DensityState:
    m = np.zeros((levels, levels), dtype=complex)
    m[0, 0] = 1
    return DensityState(m)


def excited_population(state: DensityState | np.ndarray) -> float:
    """Population of |1>."""
    m = state.matrix if isinstance(state, DensityState) else np.asarray(state)
    return float(min(1.0, max(0.0, m[1, 1].real)))


@dataclass
class Trajectory:
    """Density matrices at ``times`` (seconds)."""

    times: np.ndarray
    states: np.ndarray  # (n, d, d)
    pulse_index: np.ndarray | None = None  # pulses delivered before each sample

    def __len__(self) -> int:
        return self.times.size

    def state(self, i: int) -> DensityState:
        return DensityState(self.states[i])

    @property
    def p1(self) -> np.ndarray:
        return np.clip(self.states[:, 1, 1].real, 0.0, 1.0)

    @property
    def leakage(self) -> np.ndarray:
        if self.states.shape[1] < 3:
            return np.zeros(len(self))
        return self.states[:, 2, 2].real

    @property
    def trace(self) -> np.ndarray:
        return np.einsum("nii->n", self.states).real

    @property
    def purity(self) -> np.ndarray:
        return np.einsum("nij,nji->n", self.states, self.states).real

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.times, self.p1, self.purity]), delimiter=",",
                   header="time_s,p1,purity", comments="", fmt="%.12e")


# ---------------------------------------------------------------------------
# operators and superoperators


def _ladder(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def _operators(qubit: QubitModel):
    d = qubit.levels
    a = _ladder(d)
    w = qubit.omega_10
    energies = np.array([0.0, w, 2 * w - qubit.anharmonicity_alpha * w])[:d]
    h0 = np.diag(energies).astype(complex)
    x = a + a.conj().T
    y = -1j * a + 1j * a.conj().T
    c_ops = []
    if math.isfinite(qubit.T1):
        c_ops.append(math.sqrt(1.0 / qubit.T1) * a)
    if math.isfinite(qubit.Tphi):
        c_ops.append(math.sqrt(2.0 / qubit.Tphi) * np.diag(np.arange(d)).astype(complex))
    return h0, x, y, c_ops


def _spre(a):
    return np.kron(np.eye(a.shape[0]), a)


def _spost(a):
    return np.kron(a.T, np.eye(a.shape[0]))


def liouvillian(h: np.ndarray, c_ops: Iterable[np.ndarray] = ()) -> np.ndarray:
    """Lindblad generator for column-stacked density matrices."""
    L = -1j * (_spre(h) - _spost(h))
    for c in c_ops:
        cdc = c.conj().T @ c
        L += np.kron(c.conj(), c) - 0.5 * _spre(cdc) - 0.5 * _spost(cdc)
    return L


def _vec(m: np.ndarray) -> np.ndarray:
    return m.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape(d, d, order="F")


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m.conj(), -1, -2))


@dataclass(frozen=True)
class _Model:
    L0: np.ndarray
    LD: np.ndarray  # drive superoperator per unit (Omega_d * s)
    x: np.ndarray
    y: np.ndarray
    d: int


@lru_cache(maxsize=64)
def _model(qubit: QubitModel) -> _Model:
    h0, x, y, c_ops = _operators(qubit)
    L0 = liouvillian(h0, c_ops)
    # H_drive = -Omega s X  ->  L_drive = -i[-X, .] = i[X, .]
    LD = 1j * (_spre(x) - _spost(x))
    return _Model(L0=L0, LD=LD, x=x, y=y, d=qubit.levels)


def free_propagator(qubit: QubitModel, t: float) -> np.ndarray:
    return linalg.expm(_model(qubit).L0 * t)


def rotation_superop(qubit: QubitModel, angle: float, phase: float = 0.0) -> np.ndarray:
    """Instantaneous kick exp(+i angle/2 (cos(phase) X + sin(phase) Y)).

    The sign matches a unit-area delta pulse under H = -Omega_d s(t) X.
    """
    m = _model(qubit)
    u = linalg.expm(0.5j * angle * (math.cos(phase) * m.x + math.sin(phase) * m.y))
    return np.kron(u.conj(), u)


# ---------------------------------------------------------------------------
# discrete-kick evolution


def evolve_discrete(qubit: QubitModel, delta_theta: float, k: int, n_pulses: int,
                    axes: float | Sequence[float] | Callable[[int], float] = 0.0, *,
                    initial: DensityState | None = None, drive_detuning: float = 0.0,
                    free_time: float | None = None) -> Trajectory:
    """Instantaneous rotations separated by ``k`` qubit periods of free evolution.

    Free evolution is in the lab frame, so on resonance it returns the qubit
    to the same phase before each kick.  ``drive_detuning`` (rad/s) shifts
    the drive angular frequency w10/k by that amount, so successive kicks
    land at a drifting qubit phase.  ``axes`` gives the kick axis phase per
    pulse.  The returned trajectory holds the initial state and the state
    after each kick plus the following free period.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if n_pulses < 0:
        raise ValueError("n_pulses must be >= 0")
    if free_time is None:
        w_d = qubit.omega_10 / k + drive_detuning
        if w_d <= 0:
            raise ValueError("drive frequency must stay positive")
        free_time = TWO_PI / w_d
    rho0 = (initial or ground_state(qubit.levels)).matrix
    d = rho0.shape[0]
    if d != qubit.levels:
        raise ValueError("initial state dimension does not match qubit levels")
    F = free_propagator(qubit, free_time)
    if callable(axes):
        phases = [axes(j) for j in range(n_pulses)]
    elif np.ndim(axes) == 0:
        phases = [float(axes)] * n_pulses
    else:
        phases = list(axes)
        if len(phases) != n_pulses:
            raise ValueError("axis schedule length must equal n_pulses")
    cache: dict[float, np.ndarray] = {}
    v = _vec(rho0)
    out = np.empty((n_pulses + 1, d, d), dtype=complex)
    out[0] = rho0
    for j, ph in enumerate(phases):
        P = cache.get(ph)
        if P is None:
            P = cache[ph] = F @ rotation_superop(qubit, delta_theta, ph)
        v = P @ v
        out[j + 1] = _unvec(v, d)
    times = free_time * np.arange(n_pulses + 1)
    return Trajectory(times=times, states=_hermitize(out), pulse_index=np.arange(n_pulses + 1))


# ---------------------------------------------------------------------------
# finite-width pulse trains

_GL = math.sqrt(3) / 6
_MAGNUS_C = math.sqrt(3) / 12


def _drive_signal(t: np.ndarray, centers: np.ndarray, sigmas: np.ndarray, weights: np.ndarray) -> np.ndarray:
    z = (t[:, None] - centers[None, :]) / sigmas[None, :]
    g = np.exp(-0.5 * z * z) / (math.sqrt(TWO_PI) * sigmas[None, :])
    return g @ weights


def _magnus_steps(m: _Model, omega_d: float, edges: np.ndarray, centers, sigmas, weights) -> np.ndarray:
    """Fourth-order Magnus propagators for each interval of ``edges``.

    Generator A(t) = L0 + Omega_d s(t) LD; with two Gauss nodes
    Omega = h/2 (A1 + A2) + sqrt(3)/12 h^2 [A2, A1], and
    [A2, A1] = Omega_d (s2 - s1) [LD, L0].
    """
    a, b = edges[:-1], edges[1:]
    h = b - a
    mid = 0.5 * (a + b)
    s1 = _drive_signal(mid - _GL * h, centers, sigmas, weights) * omega_d
    s2 = _drive_signal(mid + _GL * h, centers, sigmas, weights) * omega_d
    comm = m.LD @ m.L0 - m.L0 @ m.LD
    gen = (h[:, None, None] * m.L0[None]
           + (0.5 * h * (s1 + s2))[:, None, None] * m.LD[None]
           + (_MAGNUS_C * h * h * (s2 - s1))[:, None, None] * comm[None])
    return linalg.expm(gen)


def _chain(props: np.ndarray) -> np.ndarray:
    out = np.eye(props.shape[-1], dtype=complex)
    for p in props:
        out = p @ out
    return out


def _step_edges(t0: float, t1: float, max_step: float, extra: np.ndarray | None = None) -> np.ndarray:
    n = max(1, int(math.ceil((t1 - t0) / max_step - 1e-9)))
    e = np.linspace(t0, t1, n + 1)
    if extra is not None and extra.size:
        e = np.unique(np.concatenate([e, extra[(extra > t0) & (extra < t1)]]))
    return e


def _default_max_step(qubit: QubitModel, sigma_min: float, points_per_period: int, points_per_sigma: int) -> float:
    return min(qubit.period / points_per_period, sigma_min / points_per_sigma)


def evolve_continuous(qubit: QubitModel, train: PulseTrain, omega_d: float,
                      initial: DensityState | None = None, output: Literal["idle"] | np.ndarray = "idle", *,
                      points_per_period: int = 200, points_per_sigma: int = 24,
                      support: float = 8.0) -> Trajectory:
    """Integrate the Lindblad equation under a Gaussian pulse train.

    The time axis is cut into one window per pulse, bounded by the midpoints
    between neighbouring pulses (the outer edges are padded to cover the
    pulse support).  Window propagators are built from fourth-order Magnus
    steps and cached, so a periodic train costs a handful of windows.

    ``output="idle"`` samples the state at every window boundary, i.e. at the
    centre of the idle interval after each pulse.  An array of times samples
    the state there instead (times must lie inside the simulated span).
    The step size honours both ``points_per_period`` per qubit period and
    ``points_per_sigma`` per pulse sigma.
    """
    if len(train) == 0:
        raise ValueError("pulse train is empty")
    m = _model(qubit)
    rho0 = (initial or ground_state(qubit.levels)).matrix
    d = m.d
    c, sg, wt = train.times, train.sigmas, train.weights
    n = len(train)
    period = 1.0 / train.drive_frequency
    max_step = _default_max_step(qubit, float(sg.min()), points_per_period, points_per_sigma)
    pad = np.maximum(0.5 * period, support * sg)
    mids = 0.5 * (c[:-1] + c[1:])
    bounds = np.concatenate([[c[0] - pad[0]], mids, [c[-1] + pad[-1]]])
    dense = not (isinstance(output, str) and output == "idle")
    t_out = np.asarray(output, dtype=float) if dense else bounds
    if dense and (t_out.min() < bounds[0] - 1e-15 or t_out.max() > bounds[-1] + 1e-15):
        raise ValueError("output times outside the simulated span")

    cache: dict[tuple, np.ndarray] = {}
    v = _vec(rho0).astype(complex)
    order = list(np.argsort(t_out, kind="stable"))
    results = np.empty((t_out.size, d, d), dtype=complex)
    ptr = 0
    if dense:
        while ptr < len(order) and t_out[order[ptr]] <= bounds[0]:
            results[order[ptr]] = rho0
            ptr += 1
    else:
        results[0] = rho0
    for j in range(n):
        t0, t1 = bounds[j], bounds[j + 1]
        near = np.flatnonzero(np.abs(c - 0.5 * (t0 + t1)) < 0.5 * (t1 - t0) + support * sg)
        if dense:
            inside = []
            while ptr < len(order) and t_out[order[ptr]] <= t1:
                inside.append(order[ptr])
                ptr += 1
            if inside:
                extra = t_out[inside]
                edges = _step_edges(t0, t1, max_step, extra)
                props = _magnus_steps(m, omega_d, edges, c[near], sg[near], wt[near])
                marks = {float(tt): i for i, tt in zip(inside, extra)}
                for e_hi, p in zip(edges[1:], props):
                    v = p @ v
                    i_hit = marks.pop(float(e_hi), None)
                    if i_hit is not None:
                        results[i_hit] = _unvec(v, d)
                        # duplicated output times share the state
                        for other in [i for i in inside if t_out[i] == e_hi and i != i_hit]:
                            results[other] = results[i_hit]
                continue
        key = (round(t1 - t0, 18),) + tuple(
            (round(c[i] - t0, 18), round(sg[i], 18), round(wt[i], 12)) for i in near)
        W = cache.get(key)
        if W is None:
            edges = _step_edges(t0, t1, max_step)
            W = cache[key] = _chain(_magnus_steps(m, omega_d, edges, c[near], sg[near], wt[near]))
        v = W @ v
        if not dense:
            results[j + 1] = _unvec(v, d)
    if dense:
        while ptr < len(order):  # exactly at final bound
            results[order[ptr]] = _unvec(v, d)
            ptr += 1
        pidx = np.searchsorted(c, t_out, side="right")
    else:
        pidx = np.arange(n + 1)
    return Trajectory(times=t_out.copy(), states=_hermitize(results), pulse_index=pidx)


def evolve_continuous_ode(qubit: QubitModel, train: PulseTrain, omega_d: float, t_eval: np.ndarray,
                          initial: DensityState | None = None, *, rtol: float = 1e-10,
                          atol: float = 1e-12) -> Trajectory:
    """Reference integrator: drho/dt = L(t) rho with scipy's DOP853.

    Slow; meant as an independent check of :func:`evolve_continuous`.
    """
    m = _model(qubit)
    d = m.d
    rho0 = (initial or ground_state(qubit.levels)).matrix
    c, sg, wt = train.times, train.sigmas, train.weights
    t_eval = np.asarray(t_eval, float)
    t0 = min(t_eval[0], c[0] - 8 * sg.max())
    scale = qubit.period  # integrate in qubit periods for conditioning
    L0s, LDs = m.L0 * scale, m.LD * scale

    def rhs(s, y):
        t = t0 + s * scale
        drive = omega_d * _drive_signal(np.array([t]), c, sg, wt)[0]
        return (L0s + drive * LDs) @ y

    sol = integrate.solve_ivp(rhs, (0.0, (t_eval[-1] - t0) / scale), _vec(rho0).astype(complex),
                              method="DOP853", t_eval=(t_eval - t0) / scale, rtol=rtol, atol=atol,
                              max_step=min(0.05, sg.min() / scale / 4))
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    states = np.stack([_unvec(sol.y[:, i], d) for i in range(sol.y.shape[1])])
    return Trajectory(times=t_eval.copy(), states=_hermitize(states))


def xpi_fidelity(trajectory: Trajectory, train: PulseTrain | None = None) -> tuple[float, int]:
    """Maximum idle-centre P1 and the pulse count where it occurs.

    Only samples taken after a whole number of pulses count (the
    ``pulse_index`` of an idle-sampled trajectory).  Raises ValueError when
    the maximum is the last sample, i.e. the first Rabi half-period was not
    completed.
    """
    p1 = trajectory.p1
    idx = trajectory.pulse_index if trajectory.pulse_index is not None else np.arange(len(p1))
    if train is not None and len(p1) != len(train) + 1:
        raise ValueError("trajectory must be sampled at idle centres (len(train) + 1 samples)")
    i = int(np.argmax(p1))
    if i == len(p1) - 1:
        raise ValueError("trajectory too short: P1 still rising at the last pulse")
    return float(p1[i]), int(idx[i])


# ---------------------------------------------------------------------------
# periodic trains: effective tip angle and coupling normalization


def _window_superop(qubit: QubitModel, omega_d: float, sigma: float, drive_frequency: float, *,
                    neighbours: int = 3, points_per_period: int = 200, points_per_sigma: int = 24) -> np.ndarray:
    """Propagator over one drive period centred on an interior pulse."""
    m = _model(qubit)
    period = 1.0 / drive_frequency
    centers = period * np.arange(-neighbours, neighbours + 1, dtype=float)
    ones = np.ones_like(centers)
    edges = _step_edges(-0.5 * period, 0.5 * period,
                        _default_max_step(qubit, sigma, points_per_period, points_per_sigma))
    return _chain(_magnus_steps(m, omega_d, edges, centers, ones * sigma, ones))


def gaussian_tip_angle(qubit: QubitModel, omega_d: float, sigma: float, k: int = 2, **kw) -> float:
    """Rotation angle per drive period of an infinite periodic Gaussian train.

    Read from the decay-free one-period propagator; the free precession over
    k qubit periods is the identity, so the whole map is one rotation.
    """
    q = replace(qubit.without_decay(), levels=2)
    S = _window_superop(q, omega_d, sigma, q.frequency / k, **kw)
    tr_u = math.sqrt(max(0.0, min(4.0, np.trace(S).real)))
    return 2 * math.acos(min(1.0, tr_u / 2))


def normalize_coupling(qubit: QubitModel, target_nu_pi: float, sigma: float, k: int = 2, **kw) -> float:
    """Coupling Omega_d giving a continuous nu_pi = pi/theta equal to the target.

    Bracketed root search around the first-order estimate
    Omega_d = pi / (2 nu_pi exp(-(w10 sigma)^2/2)).
    """
    if sigma <= 0:
        return math.pi / (2 * target_nu_pi)
    guess = math.pi / (2 * target_nu_pi * math.exp(-0.5 * (qubit.omega_10 * sigma) ** 2))

    def f(om):
        return math.pi / gaussian_tip_angle(qubit, om, sigma, k, **kw) - target_nu_pi

    lo, hi = 0.7 * guess, 1.4 * guess
    while f(lo) < 0:
        lo *= 0.7
    while f(hi) > 0:
        hi *= 1.4
    return optimize.brentq(f, lo, hi, xtol=1e-14 * guess, rtol=1e-13)


@dataclass
class PeriodicScan:
    """Idle-centre populations of a periodic Gaussian train."""

    p1: np.ndarray            # index n: after n pulses
    leakage: np.ndarray
    omega_d: float
    sigma: float
    drive_frequency: float

    @property
    def fidelity(self) -> float:
        return float(self.p1.max())

    @property
    def nu_pi(self) -> int:
        return int(np.argmax(self.p1))


def periodic_xpi(qubit: QubitModel, omega_d: float, sigma: float, n_pulses: int, k: int = 2, *,
                 start_offset: float = 0.0, shifts: np.ndarray | None = None, **kw) -> PeriodicScan:
    """P1 after each of ``n_pulses`` identical, evenly spaced Gaussian pulses.

    Equivalent to :func:`evolve_continuous` on an interior window basis:
    the first window has no earlier neighbours, every later window sees the
    full periodic drive.  The trailing neighbour of the last sampled pulse is
    included, so the scan describes a longer train sampled along the way.

    ``shifts`` (seconds, one per pulse) displaces each pulse inside its
    window.  Away from the pulse the window generator is time independent,
    so a window with its pulse moved by d is exp(-L0 d) W exp(L0 d); the
    neighbour tails are taken as unshifted, which is exact while shifts stay
    small compared with the pulse spacing.
    """
    m = _model(qubit)
    period = k * qubit.period
    max_step = _default_max_step(qubit, sigma, kw.get("points_per_period", 200), kw.get("points_per_sigma", 24))
    nb = kw.get("neighbours", 3)
    # first window: pulse 0 at t=0 plus later pulses only, padded on the left
    pad = max(0.5 * period, 8 * sigma)
    centers = period * np.arange(0, nb + 1, dtype=float) + start_offset
    ones = np.ones_like(centers)
    edges = _step_edges(start_offset - pad, start_offset + 0.5 * period, max_step)
    W0 = _chain(_magnus_steps(m, omega_d, edges, centers, ones * sigma, ones))
    W = _window_superop(qubit, omega_d, sigma, 1.0 / period, **{k_: v for k_, v in kw.items()
                                                              if k_ in ("neighbours", "points_per_period",
                                                                        "points_per_sigma")})
    d = m.d
    v = _vec(ground_state(d).matrix).astype(complex)
    p1 = np.empty(n_pulses + 1)
    lk = np.empty(n_pulses + 1)
    p1[0], lk[0] = 0.0, 0.0
    idx11 = 1 + d * 1
    idx22 = 2 + d * 2 if d > 2 else None
    if shifts is not None:
        shifts = np.asarray(shifts, dtype=float)
        if shifts.shape != (n_pulses,):
            raise ValueError("need one shift per pulse")
        if np.abs(shifts).max(initial=0.0) > 0.25 * period:
            raise ValueError("pulse shifts must stay within a quarter drive period")
        fwd = linalg.expm(shifts[:, None, None] * m.L0[None])
        bwd = linalg.expm(-shifts[:, None, None] * m.L0[None])
    for j in range(n_pulses):
        Wj = W0 if j == 0 else W
        v = Wj @ v if shifts is None else bwd[j] @ (Wj @ (fwd[j] @ v))
        p1[j + 1] = v[idx11].real
        lk[j + 1] = v[idx22].real if idx22 is not None else 0.0
    return PeriodicScan(p1=np.clip(p1, 0, 1), leakage=lk, omega_d=omega_d, sigma=sigma,
                        drive_frequency=1.0 / period)


# ---------------------------------------------------------------------------
# kicks at arbitrary times (frame rotating at omega_10)


def rotating_frame_generator(qubit: QubitModel, detuning: float = 0.0) -> np.ndarray:
    """Lindblad generator in the frame rotating at omega_10.

    ``detuning`` (rad/s) is the qubit frequency minus the frame frequency;
    the third level keeps its anharmonic offset.
    """
    h0, _, _, c_ops = _operators(qubit)
    n = np.arange(qubit.levels)
    h = h0 - np.diag(n * qubit.omega_10).astype(complex) + np.diag(n * detuning).astype(complex)
    return liouvillian(h, c_ops)


def kick_sequence_superop(qubit: QubitModel, times: np.ndarray, angles: np.ndarray | float,
                          extra_phases: np.ndarray | float = 0.0, *, t_start: float | None = None,
                          t_stop: float | None = None, detuning: float = 0.0) -> np.ndarray:
    """Superoperator of delta kicks at lab times ``times`` in the rotating frame.

    A lab-frame kick about x at time t is a rotating-frame kick about the
    axis at phase omega_10 * t (plus ``extra_phases``).  Between kicks only
    the rotating-frame generator acts.  The map runs from ``t_start``
    (default first kick) to ``t_stop`` (default last kick).
    """
    times = np.asarray(times, dtype=float)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("kick times must be sorted")
    angles = np.broadcast_to(np.asarray(angles, float), times.shape)
    phases = np.broadcast_to(np.asarray(extra_phases, float), times.shape)
    t0 = times[0] if t_start is None and times.size else (t_start or 0.0)
    t1 = times[-1] if t_stop is None and times.size else (t_stop if t_stop is not None else t0)
    if times.size and (times[0] < t0 - 1e-18 or times[-1] > t1 + 1e-18):
        raise ValueError("kicks fall outside [t_start, t_stop]")
    L = rotating_frame_generator(qubit, detuning)
    gaps = np.diff(np.concatenate([[t0], times, [t1]]))
    gaps = np.maximum(gaps, 0.0)
    # identical gaps are common, so cache their propagators
    uniq, inv = np.unique(np.round(gaps, 18), return_inverse=True)
    frees = linalg.expm(uniq[:, None, None] * L[None])
    out = frees[inv[0]]
    kick_cache: dict[tuple, np.ndarray] = {}
    for j in range(times.size):
        ph = (qubit.omega_10 * times[j] + phases[j]) % TWO_PI
        key = (round(ph, 12), float(angles[j]))
        K = kick_cache.get(key)
        if K is None:
            K = kick_cache[key] = rotation_superop(qubit, float(angles[j]), ph)
        out = frees[inv[j + 1]] @ K @ out
    return out


def apply_superop(superop: np.ndarray, state: DensityState | None = None, levels: int = 2) -> DensityState:
    rho = (state or ground_state(levels)).matrix
    d = rho.shape[0]
    return DensityState(_hermitize(_unvec(superop @ _vec(rho), d)))
