"""Single-qubit randomized benchmarking over the nine-gate primitive/Pauli set."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Literal, Sequence

import numpy as np
from scipy import linalg

from ..jj_core import FitError
from ..qubit_sim import QubitModel, rotating_frame_generator, rotation_superop
from .records import ExperimentRecord, FitResult, fit_curve

__all__ = ["RB_GATES", "RbConfig", "RbSequence", "gate_unitary", "generate_rb_sequences", "run_rb", "fit_rb"]

# label -> (rotation angle in units of pi, axis phase)
RB_GATES: dict[str, tuple[float, float]] = {
    "I": (0.0, 0.0),
    "X_pi/2": (0.5, 0.0),
    "-X_pi/2": (0.5, math.pi),
    "Y_pi/2": (0.5, 0.5 * math.pi),
    "-Y_pi/2": (0.5, 1.5 * math.pi),
    "X_pi": (1.0, 0.0),
    "-X_pi": (1.0, math.pi),
    "Y_pi": (1.0, 0.5 * math.pi),
    "-Y_pi": (1.0, 1.5 * math.pi),
}
_LABELS = tuple(RB_GATES)
_SX = np.array([[0, 1], [1, 0]], complex)
_SY = np.array([[0, 1j], [-1j, 0]], complex)  # matches Y = -i a + i a^dag on two levels


def gate_unitary(label: str, over_rotation: float = 0.0) -> np.ndarray:
    """exp(+i theta/2 (cos phi X + sin phi Y)), the same sense as the kick model."""
    frac, phi = RB_GATES[label]
    theta = math.pi * frac * (1.0 + over_rotation)
    n = math.cos(phi) * _SX + math.sin(phi) * _SY
    return math.cos(theta / 2) * np.eye(2) + 1j * math.sin(theta / 2) * n


@dataclass(frozen=True)
class RbConfig:
    """Randomized-benchmarking run description.

    ``slot_mode="uniform"`` pads every gate to the pi-gate slot
    (nu_pi + 2 drive periods); ``"native"`` gives each gate its own active
    length plus two idle periods.  ``over_rotation`` scales every rotation
    angle by (1 + eps) to inject a coherent error.
    """

    lengths: tuple[int, ...] = (1, 2, 4, 6, 8, 10, 15, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    sequences_per_length: int = 30
    seed: int = 0
    clifford_rescale: float = 1.125
    target_pole: int = 0
    allow_two_gate_fallback: bool = True
    shots: int | None = None
    over_rotation: float = 0.0
    nu_pi: int = 352
    k: int = 2
    slot_mode: Literal["uniform", "native"] = "uniform"
    gates: tuple[str, ...] = field(default=_LABELS)

    def __post_init__(self):
        m = np.asarray(self.lengths)
        if m.size == 0 or np.any(m < 1) or np.any(np.diff(m) <= 0):
            raise ValueError("lengths must be positive and strictly ascending")
        if self.sequences_per_length < 1:
            raise ValueError("sequences_per_length must be >= 1")
        if self.target_pole not in (0, 1):
            raise ValueError("target_pole must be 0 or 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.nu_pi < 2:
            raise ValueError("nu_pi must be >= 2")
        unknown = set(self.gates) - set(RB_GATES)
        if unknown:
            raise ValueError(f"unknown gates {sorted(unknown)}")


@dataclass(frozen=True)
class RbSequence:
    m: int
    gates: tuple[str, ...]
    recovery: tuple[str, ...]
    pole: int
    fallback: bool = False

    @property
    def all_gates(self) -> tuple[str, ...]:
        return self.gates + self.recovery


def _pole_weight(u: np.ndarray, pole: int) -> float:
    return float(abs(u[pole, 0]) ** 2)


def _recovery(u: np.ndarray, gates: Sequence[str], pole: int, allow_two: bool):
    for g in gates:
        if _pole_weight(gate_unitary(g) @ u, pole) > 1 - 1e-9:
            return (g,), False
    if allow_two:
        for g1, g2 in product(gates, repeat=2):
            if _pole_weight(gate_unitary(g2) @ gate_unitary(g1) @ u, pole) > 1 - 1e-9:
                return (g1, g2), True
    raise ValueError("no recovery to the target pole within two gates")


def generate_rb_sequences(config: RbConfig) -> list[RbSequence]:
    """Random sequences per length, each closed by a gate that maps |0> to the target pole."""
    streams = np.random.SeedSequence(config.seed).spawn(len(config.lengths))
    units = {g: gate_unitary(g) for g in config.gates}
    out = []
    for m, ss in zip(config.lengths, streams):
        rng = np.random.default_rng(ss)
        for _ in range(config.sequences_per_length):
            idx = rng.integers(0, len(config.gates), size=int(m))
            gates = tuple(config.gates[i] for i in idx)
            u = np.eye(2, dtype=complex)
            for g in gates:
                u = units[g] @ u
            rec, fb = _recovery(u, config.gates, config.target_pole, config.allow_two_gate_fallback)
            out.append(RbSequence(int(m), gates, rec, config.target_pole, fb))
    return out


def _unitary_superop(u: np.ndarray) -> np.ndarray:
    return np.kron(u.conj(), u)


def _depolarizing_superops(config: RbConfig, r: float) -> dict[str, np.ndarray]:
    p = 1.0 - 2.0 * r
    # rho -> p rho + (1 - p) I/2, column-stacked
    vid = np.eye(2).reshape(-1, order="F")
    dep = p * np.eye(4) + (1 - p) * 0.5 * np.outer(vid, vid)
    return {g: dep @ _unitary_superop(gate_unitary(g, config.over_rotation)) for g in RB_GATES}


def gate_slot_periods(label: str, config: RbConfig) -> int:
    frac = RB_GATES[label][0]
    active = 0 if frac == 0 else (config.nu_pi if frac == 1.0 else config.nu_pi // 2)
    if label == "I" or config.slot_mode == "uniform":
        return config.nu_pi + 2
    return active + 2


def _lindblad_superops(config: RbConfig, qubit: QubitModel) -> dict[str, np.ndarray]:
    """Gates as trains of delta kicks, centred in their slot, decay-only between kicks."""
    if qubit.levels != 2:
        raise ValueError("RB uses the two-level model")
    L = rotating_frame_generator(qubit)
    t_d = config.k * qubit.period
    step = linalg.expm(t_d * L)
    dth = math.pi / config.nu_pi * (1.0 + config.over_rotation)
    out = {}
    for g, (frac, phi) in RB_GATES.items():
        n = 0 if frac == 0 else (config.nu_pi if frac == 1.0 else config.nu_pi // 2)
        slot = gate_slot_periods(g, config) * t_d
        if n == 0:
            out[g] = linalg.expm(slot * L)
            continue
        lead = 0.5 * (slot - (n - 1) * t_d)
        D = linalg.expm(lead * L)
        K = rotation_superop(qubit, dth, phi)
        out[g] = D @ np.linalg.matrix_power(K @ step, n - 1) @ K @ D
    return out


def _sequence_fidelity(seq: RbSequence, ops: dict[str, np.ndarray]) -> float:
    v = np.array([1, 0, 0, 0], complex)
    for g in seq.all_gates:
        v = ops[g] @ v
    rho = v.reshape(2, 2, order="F")
    return float(rho[seq.pole, seq.pole].real)


def run_rb(config: RbConfig, model: Literal["depolarizing", "lindblad"] = "depolarizing", *,
           r: float = 0.0, qubit: QubitModel | None = None, threads: int = 1) -> ExperimentRecord:
    """Mean pole population versus sequence length.

    ``depolarizing`` applies a depolarizing channel with error per gate
    ``r`` after each ideal gate; ``lindblad`` builds each gate from kicks
    with T1/Tphi decay.  With ``config.shots`` each sequence is sampled.
    """
    if not 0 <= r <= 0.5:
        raise ValueError("r must be in [0, 0.5]")
    seqs = generate_rb_sequences(config)
    if model == "depolarizing":
        ops = _depolarizing_superops(config, r)
        q = qubit
    elif model == "lindblad":
        q = qubit or QubitModel()
        ops = _lindblad_superops(config, q)
    else:
        raise ValueError(f"unknown noise model {model!r}")
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            fid = np.array(list(ex.map(lambda s: _sequence_fidelity(s, ops), seqs)))
    else:
        fid = np.array([_sequence_fidelity(s, ops) for s in seqs])
    fid = np.clip(fid, 0.0, 1.0)
    if config.shots is not None:
        rngs = np.random.SeedSequence([config.seed, 1]).spawn(len(seqs))
        fid = np.array([np.random.default_rng(s).binomial(config.shots, f) / config.shots for s, f in zip(rngs, fid)])
    m = np.asarray(config.lengths)
    per = fid.reshape(m.size, config.sequences_per_length)
    t_d = config.k * (q or QubitModel()).period
    slot_ns = [gate_slot_periods(g, config) * t_d * 1e9 for g in config.gates]
    return ExperimentRecord(
        name="rb", axes={"m": m}, values=per.mean(1), value_name="sequence_fidelity",
        coords={"m_rescaled": ("m", config.clifford_rescale * m)},
        metadata={"seed": config.seed, "model": model, "r_injected": r if model == "depolarizing" else None,
                  "sequences_per_length": config.sequences_per_length, "shots": config.shots,
                  "target_pole": config.target_pole, "slot_mode": config.slot_mode,
                  "mean_gate_time_ns": float(np.mean(slot_ns)), "over_rotation": config.over_rotation,
                  "fallback_count": int(sum(s.fallback for s in seqs)),
                  "sem": (per.std(1, ddof=1) / math.sqrt(per.shape[1]) if per.shape[1] > 1
                          else np.zeros(m.size)).tolist()})


def fit_rb(record: ExperimentRecord, *, rescaled: bool = False) -> FitResult:
    """Fit F(m) = a p^m + b; r = (1 - p)/2.

    Data that is constant to 1e-12 returns p = 1, r = 0 without fitting.
    """
    m = record.coords["m_rescaled"][1] if rescaled else record.axes["m"]
    m = np.asarray(m, float)
    y = np.asarray(record.values, float)
    if np.unique(m).size < 4:
        raise FitError("need at least 4 distinct sequence lengths")
    if np.ptp(y) < 1e-12:
        return FitResult(model="rb_exponential", params={"a": 0.0, "p": 1.0, "b": float(y.mean()), "r": 0.0},
                         stderr={"a": 0.0, "p": 0.0, "b": 0.0, "r": 0.0}, residual_norm=0.0,
                         extras={"rescaled": rescaled})

    def f(x, a, p, b):
        return a * p ** x + b

    # initial p from the first and last points assuming b = 1/2
    y0, y1 = max(y[0] - 0.5, 1e-6), max(y[-1] - 0.5, 1e-6)
    p0 = float(np.clip((y1 / y0) ** (1.0 / max(m[-1] - m[0], 1)), 0.5, 1 - 1e-9))
    res = fit_curve("rb_exponential", f, m, y, [y0 / p0 ** m[0], p0, 0.5], ["a", "p", "b"],
                    bounds=([0, 0, 0], [1.5, 1, 1]))
    res.params["r"] = (1 - res.params["p"]) / 2
    res.stderr["r"] = res.stderr["p"] / 2
    res.extras["rescaled"] = rescaled
    return res
