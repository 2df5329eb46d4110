"""Command-line front end.

Every command reads one validated YAML/JSON config, writes CSV/JSON
outputs plus ``manifest.json`` into the output directory, and exits with
0 (success), 2 (configuration error) or 3 (numerical failure).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .constants import PHI0
from .experiments.records import json_default

OUTPUT_ENV = "JPGSIM_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DeviceSection(_Section):
    critical_current: float = Field(3.05e-3, gt=0)
    normal_resistance: float = Field(6.93e-3, gt=0)
    n_junctions: int = Field(4650, ge=1)
    beta_c: float = Field(0.01, gt=0)


class CouplingSection(_Section):
    mode: Literal["normalized", "physical"] = "normalized"
    target_nu_pi: float = Field(352, gt=0)
    attenuation: float = Field(1.0, gt=0)
    coupling_capacitance: float = Field(0.0, ge=0)
    qubit_capacitance: float = Field(1.0e-13, gt=0)


class QubitSection(_Section):
    frequency: float = Field(5.37e9, gt=0)
    anharmonicity_alpha: float = Field(0.05, gt=0, lt=1)
    T1: float = Field(34e-6, gt=0)
    Tphi: float = Field(68e-6, gt=0)
    levels: Literal[2, 3] = 2
    coupling: CouplingSection = CouplingSection()


class DriveSection(_Section):
    k: int = Field(2, ge=1)
    samples_per_period: int = Field(24, ge=1)
    frequency: float | None = Field(None, gt=0)


class IvSection(_Section):
    drive_amplitude: float = Field(0.8, ge=0)
    drive_frequency: float | None = Field(2.679e9, gt=0)
    bias_start: float = 0.0
    bias_stop: float = 3.0e-3
    n_points: int = Field(61, ge=2)
    n_periods: int = Field(40, ge=4)


class RabiSection(_Section):
    i_ac: float = Field(0.8, ge=0)
    bias_start: float = 0.0
    bias_stop: float = 2.6e-3
    n_bias: int = Field(27, ge=1)
    single_bias: float | None = None
    nu_max: int = Field(1000, ge=5)
    reference_bias: float = 1.9e-3
    reference_nu_pi: float = Field(351.7, gt=0)
    plateau_width: float = Field(150e-6, gt=0)


class GateSweepSection(_Section):
    sigma_over_Tq: list[float] = Field(default_factory=lambda: [0.005, 0.01, 0.05, 0.1, 0.15, 0.19, 0.25, 0.3],
                                       min_length=1)
    normalization: Literal["delta", "finite"] = "delta"
    nu_pi: int = Field(100, ge=2)

    @model_validator(mode="after")
    def _range(self):
        if any(not 0 < s <= 0.3 for s in self.sigma_over_Tq):
            raise ValueError("sigma_over_Tq values must lie in (0, 0.3]")
        return self


class StatsSection(_Section):
    n_repeats: int = Field(500, ge=1)
    n_shots: int | None = Field(1000, ge=1)
    ramsey_detuning: float = Field(0.2e6, ge=0)
    t1_spread: float = Field(0.0, ge=0)


class ReadoutSection(_Section):
    n_shots: int = Field(10_000, ge=1)
    lobe_separation: float = Field(8.0, gt=0)
    noise_sigma: float = Field(1.0, gt=0)
    readout_duration: float = Field(400e-9, ge=0)
    p_th_true: float = Field(0.035, ge=0, le=1)
    threshold: float = 0.0
    zero_noise: bool = False


class RbSection(_Section):
    lengths: list[int] = Field(default_factory=lambda: list(range(1, 101)), min_length=4)
    sequences_per_length: int = Field(30, ge=1)
    model: Literal["depolarizing", "lindblad"] = "depolarizing"
    r_injected: float = Field(2.1e-2, ge=0, le=0.5)
    shots: int | None = Field(None, ge=1)
    slot_mode: Literal["uniform", "native"] = "uniform"
    over_rotation: float = 0.0
    target_pole: Literal[0, 1] = 0
    nu_pi: int = Field(352, ge=2)

    @model_validator(mode="after")
    def _ascending(self):
        if any(m < 1 for m in self.lengths) or any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ValueError("lengths must be positive and strictly ascending")
        return self


class BudgetSection(_Section):
    nu_pi: int = Field(352, ge=2)
    sigma_over_Tq: float = Field(0.19, gt=0, le=0.3)
    jitter: float = Field(3e-12, ge=0)
    jitter_mode: Literal["drive", "per_junction"] = "drive"
    n_trials: int = Field(500, ge=100)
    duty_cycle: float = Field(0.02, ge=0, le=1)
    full_duty_output_power: float | None = Field(None, ge=0)
    terms: list[Literal["digitization", "pulse_width", "leakage", "jitter", "coherence"]] = Field(
        default_factory=lambda: ["digitization", "pulse_width", "leakage", "jitter", "coherence"])
    rb_reference: float = Field(2.1e-2, gt=0)


class RsjPulseSection(_Section):
    i_dc: float | None = None
    i_ac: float = Field(0.6, ge=0)
    drive_ratio: float = Field(0.2, gt=0)
    n_periods: int = Field(20, ge=2)
    samples_per_period: int = Field(512, ge=16)


class ExperimentSection(_Section):
    iv: IvSection = IvSection()
    rabi: RabiSection = RabiSection()
    gate_sweep: GateSweepSection = GateSweepSection()
    stats: StatsSection = StatsSection()
    readout: ReadoutSection = ReadoutSection()
    rb: RbSection = RbSection()
    budget: BudgetSection = BudgetSection()
    rsj_pulse: RsjPulseSection = RsjPulseSection()


class RunConfig(_Section):
    seed: int = Field(0, ge=0)
    output_dir: str | None = None
    device: DeviceSection = DeviceSection()
    qubit: QubitSection = QubitSection()
    drive: DriveSection = DriveSection()
    experiment: ExperimentSection = ExperimentSection()


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config loading


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for key in keys[:-1]:
        d = d.setdefault(key, {})
        if not isinstance(d, dict):
            raise ConfigError(f"{dotted}: cannot override inside a scalar")
    d[keys[-1]] = value


def load_config(path: str | None, overrides: list[str] = ()) -> RunConfig:
    raw: dict = {}
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        key, val = item.split("=", 1)
        _set_path(raw, key.strip(), yaml.safe_load(val))
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        lines = [f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}" for e in exc.errors()]
        raise ConfigError("invalid config\n  " + "\n  ".join(lines)) from exc


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# domain objects from config


def _device(cfg: RunConfig):
    from .jj_core import JunctionArrayParams
    d = cfg.device
    return JunctionArrayParams(critical_current=d.critical_current, normal_resistance=d.normal_resistance,
                               n_junctions=d.n_junctions, beta_c=d.beta_c)


def _qubit(cfg: RunConfig):
    from .qubit_sim import QubitModel
    q = cfg.qubit
    return QubitModel(omega_10=2 * math.pi * q.frequency, anharmonicity_alpha=q.anharmonicity_alpha,
                      T1=q.T1, Tphi=q.Tphi, levels=q.levels)


def _drive_frequency(cfg: RunConfig) -> float:
    return cfg.drive.frequency or cfg.qubit.frequency / cfg.drive.k


# ---------------------------------------------------------------------------
# output helpers


class _Out:
    def __init__(self, root: Path):
        self.root = root
        self.files: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        self.files.append(p)
        return p

    def json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=json_default) + "\n")

    def csv(self, name: str, header: list[str], cols) -> None:
        rows = np.column_stack([np.asarray(c, float) for c in cols])
        lines = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in rows]
        self.path(name).write_text("\n".join(lines) + "\n")


def _sha256(p: Path) -> str:
    return hashlib.sha256(p.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# commands


def cmd_iv(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .jj_core import compute_iv_curve, find_locking_range, shapiro_voltage
    s = cfg.experiment.iv
    dev = _device(cfg)
    f_d = s.drive_frequency or _drive_frequency(cfg)
    grid = np.linspace(s.bias_start, s.bias_stop, s.n_points)
    iv = compute_iv_curve(dev, s.drive_amplitude, f_d, grid, n_periods=s.n_periods, threads=threads)
    iv.to_csv(out.path("iv_curve.csv"))
    lock = find_locking_range(iv, f_d)
    v_s = shapiro_voltage(dev.n_junctions, f_d)
    on = None
    if lock is not None:
        sel = (iv.current >= lock[0]) & (iv.current <= lock[1])
        on = float(np.mean(iv.voltage[sel]))
    report = {"drive_frequency_Hz": f_d, "shapiro_voltage_V": v_s, "has_plateau": lock is not None,
              "locking_range_A": list(lock) if lock else None, "plateau_voltage_V": on,
              "failed_points": int(np.sum(iv.failed))}
    out.json("locking.json", report)
    return report


def cmd_rabi(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .experiments.rabi import ChainConfig, characterize_chain, fit_rabi, nu_pi_plateau, rabi_scan
    from .jj_core import FitError
    s = cfg.experiment.rabi
    chain = ChainConfig(device=_device(cfg), i_ac=s.i_ac, qubit=_qubit(cfg), k=cfg.drive.k,
                        reference_bias=s.reference_bias, reference_nu_pi=s.reference_nu_pi)
    bias = np.array([s.single_bias]) if s.single_bias is not None else np.linspace(s.bias_start, s.bias_stop,
                                                                                    s.n_bias)
    char = characterize_chain(chain, bias)
    char.to_csv(out.path("chain.csv"))
    rec = rabi_scan(bias, np.arange(s.nu_max + 1), chain, characterization=char)
    rec.to_csv(out.path("rabi_scan.csv"))
    fits = []
    for i, b in enumerate(bias):
        try:
            f = fit_rabi(rec.axes["nu"], rec.values[i])
            fits.append({"bias_A": b, "nu_pi": f.params["nu_pi"], "nu_pi_stderr": f.stderr["nu_pi"],
                         "nu_pi_rounded": f.extras["nu_pi_rounded"]})
        except FitError as exc:
            fits.append({"bias_A": b, "nu_pi": None, "error": str(exc)})
    report: dict = {"fits": fits}
    near = np.abs(bias - s.reference_bias) <= s.plateau_width / 2
    if near.any() and s.single_bias is None:
        plat = nu_pi_plateau(rec, s.reference_bias, s.plateau_width)
        report["plateau"] = plat
        report["nu_pi_for_gates"] = int(round(float(np.median(plat["nu_pi"]))))
    elif s.single_bias is not None and fits[0].get("nu_pi") is not None:
        report["nu_pi_for_gates"] = fits[0]["nu_pi_rounded"]
    out.json("rabi_fits.json", report)
    return report


def cmd_gate_sweep(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .fidelity import pulse_width_infidelity
    s = cfg.experiment.gate_sweep
    q = _qubit(cfg)
    rows = [pulse_width_infidelity(x, s.nu_pi, q, k=cfg.drive.k, normalization=s.normalization)
            for x in s.sigma_over_Tq]
    out.csv("gate_sweep.csv", ["sigma_over_Tq", "nu_pi", "total", "pulse_only", "coherence", "no_decay"],
            [[r.sigma_over_Tq for r in rows], [r.nu_pi for r in rows], [r.total for r in rows],
             [r.pulse_only for r in rows], [r.coherence for r in rows], [r.no_decay for r in rows]])
    report = {"normalization": s.normalization, "nu_pi_reference": s.nu_pi,
              "points": [{"sigma_over_Tq": r.sigma_over_Tq, "nu_pi": r.nu_pi, "total": r.total,
                          "pulse_only": r.pulse_only} for r in rows]}
    out.json("gate_sweep.json", report)
    return report


def cmd_stats(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .experiments.coherence import ramsey_experiment, t1_experiment
    s = cfg.experiment.stats
    q = _qubit(cfg)
    t1_rec, t1_fit = t1_experiment(s.n_repeats, qubit=q, n_shots=s.n_shots, t1_spread=s.t1_spread, seed=cfg.seed,
                                   threads=threads)
    ra_rec, ra_fit = ramsey_experiment(s.n_repeats, detuning=2 * math.pi * s.ramsey_detuning, qubit=q,
                                       n_shots=s.n_shots, seed=cfg.seed + 1, threads=threads)
    t1_rec.to_csv(out.path("t1.csv"))
    ra_rec.to_csv(out.path("ramsey.csv"))
    report = {"t1": t1_fit.as_dict(), "ramsey": ra_fit.as_dict(), "T1_true": q.T1, "T2_true": q.T2}
    out.json("stats.json", report)
    return report


def cmd_readout(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .experiments.readout import ReadoutModel, estimate_pth, single_shot_batch, spam_fidelity
    s = cfg.experiment.readout
    q = cfg.qubit
    noise = 1e-9 * s.lobe_separation if s.zero_noise else s.noise_sigma
    model = ReadoutModel(lobe_separation=s.lobe_separation, noise_sigma=noise, readout_duration=s.readout_duration,
                         p_th_true=s.p_th_true, T1=q.T1)
    notes = []
    if s.n_shots < 1000:
        msg = f"only {s.n_shots} shots; estimates below 1000 shots are unreliable"
        warnings.warn(msg, stacklevel=1)
        notes.append(msg)
    if model.photon_warning:
        notes.append("readout photon number exceeds n_crit/2")
    ss = np.random.SeedSequence(cfg.seed).spawn(2)
    v0 = single_shot_batch(model, s.n_shots, False, seed=np.random.default_rng(ss[0]))
    v1 = single_shot_batch(model, s.n_shots, True, seed=np.random.default_rng(ss[1]))
    out.csv("readout_shots.csv", ["no_pi_V", "pi_V"], [v0, v1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_pth(v0, s.threshold)
    p10 = float(np.mean(v0 > s.threshold))
    p01 = float(np.mean(v1 <= s.threshold))
    report = {"p_th": est.value, "p_th_uncertainty": est.uncertainty, "p_th_statistical": est.statistical,
              "p_th_true": s.p_th_true, "bimodal_fit": est.fit.as_dict() if est.fit else None,
              "p_1_given_0": p10, "p_0_given_1": p01, "spam_fidelity": spam_fidelity(p10, p01),
              "decay_probability": model.decay_probability, "notes": notes}
    out.json("readout.json", report)
    return report


def cmd_rb(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .experiments.rb import RbConfig, fit_rb, run_rb
    s = cfg.experiment.rb
    rc = RbConfig(lengths=tuple(s.lengths), sequences_per_length=s.sequences_per_length, seed=cfg.seed,
                  shots=s.shots, over_rotation=s.over_rotation, target_pole=s.target_pole, nu_pi=s.nu_pi,
                  k=cfg.drive.k, slot_mode=s.slot_mode)
    rec = run_rb(rc, s.model, r=s.r_injected if s.model == "depolarizing" else 0.0, qubit=_qubit(cfg),
                 threads=threads)
    rec.to_csv(out.path("rb.csv"))
    fit = fit_rb(rec)
    fit_rescaled = fit_rb(rec, rescaled=True)
    report = {"fit": fit.as_dict(), "fit_rescaled": fit_rescaled.as_dict(), "metadata": rec.metadata}
    out.json("rb.json", report)
    return report


def cmd_budget(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .fidelity import (BudgetTerm, coherence_limit, digitization_infidelity, jitter_infidelity,
                           leakage_infidelity, power_dissipation, pulse_width_infidelity, total_budget)
    s = cfg.experiment.budget
    q = _qubit(cfg)
    f_d = _drive_frequency(cfg)
    terms: dict[str, BudgetTerm] = {}
    decays = math.isfinite(q.T1) and math.isfinite(q.Tphi)
    if "digitization" in s.terms:
        terms["digitization"] = BudgetTerm(digitization_infidelity(s.nu_pi), "analytic")
    if "pulse_width" in s.terms:
        pw = pulse_width_infidelity(s.sigma_over_Tq, s.nu_pi, q, k=cfg.drive.k)
        terms["pulse_width"] = BudgetTerm(min(max(pw.pulse_only, 0.0), 1.0), "simulated")
    if "leakage" in s.terms:
        terms["leakage"] = BudgetTerm(leakage_infidelity(s.nu_pi, cfg.qubit.anharmonicity_alpha), "scaled")
    if "jitter" in s.terms:
        j = jitter_infidelity(s.jitter, f_d, s.nu_pi, q, n_trials=s.n_trials, seed=cfg.seed, mode=s.jitter_mode,
                              sigma_over_Tq=s.sigma_over_Tq, n_junctions=cfg.device.n_junctions)
        terms["jitter"] = BudgetTerm(min(max(j.value, 0.0), 1.0), "simulated")
    if "coherence" in s.terms:
        c = coherence_limit(s.nu_pi / f_d, q.T1, q.Tphi, n_kicks=s.nu_pi).simulated if decays else 0.0
        terms["coherence"] = BudgetTerm(c, "simulated")
    budget = total_budget(terms)
    power = power_dissipation(_device(cfg), f_d, s.duty_cycle, full_duty_output_power=s.full_duty_output_power)
    report = {"budget": budget.as_dict(), "ratio_to_rb": budget.ratio_to(s.rb_reference),
              "rb_reference": s.rb_reference}
    out.json("budget.json", report)
    out.path("power.json").write_text(power.to_json() + "\n")
    report["power_W"] = power.on_chip_power
    return report


def cmd_rsj_pulse(cfg: RunConfig, out: _Out, threads: int) -> dict:
    from .jj_core import RsjDriveSpec, extract_pulses, find_first_step, fit_gaussian_pulse, simulate_rsj
    s = cfg.experiment.rsj_pulse
    dev = _device(cfg)
    i_dc = s.i_dc
    if i_dc is None:
        step = find_first_step(dev, s.i_ac, s.drive_ratio)
        if step is None:
            raise ValueError("no first Shapiro step at this drive; set i_dc explicitly")
        i_dc = 0.5 * (step[0] + step[1])
    spec = RsjDriveSpec.for_periods(i_dc, s.i_ac, s.drive_ratio, s.n_periods, samples_per_period=s.samples_per_period)
    tr = simulate_rsj(dev, spec)
    out.csv("rsj_trace.csv", ["theta", "time_s", "phase_rad", "voltage_V"], [tr.theta, tr.time, tr.phase, tr.voltage])
    n0 = s.n_periods // 2 * s.samples_per_period
    v, t = tr.voltage[n0:], tr.time[n0:]
    fits = [fit_gaussian_pulse(t[w.slice()], v[w.slice()]) for w in extract_pulses(v, 0.5 * v.max())[1:-1]]
    tau = dev.characteristic_time
    report = {"i_dc": i_dc, "n_pulses_fitted": len(fits),
              "sigma_over_tau": float(np.median([f.sigma for f in fits]) / tau) if fits else None,
              "area_over_phi0": float(np.median([f.area for f in fits]) / PHI0) if fits else None,
              "pulses": [f.as_dict() for f in fits]}
    out.json("pulse_fits.json", report)
    return report


COMMANDS = {"iv": cmd_iv, "rabi": cmd_rabi, "gate-sweep": cmd_gate_sweep, "stats": cmd_stats,
            "readout": cmd_readout, "rb": cmd_rb, "budget": cmd_budget, "rsj-pulse": cmd_rsj_pulse}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jpgsim", description="Josephson pulse generator qubit-control simulator.")
    p.add_argument("--version", action="version", version=f"jpgsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML or JSON run config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./jpgsim-output/<command>)")
        sp.add_argument("--threads", type=int, default=1, help="cap on worker threads")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar config field, e.g. experiment.rb.shots=200")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = args.out or cfg.output_dir or os.environ.get(OUTPUT_ENV) or os.path.join("jpgsim-output", args.command)
    out = _Out(Path(root))
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    from .jj_core import FitError, SimulationError
    try:
        COMMANDS[args.command](cfg, out, args.threads)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, FitError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = {"command": args.command, "config_hash": config_hash(cfg), "seed": cfg.seed,
                "files": [{"path": p.name, "sha256": _sha256(p)} for p in out.files],
                "wall_time_s": time.perf_counter() - t0, "started_at": started, "version": __version__,
                "config": cfg.model_dump(mode="json")}
    (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=json_default) + "\n")
    print(json.dumps({"command": args.command, "out": str(out.root)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
