"""Simulated measurement pipelines: Rabi, coherence, phase calibration, readout, RB."""

from __future__ import annotations

from .calibration import analyze_y_axis, y_axis_calibration, y_axis_program
from .coherence import ramsey_curve, ramsey_experiment, spawn_generators, t1_experiment
from .rabi import (ChainCharacterization, ChainConfig, characterize_chain, fit_rabi, nu_pi_plateau, rabi_chevron,
                   rabi_scan)
from .readout import (PthEstimate, ReadoutModel, assignment_errors, estimate_pth, fit_bimodal, single_shot_batch,
                      spam_fidelity)
from .rb import RB_GATES, RbConfig, RbSequence, fit_rb, gate_unitary, generate_rb_sequences, run_rb
from .records import ExperimentRecord, FitResult, fit_curve

__all__ = [
    "ExperimentRecord", "FitResult", "fit_curve",
    "ChainConfig", "ChainCharacterization", "characterize_chain", "rabi_scan", "fit_rabi", "rabi_chevron",
    "nu_pi_plateau",
    "t1_experiment", "ramsey_experiment", "ramsey_curve", "spawn_generators",
    "y_axis_program", "y_axis_calibration", "analyze_y_axis",
    "ReadoutModel", "single_shot_batch", "fit_bimodal", "PthEstimate", "estimate_pth", "spam_fidelity",
    "assignment_errors",
    "RB_GATES", "RbConfig", "RbSequence", "gate_unitary", "generate_rb_sequences", "run_rb", "fit_rb",
]
