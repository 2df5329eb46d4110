"""Result containers shared by the experiment pipelines."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from ..jj_core import FitError

__all__ = ["FitResult", "ExperimentRecord", "fit_curve", "json_default"]


def json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


@dataclass
class FitResult:
    """Least-squares fit summary with 1-sigma parameter errors."""

    model: str
    params: dict[str, float]
    stderr: dict[str, float]
    residual_norm: float
    converged: bool = True
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not (v >= 0) for v in self.stderr.values() if not math.isnan(v)):
            raise ValueError("uncertainties must be non-negative")

    def __getitem__(self, key: str) -> float:
        return self.params[key]

    def as_dict(self) -> dict:
        return {"model": self.model, "params": self.params, "stderr": self.stderr,
                "residual_norm": self.residual_norm, "converged": self.converged, "extras": self.extras}


def fit_curve(model: str, f: Callable, x: np.ndarray, y: np.ndarray, p0: Sequence[float], names: Sequence[str], *,
              bounds=(-np.inf, np.inf), sigma: np.ndarray | None = None, maxfev: int = 20000) -> FitResult:
    """scipy curve_fit wrapped into a FitResult; failures raise FitError."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    try:
        popt, pcov = optimize.curve_fit(f, x, y, p0=p0, bounds=bounds, sigma=sigma, maxfev=maxfev)
    except (RuntimeError, ValueError) as exc:
        resid = float(np.linalg.norm(y - f(x, *p0))) if len(p0) else float("nan")
        raise FitError(f"{model} fit failed: {exc}", resid) from exc
    resid = float(np.linalg.norm(y - f(x, *popt)))
    err = np.sqrt(np.clip(np.diag(pcov), 0, None)) if np.all(np.isfinite(pcov)) else np.full(len(popt), np.nan)
    return FitResult(model=model, params={n: float(v) for n, v in zip(names, popt)},
                     stderr={n: float(e) for n, e in zip(names, err)}, residual_norm=resid)


@dataclass
class ExperimentRecord:
    """Sweep result on the outer product of named axes.

    ``coords`` holds extra per-axis columns (e.g. rescaled lengths) as
    name -> (axis name, values).
    """

    name: str
    axes: dict[str, np.ndarray]
    values: np.ndarray
    value_name: str = "p1"
    metadata: dict = field(default_factory=dict)
    fits: dict[str, FitResult] = field(default_factory=dict)
    coords: dict[str, tuple[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        self.axes = {k: np.asarray(v) for k, v in self.axes.items()}
        self.values = np.asarray(self.values, dtype=float)
        shape = tuple(v.size for v in self.axes.values())
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} does not match axes {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("record values must be finite")
        for cname, (axis, vals) in self.coords.items():
            if axis not in self.axes or np.asarray(vals).size != self.axes[axis].size:
                raise ValueError(f"coordinate {cname!r} does not match axis {axis!r}")

    def slice(self, **fixed) -> np.ndarray:
        """Values with some axes fixed to the index nearest the given value."""
        idx = []
        for name, grid in self.axes.items():
            if name in fixed:
                idx.append(int(np.argmin(np.abs(grid - fixed[name]))))
            else:
                idx.append(slice(None))
        return self.values[tuple(idx)]

    def to_csv(self, path=None) -> str:
        """Long-format CSV: one row per grid point."""
        names = list(self.axes)
        grids = np.meshgrid(*self.axes.values(), indexing="ij")
        cols = [g.ravel() for g in grids]
        header = names[:]
        for cname, (axis, vals) in self.coords.items():
            i = names.index(axis)
            header.append(cname)
            cols.append(np.asarray(vals)[np.meshgrid(*[np.arange(v.size) for v in self.axes.values()],
                                                     indexing="ij")[i].ravel()])
        header.append(self.value_name)
        cols.append(self.values.ravel())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {"name": self.name, "value_name": self.value_name,
                "axes": {k: {"size": int(v.size), "min": float(v.min()), "max": float(v.max())}
                         for k, v in self.axes.items()},
                "fits": {k: f.as_dict() for k, f in self.fits.items()}, "metadata": self.metadata}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), indent=2, sort_keys=True, default=json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text
