"""Observable containers and post-processing shared by all engines."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UndefinedCorrelationError


@dataclass
class ObservableSeries:
    """A time (or delay) grid plus named real series of equal length.

    ``stderr`` holds optional standard errors keyed like ``series``.
    """

    t: np.ndarray
    series: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    time_label: str = "t"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        for store in (self.series, self.stderr):
            for key, val in store.items():
                val = np.asarray(val, dtype=float)
                if val.shape != self.t.shape:
                    raise ValueError(f"series {key!r} has shape {val.shape}, grid has {self.t.shape}")
                store[key] = val

    def __getitem__(self, key):
        return self.series[key]

    def __contains__(self, key):
        return key in self.series

    def population_matrix(self) -> np.ndarray:
        """Array ``(len(t), N)`` from the ``pop_1..pop_N`` columns."""
        n = sum(1 for k in self.series if k.startswith("pop_"))
        return np.stack([self.series[f"pop_{i + 1}"] for i in range(n)], axis=1)

    def columns(self):
        cols = [self.time_label]
        for key in self.series:
            cols.append(key)
        for key in self.stderr:
            cols.append(f"{key}_stderr")
        return cols

    def to_csv(self, path):
        """Write all columns at ``%.17g`` so a reload reproduces every value exactly."""
        cols = self.columns()
        data = [self.t] + list(self.series.values()) + list(self.stderr.values())
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for row in zip(*data):
                writer.writerow([f"{x:.17g}" for x in row])

    @classmethod
    def from_csv(cls, path) -> ObservableSeries:
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(x) for x in r] for r in reader], dtype=float).reshape(-1, len(header))
        series, stderr = {}, {}
        for idx, name in enumerate(header[1:], start=1):
            if name.endswith("_stderr"):
                stderr[name[: -len("_stderr")]] = rows[:, idx]
            else:
                series[name] = rows[:, idx]
        return cls(rows[:, 0], series, stderr, time_label=header[0])


def output_intensity(n_last, j1) -> np.ndarray | float:
    """I_out = |J1| n_N."""
    n = np.asarray(n_last, dtype=float)
    if np.any(n < -1e-12) or np.any(n > 1 + 1e-12) or np.any(~np.isfinite(n)):
        raise ValueError("population of the last site must lie in [0, 1]")
    out = abs(j1) * n
    return float(out) if out.ndim == 0 else out


def front_position(populations, threshold: float = 0.1) -> int:
    """Largest site index (0-based) whose population is at least ``threshold`` times the maximum.

    Returns -1 for an all-zero profile.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    pops = np.asarray(populations, dtype=float)
    peak = pops.max() if pops.size else 0.0
    if not peak > 0:
        return -1
    hits = np.flatnonzero(pops >= threshold * peak)
    return int(hits[-1])


def g2_normalize(raw, denom: float) -> np.ndarray:
    """Divide a raw correlation series by ``denom**2``."""
    if not denom > 0:
        raise UndefinedCorrelationError(f"normalisation {denom!r} must be positive")
    return np.asarray(raw, dtype=float) / denom**2


def linear_fit(x, y):
    """Least-squares line; returns ``(slope, intercept, r_squared)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def power_law_exponent(m, values):
    """Slope of log|values| against log m."""
    slope, _, _ = linear_fit(np.log(np.asarray(m, float)), np.log(np.abs(np.asarray(values))))
    return slope


def antibunching_window(tau, g2, level: float = 0.1):
    """Longest contiguous stretch starting at tau[0] with g2 below ``level``; returns its end delay."""
    g2 = np.asarray(g2)
    below = g2 < level
    if not below[0]:
        return 0.0
    stop = np.argmin(below) if not below.all() else len(g2)
    return float(np.asarray(tau)[stop - 1])
