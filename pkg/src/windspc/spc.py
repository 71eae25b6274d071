"""Shewhart individuals chart on regression residuals, plus fixed-threshold
comparison for channels that come with vendor limits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import IO, Any

import numpy as np

from .errors import InsufficientBaseline, InvalidParams, SeriesTooShort, ZeroRange
from .ingest import format_timestamp
from .regress import ResidualSeries

D2 = 1.128  # E|x1 - x2| / sigma for two normal observations
MIN_BASELINE = 30


class Status(Enum):
    IN_CONTROL = "in_control"
    OUT_HIGH = "out_high"
    OUT_LOW = "out_low"


class Level(Enum):
    NORMAL = "normal"
    WARNING = "warning"
    ALARM = "alarm"


def moving_range_sigma(x) -> float:
    """Short-term sigma estimate ``mean(|x[i+1] - x[i]|) / 1.128``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size < 2:
        raise SeriesTooShort("moving range needs at least 2 observations")
    mr = np.abs(np.diff(x))
    mr_bar = mr.mean()
    if mr_bar == 0:
        raise ZeroRange("all moving ranges are zero")
    return float(mr_bar / D2)


@dataclass(frozen=True)
class ControlChart:
    center: float
    sigma_hat: float
    lcl: float
    ucl: float
    n_baseline: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "center": self.center,
            "sigma_hat": self.sigma_hat,
            "lcl": self.lcl,
            "ucl": self.ucl,
            "n_baseline": self.n_baseline,
        }

    def classify(self, values) -> np.ndarray:
        """Status codes: 0 in control, 1 above UCL, -1 below LCL."""
        v = np.asarray(values, dtype=float)
        return np.where(v > self.ucl, 1, np.where(v < self.lcl, -1, 0))


def fit_chart(baseline_residuals, min_baseline: int = MIN_BASELINE) -> ControlChart:
    """Center at the baseline mean, limits at center ± 3 moving-range sigmas."""
    x = np.asarray(baseline_residuals, dtype=float).reshape(-1)
    if x.size < min_baseline:
        raise InsufficientBaseline(f"baseline has {x.size} residuals, need {min_baseline}")
    center = float(x.mean())
    sigma = moving_range_sigma(x)
    return ControlChart(center, sigma, center - 3 * sigma, center + 3 * sigma, int(x.size))


_STATUS_BY_CODE = {0: Status.IN_CONTROL, 1: Status.OUT_HIGH, -1: Status.OUT_LOW}


@dataclass(frozen=True)
class AlarmReport:
    timestamps: np.ndarray
    residuals: np.ndarray
    codes: np.ndarray  # 0 / 1 / -1, see ControlChart.classify
    chart: ControlChart
    out_count: int
    total: int
    fraction_out: float
    baseline_fraction_out: float

    @property
    def statuses(self) -> list[Status]:
        return [_STATUS_BY_CODE[int(c)] for c in self.codes]

    @property
    def points(self):
        return list(zip(self.timestamps, self.residuals, self.statuses))

    def first_alarm_after(self, start) -> int | None:
        """1-based index of the first out-of-control point at or after ``start``."""
        after = self.timestamps >= np.datetime64(start, "s")
        hits = np.flatnonzero(self.codes[after] != 0)
        return int(hits[0]) + 1 if hits.size else None

    def summary(self, decimal: str = ".") -> dict[str, Any]:
        return {
            "out_count": self.out_count,
            "out_high": int((self.codes == 1).sum()),
            "out_low": int((self.codes == -1).sum()),
            "total": self.total,
            "fraction_out": self.fraction_out,
            "percent_out": format_percent(self.out_count, self.total, decimal=decimal),
            "baseline_fraction_out": self.baseline_fraction_out,
            "chart": self.chart.to_dict(),
        }

    def write_csv(self, stream: IO[str]) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["timestamp", "residual", "lcl", "ucl", "status"])
        lcl, ucl = repr(self.chart.lcl), repr(self.chart.ucl)
        for t, r, c in zip(self.timestamps, self.residuals, self.codes):
            w.writerow([format_timestamp(t), repr(float(r)), lcl, ucl, _STATUS_BY_CODE[int(c)].value])


def monitor(chart: ControlChart, residuals: ResidualSeries, baseline_end=None) -> AlarmReport:
    """Label every residual against the chart limits.

    Points exactly on a limit are in control. ``baseline_fraction_out`` covers
    residuals up to and including ``baseline_end`` (NaN when not given or
    empty).
    """
    codes = chart.classify(residuals.values)
    total = int(codes.size)
    out = int(np.count_nonzero(codes))
    frac = out / total if total else 0.0
    base_frac = float("nan")
    if baseline_end is not None:
        in_base = residuals.timestamps <= np.datetime64(baseline_end, "s")
        if in_base.any():
            base_frac = float(np.count_nonzero(codes[in_base]) / in_base.sum())
    return AlarmReport(residuals.timestamps, residuals.values, codes, chart, out, total, frac, base_frac)


def alarm_counts(report: AlarmReport, window: float) -> list[tuple[np.datetime64, int]]:
    """Out-of-control counts per consecutive ``window``-second bin (descriptive only)."""
    if report.total == 0:
        return []
    t = report.timestamps.astype(np.int64)
    bins = (t - t[0]) // int(window)
    counts = np.bincount(bins, weights=(report.codes != 0).astype(float)).astype(int)
    starts = (t[0] + np.arange(counts.size) * int(window)).astype("datetime64[s]")
    return list(zip(starts, counts.tolist()))


# --------------------------------------------------------------------------
# fixed thresholds


@dataclass(frozen=True)
class FixedThresholds:
    warning: float
    alarm: float

    def __post_init__(self) -> None:
        if not 0 < self.warning < self.alarm:
            raise InvalidParams("need 0 < warning < alarm")


@dataclass(frozen=True)
class FixedReport:
    timestamps: np.ndarray
    values: np.ndarray
    levels: tuple[Level, ...]
    thresholds: FixedThresholds

    def counts(self) -> dict[str, int]:
        out = {lv.value: 0 for lv in Level}
        for lv in self.levels:
            out[lv.value] += 1
        return out


def classify_fixed(value: float, t: FixedThresholds) -> Level:
    if value > t.alarm:
        return Level.ALARM
    if value > t.warning:
        return Level.WARNING
    return Level.NORMAL


def compare_fixed(timestamps, values, t: FixedThresholds) -> FixedReport:
    """Grade raw readings against warning/alarm thresholds (both exclusive)."""
    values = np.asarray(values, dtype=float)
    levels = tuple(classify_fixed(v, t) for v in values)
    return FixedReport(np.asarray(timestamps), values, levels, t)


# --------------------------------------------------------------------------
# rendering


def format_percent(count: int, total: int, decimals: int = 2, decimal: str = ".") -> str:
    """``count / total`` as a percentage string, e.g. ``"7.01%"``."""
    if total <= 0:
        return "n/a"
    text = f"{100.0 * count / total:.{decimals}f}"
    if decimal != ".":
        text = text.replace(".", decimal)
    return text + "%"
