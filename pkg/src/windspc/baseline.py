"""In-control (phase I) period detection.

The baseline runs from the first record ``T0`` to the time ``t*`` at which the
cumulative correlation of a reference variable pair over ``[T0, t]`` peaks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Any

import numpy as np

from .errors import NoValidWindow
from .ingest import Dataset, as_datetime64, format_timestamp

DEFAULT_PAIR = ("nacelle_temp", "env_temp")
DEFAULT_MIN_POINTS = 100
# Profile values this close to the maximum count as ties (rounding noise).
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class CorrelationProfile:
    timestamps: np.ndarray
    rho: np.ndarray

    def __len__(self) -> int:
        return int(self.rho.size)

    def write_csv(self, stream: IO[str]) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["timestamp", "rho"])
        for t, r in zip(self.timestamps, self.rho):
            w.writerow([format_timestamp(t), repr(float(r))])


@dataclass(frozen=True)
class BaselineWindow:
    start: np.datetime64
    end: np.datetime64
    profile: CorrelationProfile
    rho_max: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "start": format_timestamp(self.start),
            "end": format_timestamp(self.end),
            "rho_max": self.rho_max,
            "profile_points": len(self.profile),
        }


def correlation_profile(d: Dataset, var_a: str, var_b: str,
                        min_points: int = DEFAULT_MIN_POINTS) -> CorrelationProfile:
    """Running Pearson correlation of ``var_a`` and ``var_b`` over ``[T0, t]``.

    Computed in one pass from cumulative moments of pairwise-complete
    observations. Entries appear once ``min_points`` pairs have accumulated;
    times where either variable has zero variance so far are left out.
    """
    if min_points < 3:
        raise ValueError("min_points must be at least 3")
    a = d.column(var_a)
    b = d.column(var_b)
    ok = np.isfinite(a) & np.isfinite(b)
    ts = d.timestamps[ok]
    a = a[ok]
    b = b[ok]
    if a.size < min_points:
        return CorrelationProfile(ts[:0], np.empty(0))
    # Shift by the first observation to limit cancellation in the sums.
    a = a - a[0]
    b = b - b[0]
    k = np.arange(1, a.size + 1, dtype=float)
    sa = np.cumsum(a)
    sb = np.cumsum(b)
    saa = np.cumsum(a * a) - sa * sa / k
    sbb = np.cumsum(b * b) - sb * sb / k
    sab = np.cumsum(a * b) - sa * sb / k
    sel = slice(min_points - 1, None)
    saa, sbb, sab, tsel = saa[sel], sbb[sel], sab[sel], ts[sel]
    scale_a = np.maximum(np.abs(np.cumsum(a * a)[sel]), 1e-300)
    scale_b = np.maximum(np.abs(np.cumsum(b * b)[sel]), 1e-300)
    valid = (saa > 1e-14 * scale_a) & (sbb > 1e-14 * scale_b)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = sab / np.sqrt(saa * sbb)
    rho = np.clip(rho[valid], -1.0, 1.0)
    return CorrelationProfile(tsel[valid], rho)


def detect_baseline(
    d: Dataset,
    var_a: str = DEFAULT_PAIR[0],
    var_b: str = DEFAULT_PAIR[1],
    min_points: int = DEFAULT_MIN_POINTS,
    upper_bound=None,
) -> BaselineWindow:
    """Locate the in-control window ``[T0, t*]`` maximising the running correlation.

    Ties (within ``TIE_TOLERANCE``) resolve to the latest time so the
    baseline is as long as possible.
    """
    if upper_bound is not None:
        d = d.between(end=as_datetime64(upper_bound))
    if len(d) == 0:
        raise NoValidWindow("no records before the upper bound")
    profile = correlation_profile(d, var_a, var_b, min_points)
    if len(profile) == 0:
        raise NoValidWindow(
            f"fewer than {min_points} usable {var_a}/{var_b} pairs; cannot form a baseline"
        )
    top = profile.rho.max()
    tied = np.flatnonzero(profile.rho >= top - TIE_TOLERANCE)
    i = int(tied[-1])
    return BaselineWindow(
        start=d.timestamps[0],
        end=profile.timestamps[i],
        profile=profile,
        rho_max=float(profile.rho[i]),
    )
