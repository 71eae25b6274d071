"""SCADA telemetry ingestion: parsing, validation, filtering and resampling.

A :class:`Dataset` is stored column-wise. Timestamps are ``datetime64[s]``
(UTC) and every measurement channel is a read-only ``float64`` array in which
NaN marks a missing value. Row access goes through :class:`ScadaRecord`,
where missing values surface as ``None``.
"""

from __future__ import annotations

import csv
import heapq
import io
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import IntEnum
from typing import IO, Any, Iterator, Mapping

import numpy as np

from .errors import EmptyInput, InvalidInterval, MissingColumn, NonMonotoneTimestamps

log = logging.getLogger(__name__)

CORE_FIELDS: tuple[str, ...] = (
    "wind_speed",
    "env_temp",
    "nacelle_temp",
    "gearbox_temp",
    "bearing_temp",
    "gen1_temp",
    "gen2_temp",
    "oil_temp",
    "rotor_speed",
    "generator_speed",
    "power_output",
    "operating_state",
    "pitch_angle",
    "yaw",
)

TIMESTAMP = "timestamp"


class OperatingState(IntEnum):
    EMERGENCY = 0
    STOP = 1
    PAUSE = 2
    RUN = 3


_VALID_STATES = frozenset(int(s) for s in OperatingState)


# --------------------------------------------------------------------------
# timestamps


def parse_timestamp(text: str) -> np.datetime64:
    """Parse an ISO-8601 timestamp into ``datetime64[s]`` UTC.

    Naive timestamps are taken as UTC; offsets are converted. Sub-second
    precision is truncated.
    """
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt.replace(microsecond=0), "s")


def format_timestamp(ts: np.datetime64) -> str:
    return str(np.datetime64(ts, "s")) + "Z"


def as_datetime64(value: Any) -> np.datetime64:
    """Coerce str / datetime / datetime64 to ``datetime64[s]``."""
    if isinstance(value, str):
        return parse_timestamp(value)
    if isinstance(value, datetime):
        if value.tzinfo is not None:
            value = value.astimezone(timezone.utc).replace(tzinfo=None)
        return np.datetime64(value.replace(microsecond=0), "s")
    return np.datetime64(value, "s")


# --------------------------------------------------------------------------
# records and datasets


@dataclass(frozen=True)
class ScadaRecord:
    """One timestamped observation. ``None`` marks a missing value."""

    timestamp: np.datetime64
    wind_speed: float | None = None
    env_temp: float | None = None
    nacelle_temp: float | None = None
    gearbox_temp: float | None = None
    bearing_temp: float | None = None
    gen1_temp: float | None = None
    gen2_temp: float | None = None
    oil_temp: float | None = None
    rotor_speed: float | None = None
    generator_speed: float | None = None
    power_output: float | None = None
    operating_state: OperatingState | None = None
    pitch_angle: float | None = None
    yaw: float | None = None
    vibration: Mapping[str, float | None] = field(default_factory=dict)

    def get(self, name: str) -> float | None:
        """Value of a core field or vibration channel (``None`` if missing)."""
        if name in CORE_FIELDS:
            value = getattr(self, name)
            return None if value is None else float(value)
        return self.vibration.get(name)

    @property
    def missing(self) -> tuple[str, ...]:
        names = [f for f in CORE_FIELDS if getattr(self, f) is None]
        names += [k for k, v in self.vibration.items() if v is None]
        return tuple(names)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable, time-ordered collection of SCADA observations.

    Parameters
    ----------
    timestamps : array-like of datetime64
        Strictly increasing observation times.
    columns : mapping of str to array-like
        Core fields and vibration channels, NaN for missing. Core fields not
        supplied are filled with NaN.
    cadence : float, optional
        Sampling interval in seconds; inferred as the median gap if omitted.
    provenance : str
        Source descriptor, e.g. a file path or ``"simulated:<seed>"``.
    vibration_channels : sequence of str
        Names of the columns that hold vibration readings.
    rejected : int
        Number of source rows that did not make it into the dataset.
    meta : mapping
        Free-form metadata (simulation ground truth, parse counts).
    """

    __slots__ = ("timestamps", "columns", "cadence", "provenance",
                 "vibration_channels", "rejected", "meta")

    def __init__(
        self,
        timestamps,
        columns: Mapping[str, Any] | None = None,
        cadence: float | None = None,
        provenance: str = "",
        vibration_channels: tuple[str, ...] | list[str] = (),
        rejected: int = 0,
        meta: Mapping[str, Any] | None = None,
    ) -> None:
        ts = np.asarray(timestamps, dtype="datetime64[s]").reshape(-1)
        n = ts.size
        if n > 1 and not np.all(ts[1:] > ts[:-1]):
            raise NonMonotoneTimestamps("timestamps must be strictly increasing")
        columns = dict(columns or {})
        vib = tuple(vibration_channels)
        for name in vib:
            if name in CORE_FIELDS or name == TIMESTAMP:
                raise ValueError(f"vibration channel {name!r} clashes with a core field")
        unknown = set(columns) - set(CORE_FIELDS) - set(vib)
        if unknown:
            raise ValueError(f"unknown columns {sorted(unknown)}; declare vibration channels explicitly")
        cols: dict[str, np.ndarray] = {}
        for name in CORE_FIELDS + vib:
            if name in columns:
                arr = np.asarray(columns[name], dtype=float).reshape(-1)
                if arr.size != n:
                    raise ValueError(f"column {name!r} has {arr.size} values, expected {n}")
            else:
                arr = np.full(n, np.nan)
            cols[name] = _readonly(arr)
        states = cols["operating_state"]
        present = states[~np.isnan(states)]
        if present.size and not np.all(np.isin(present, list(_VALID_STATES))):
            raise ValueError("operating_state values must be in {0, 1, 2, 3}")
        if cadence is None:
            cadence = float(np.median(np.diff(ts).astype(np.int64))) if n > 1 else 0.0
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "cadence", float(cadence))
        object.__setattr__(self, "provenance", provenance)
        object.__setattr__(self, "vibration_channels", vib)
        object.__setattr__(self, "rejected", int(rejected))
        object.__setattr__(self, "meta", dict(meta or {}))

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __repr__(self) -> str:
        span = ""
        if len(self):
            span = f", {format_timestamp(self.timestamps[0])}..{format_timestamp(self.timestamps[-1])}"
        return f"Dataset(n={len(self)}, cadence={self.cadence:g}s{span}, provenance={self.provenance!r})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and self.vibration_channels == other.vibration_channels
            and self.cadence == other.cadence
            and all(np.array_equal(self.columns[k], other.columns[k], equal_nan=True)
                    for k in self.columns)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def fields(self) -> tuple[str, ...]:
        return CORE_FIELDS + self.vibration_channels

    @property
    def epoch_seconds(self) -> np.ndarray:
        return self.timestamps.astype(np.int64)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"unknown field {name!r}") from None

    def record(self, i: int) -> ScadaRecord:
        def val(name):
            v = self.columns[name][i]
            return None if np.isnan(v) else float(v)

        kwargs = {name: val(name) for name in CORE_FIELDS}
        if kwargs["operating_state"] is not None:
            kwargs["operating_state"] = OperatingState(int(kwargs["operating_state"]))
        vib = {ch: val(ch) for ch in self.vibration_channels}
        return ScadaRecord(timestamp=self.timestamps[i], vibration=vib, **kwargs)

    @property
    def records(self) -> Iterator[ScadaRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def replace(self, **changes) -> "Dataset":
        kw = dict(
            timestamps=self.timestamps,
            columns=self.columns,
            cadence=self.cadence,
            provenance=self.provenance,
            vibration_channels=self.vibration_channels,
            rejected=self.rejected,
            meta=self.meta,
        )
        kw.update(changes)
        return Dataset(**kw)

    def with_column(self, name: str, values) -> "Dataset":
        if name not in self.columns:
            raise KeyError(f"unknown field {name!r}")
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=float)
        return self.replace(columns=cols)

    def take(self, index) -> "Dataset":
        """Subset by boolean mask or increasing integer index (cadence kept)."""
        index = np.asarray(index)
        return self.replace(
            timestamps=self.timestamps[index],
            columns={k: v[index] for k, v in self.columns.items()},
        )

    def between(self, start=None, end=None) -> "Dataset":
        """Records with ``start <= t <= end`` (either bound may be ``None``)."""
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.timestamps >= as_datetime64(start)
        if end is not None:
            mask &= self.timestamps <= as_datetime64(end)
        return self.take(mask)


# --------------------------------------------------------------------------
# schema


def default_schema(vibration_channels=()) -> dict[str, Any]:
    """Identity schema: every logical field maps to a header of the same name."""
    schema: dict[str, Any] = {TIMESTAMP: TIMESTAMP}
    schema.update({f: f for f in CORE_FIELDS})
    if vibration_channels:
        schema["vibration"] = {ch: ch for ch in vibration_channels}
    return schema


def _split_schema(schema: Mapping[str, Any]) -> tuple[str, dict[str, str], dict[str, str]]:
    core: dict[str, str] = {}
    vib: dict[str, str] = {}
    ts_col = schema.get(TIMESTAMP)
    if not ts_col:
        raise MissingColumn("schema must map 'timestamp' to a column header")
    for key, header in schema.items():
        if key == TIMESTAMP:
            continue
        if key == "vibration":
            vib.update(header)
        elif key in CORE_FIELDS:
            core[key] = header
        else:
            raise MissingColumn(f"schema names unknown logical field {key!r}")
    return ts_col, core, vib


# --------------------------------------------------------------------------
# CSV


def _parse_float(cell: str) -> float:
    cell = cell.strip()
    if not cell:
        return np.nan
    try:
        v = float(cell)
    except ValueError:
        return np.nan
    return v if np.isfinite(v) else np.nan


def parse_scada_csv(
    source: IO[bytes] | IO[str] | bytes | str,
    schema: Mapping[str, Any] | None = None,
    *,
    reorder_buffer: int = 0,
    cadence: float | None = None,
    cadence_tolerance: float = 0.1,
    provenance: str = "",
) -> Dataset:
    """Parse a UTF-8 CSV telemetry export into a :class:`Dataset`.

    Parameters
    ----------
    source : binary/text stream, bytes or str
        CSV content with a header row.
    schema : mapping
        Logical field name to column header; vibration channels go under a
        nested ``"vibration"`` mapping. Defaults to :func:`default_schema`.
    reorder_buffer : int
        How many positions a row may arrive late and still be re-sorted.
        0 demands strictly increasing timestamps.
    cadence : float, optional
        Declared sampling interval in seconds. A warning is logged when it
        deviates from the median gap by more than ``cadence_tolerance``
        (relative).

    Rows whose timestamp cannot be parsed, and rows repeating an earlier
    timestamp, are rejected and counted in ``Dataset.rejected``. Unparseable
    numeric cells and out-of-range operating states become missing values.
    """
    if isinstance(source, (bytes, str)):
        text = source.decode("utf-8") if isinstance(source, bytes) else source
        stream: IO[str] = io.StringIO(text)
    else:
        raw = source.read()
        stream = io.StringIO(raw.decode("utf-8") if isinstance(raw, bytes) else raw)
    if _starts_with_bom(stream):
        stream.read(1)
    if schema is None:
        schema = default_schema()
    ts_col, core_map, vib_map = _split_schema(schema)

    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyInput("input has no header row") from None
    position = {h: i for i, h in enumerate(header)}
    wanted = [ts_col, *core_map.values(), *vib_map.values()]
    absent = [h for h in wanted if h not in position]
    if absent:
        raise MissingColumn(f"columns missing from header: {absent}")
    extra = len(set(header) - set(wanted))
    if extra:
        log.info("ignoring %d unmapped CSV column(s)", extra)

    fields = list(core_map) + list(vib_map)
    col_idx = [position[core_map[f]] if f in core_map else position[vib_map[f]] for f in fields]
    ts_idx = position[ts_col]

    total = 0
    bad_ts = 0
    bad_state = 0
    duplicates = 0
    heap: list[tuple[np.int64, int, list[float]]] = []
    out_ts: list[np.int64] = []
    out_rows: list[list[float]] = []
    state_pos = fields.index("operating_state") if "operating_state" in fields else None

    def emit(item):
        nonlocal duplicates
        t, _, row = item
        if out_ts and t < out_ts[-1]:
            raise NonMonotoneTimestamps(
                f"row at {format_timestamp(np.datetime64(int(t), 's'))} is out of order "
                f"beyond the reorder buffer ({reorder_buffer})"
            )
        if out_ts and t == out_ts[-1]:
            duplicates += 1
            return
        out_ts.append(t)
        out_rows.append(row)

    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        total += 1
        try:
            t = parse_timestamp(row[ts_idx]).astype(np.int64)
        except (ValueError, IndexError):
            bad_ts += 1
            continue
        values = [_parse_float(row[j]) if j < len(row) else np.nan for j in col_idx]
        if state_pos is not None:
            s = values[state_pos]
            if not np.isnan(s) and s not in _VALID_STATES:
                values[state_pos] = np.nan
                bad_state += 1
        heapq.heappush(heap, (t, total, values))
        if len(heap) > reorder_buffer:
            emit(heapq.heappop(heap))
    while heap:
        emit(heapq.heappop(heap))

    if total == 0:
        raise EmptyInput("input has no data rows")
    if bad_state:
        log.warning("%d operating_state value(s) outside {0,1,2,3} treated as missing", bad_state)

    rejected = bad_ts + duplicates
    n = len(out_ts)
    data = np.array(out_rows, dtype=float).reshape(n, len(fields))
    columns = {f: data[:, k] for k, f in enumerate(fields)}
    timestamps = np.array(out_ts, dtype=np.int64).astype("datetime64[s]")
    d = Dataset(
        timestamps,
        columns,
        cadence=cadence,
        provenance=provenance,
        vibration_channels=tuple(vib_map),
        rejected=rejected,
        meta={"rows": total, "rejected_timestamp": bad_ts, "rejected_duplicate": duplicates},
    )
    if cadence is not None and n > 1:
        median_gap = float(np.median(np.diff(d.epoch_seconds)))
        if abs(median_gap - cadence) > cadence_tolerance * cadence:
            log.warning("declared cadence %gs differs from median gap %gs", cadence, median_gap)
    return d


def _starts_with_bom(stream: io.StringIO) -> bool:
    pos = stream.tell()
    first = stream.read(1)
    stream.seek(pos)
    return first == "﻿"


def _format_float(v: float) -> str:
    if np.isnan(v):
        return ""
    return repr(float(v))


def write_scada_csv(d: Dataset, stream: IO[str], schema: Mapping[str, Any] | None = None) -> None:
    """Serialize ``d`` as CSV in the dialect accepted by :func:`parse_scada_csv`.

    Columns follow schema order; floats use shortest round-trip formatting so
    a parse of the output reproduces ``d`` exactly.
    """
    if schema is None:
        schema = default_schema(d.vibration_channels)
    ts_col, core_map, vib_map = _split_schema(schema)
    fields = list(core_map) + list(vib_map)
    headers = [ts_col] + [core_map.get(f) or vib_map[f] for f in fields]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(headers)
    cols = [d.column(f) for f in fields]
    for i, t in enumerate(d.timestamps):
        row = [format_timestamp(t)]
        for name, col in zip(fields, cols):
            v = col[i]
            if name == "operating_state" and not np.isnan(v):
                row.append(str(int(v)))
            else:
                row.append(_format_float(v))
        writer.writerow(row)


def read_dataset(path, schema=None, **kwargs) -> Dataset:
    with open(path, "rb") as fh:
        return parse_scada_csv(fh, schema, provenance=str(path), **kwargs)


def write_dataset(d: Dataset, path, schema=None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_scada_csv(d, fh, schema)


# --------------------------------------------------------------------------
# filtering and resampling


def filter_running(d: Dataset) -> Dataset:
    """Keep only records whose operating state is Run (3)."""
    return d.take(d.column("operating_state") == OperatingState.RUN)


def subsample(d: Dataset, interval: float) -> Dataset:
    """Pick one record per ``interval`` seconds on a grid anchored at the first record.

    For grid point ``g = t0 + k*interval`` the first record in
    ``[g, g + interval)`` is taken, provided it lies at least ``interval`` after
    the previous pick; empty grid cells produce nothing.
    """
    interval = float(interval)
    if interval <= 0 or (d.cadence and interval < d.cadence):
        raise InvalidInterval(f"interval {interval:g}s is shorter than cadence {d.cadence:g}s")
    if len(d) == 0:
        return d.replace(cadence=interval)
    t = d.epoch_seconds
    t0 = t[0]
    last = t[-1]
    picks: list[int] = []
    prev = None
    k_max = int((last - t0) // interval)
    for k in range(k_max + 1):
        lo = t0 + k * interval
        hi = lo + interval
        if prev is not None:
            lo = max(lo, t[prev] + interval)
        i = int(np.searchsorted(t, lo, side="left"))
        if i < t.size and t[i] < hi:
            picks.append(i)
            prev = i
    return d.take(np.array(picks, dtype=np.int64)).replace(cadence=interval)
