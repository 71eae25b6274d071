"""Config-driven orchestration of the four monitoring steps.

1. find the in-control baseline window,
2. fit a regression model per monitored variable on baseline data,
3. derive Shewhart limits from baseline residuals,
4. monitor all residuals and write reports.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .baseline import DEFAULT_MIN_POINTS, DEFAULT_PAIR, BaselineWindow, detect_baseline
from .errors import ConfigError, InputError
from .ingest import (
    CORE_FIELDS,
    Dataset,
    as_datetime64,
    filter_running,
    format_timestamp,
    parse_timestamp,
    read_dataset,
    subsample,
    write_scada_csv,
)
from .regress import ModelTerm, RegressionModel, best_subset, ols_fit, parse_terms, residual_series
from .simulate import ScenarioConfig, generate_scenario
from .spc import AlarmReport, FixedThresholds, alarm_counts, compare_fixed, fit_chart, monitor
from .turbine import GeneratorUse, PowerCurveParams, classify_generator

log = logging.getLogger(__name__)

FOUR_HOURS = 4 * 3600.0


@dataclass
class ModelSpec:
    response: str
    candidates: tuple[ModelTerm, ...]
    select: bool = False


@dataclass
class PipelineConfig:
    """Everything a run needs; built from a single JSON document."""

    input_path: Path | None = None
    scenario: ScenarioConfig | None = None
    schema: dict[str, Any] | None = None
    reorder_buffer: int = 0
    pair: tuple[str, str] = DEFAULT_PAIR
    min_points: int = DEFAULT_MIN_POINTS
    upper_bound: np.datetime64 | None = None
    baseline_end: np.datetime64 | None = None
    baseline_interval: float | None = None
    events_path: Path | None = None
    models: list[ModelSpec] = field(default_factory=list)
    fit_interval: float | None = FOUR_HOURS
    monitor_interval: float | None = None
    min_baseline: int = 30
    alarm_window: float = 86400.0
    thresholds: dict[str, FixedThresholds] = field(default_factory=dict)
    turbine: PowerCurveParams | None = None
    decimal: str = "."
    output: Path = Path("out")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: Path | None = None) -> "PipelineConfig":
        base_dir = base_dir or Path(".")
        doc = dict(doc)
        cfg = cls()

        def path(p):
            p = Path(p)
            return p if p.is_absolute() else base_dir / p

        try:
            inp = doc.get("input", {})
            if inp.get("path"):
                cfg.input_path = path(inp["path"])
            if "simulate" in doc:
                cfg.scenario = ScenarioConfig.from_dict(doc["simulate"])
            if cfg.input_path is None and cfg.scenario is None:
                raise ConfigError("config needs input.path or a simulate section")
            cfg.schema = doc.get("schema")
            cfg.reorder_buffer = int(doc.get("reorder_buffer", 0))

            b = doc.get("baseline", {})
            cfg.pair = tuple(b.get("pair", DEFAULT_PAIR))
            cfg.min_points = int(b.get("min_points", DEFAULT_MIN_POINTS))
            if b.get("upper_bound"):
                cfg.upper_bound = parse_timestamp(b["upper_bound"])
            if b.get("end"):
                cfg.baseline_end = parse_timestamp(b["end"])
            if b.get("interval") is not None:
                cfg.baseline_interval = float(b["interval"])
            if b.get("events"):
                cfg.events_path = path(b["events"])

            for m in doc.get("models", []):
                cfg.models.append(ModelSpec(m["response"], parse_terms(m["candidates"]),
                                            bool(m.get("select", False))))

            c = doc.get("chart", {})
            if "fit_interval" in c:
                cfg.fit_interval = None if c["fit_interval"] is None else float(c["fit_interval"])
            if c.get("monitor_interval") is not None:
                cfg.monitor_interval = float(c["monitor_interval"])
            cfg.min_baseline = int(c.get("min_baseline", 30))
            cfg.alarm_window = float(c.get("alarm_window", 86400.0))

            cfg.thresholds = {
                ch: FixedThresholds(float(t["warning"]), float(t["alarm"]))
                for ch, t in doc.get("thresholds", {}).items()
            }
            if doc.get("turbine"):
                cfg.turbine = PowerCurveParams.from_dict(doc["turbine"])
            cfg.decimal = doc.get("report", {}).get("decimal", ".")
            if cfg.decimal not in (".", ","):
                raise ConfigError("report.decimal must be '.' or ','")
            if doc.get("output"):
                cfg.output = path(doc["output"])
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from None
        cfg.check_fields()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def known_fields(self) -> set[str]:
        known = set(CORE_FIELDS)
        if self.scenario is not None and self.input_path is None:
            known |= set(self.scenario.vibration_channels)
        if self.schema:
            known |= set(self.schema.get("vibration", {}))
        elif self.input_path is not None:
            return set()  # header decides; checked after loading
        return known

    def check_fields(self) -> None:
        known = self.known_fields()
        if not known:
            return
        names = set(self.pair) | set(self.thresholds)
        for m in self.models:
            names.add(m.response)
            names |= {t.variable for t in m.candidates}
        unknown = sorted(names - known)
        if unknown:
            raise ConfigError(f"config refers to unknown fields: {unknown}")


# --------------------------------------------------------------------------
# steps


def load_input(cfg: PipelineConfig) -> Dataset:
    if cfg.input_path is not None:
        if not cfg.input_path.exists():
            raise InputError(f"input file not found: {cfg.input_path}")
        schema = cfg.schema
        if schema is None:
            schema = _schema_from_header(cfg.input_path)
        d = read_dataset(cfg.input_path, schema, reorder_buffer=cfg.reorder_buffer)
    else:
        d = generate_scenario(cfg.scenario)
    return d


def _schema_from_header(path: Path) -> dict[str, Any]:
    """Identity schema over whichever known columns the file has; other
    non-timestamp columns are taken as vibration channels."""
    with open(path, encoding="utf-8-sig", newline="") as fh:
        header = next(csv.reader(fh), [])
    schema: dict[str, Any] = {"timestamp": "timestamp"}
    vib = {}
    for h in header:
        h = h.strip()
        if h == "timestamp":
            continue
        if h in CORE_FIELDS:
            schema[h] = h
        else:
            vib[h] = h
    if vib:
        schema["vibration"] = vib
    return schema


def read_events(path: Path) -> list[tuple[np.datetime64, str]]:
    if not path.exists():
        raise InputError(f"events file not found: {path}")
    events = []
    with open(path, encoding="utf-8-sig", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                events.append((parse_timestamp(row["timestamp"]), row.get("label", "")))
            except (KeyError, ValueError):
                raise InputError(f"bad events row: {row}") from None
    return sorted(events, key=lambda e: e[0])


def effective_upper_bound(cfg: PipelineConfig, d: Dataset):
    if cfg.upper_bound is not None:
        return cfg.upper_bound
    if cfg.events_path is not None and len(d):
        later = [t for t, _ in read_events(cfg.events_path) if t > d.timestamps[0]]
        if later:
            return later[0]
    return None


def run_baseline(cfg: PipelineConfig, running: Dataset) -> BaselineWindow:
    data = running if cfg.baseline_interval is None else subsample(running, cfg.baseline_interval)
    return detect_baseline(data, cfg.pair[0], cfg.pair[1], cfg.min_points,
                           upper_bound=effective_upper_bound(cfg, running))


def fit_one(cfg: PipelineConfig, running: Dataset, start, end, spec: ModelSpec) -> RegressionModel:
    base = running.between(start, end)
    if cfg.fit_interval is not None:
        base = subsample(base, cfg.fit_interval)
    if spec.select:
        return best_subset(base, spec.response, spec.candidates)
    return ols_fit(base, spec.response, spec.candidates)


@dataclass
class MonitorResult:
    variable: str
    report: AlarmReport
    fixed: dict[str, Any] | None
    windows: list[tuple[np.datetime64, int]]


def monitor_one(cfg: PipelineConfig, monitored: Dataset, start, end, model: RegressionModel) -> MonitorResult:
    resid = residual_series(model, monitored)
    chart = fit_chart(resid.between(start, end).values, cfg.min_baseline)
    report = monitor(chart, resid, baseline_end=end)
    fixed = None
    th = cfg.thresholds.get(model.response)
    if th is not None:
        raw = monitored.column(model.response)
        ok = np.isfinite(raw)
        fixed = compare_fixed(monitored.timestamps[ok], raw[ok], th).counts()
        fixed.update(warning_threshold=th.warning, alarm_threshold=th.alarm)
    return MonitorResult(model.response, report, fixed, alarm_counts(report, cfg.alarm_window))


def _pmap(fn, items):
    items = list(items)
    if len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(4, len(items))) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# file output


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2) + "\n", encoding="utf-8")


def _write_text(path: Path, writer) -> None:
    buf = io.StringIO()
    writer(buf)
    path.write_text(buf.getvalue(), encoding="utf-8")


class Pipeline:
    """Stateful runner that caches each step's result for one config."""

    def __init__(self, cfg: PipelineConfig, out: Path | None = None):
        self.cfg = cfg
        self.out = Path(out or cfg.output)
        self._data: Dataset | None = None
        self._running: Dataset | None = None
        self._window: tuple[np.datetime64, np.datetime64] | None = None
        self._models: dict[str, RegressionModel] | None = None

    def _ensure_out(self) -> None:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.out}: {exc}") from None

    @property
    def data(self) -> Dataset:
        if self._data is None:
            self._data = load_input(self.cfg)
            if self.cfg.input_path is not None:
                known = set(self._data.fields)
                names = set(self.cfg.pair) | {m.response for m in self.cfg.models}
                for m in self.cfg.models:
                    names |= {t.variable for t in m.candidates}
                missing = sorted(names - known)
                if missing:
                    raise ConfigError(f"config refers to fields absent from the input: {missing}")
        return self._data

    @property
    def running(self) -> Dataset:
        if self._running is None:
            self._running = filter_running(self.data)
        return self._running

    # simulate / ingest

    def simulate(self) -> Path:
        if self.cfg.scenario is None:
            raise ConfigError("config has no simulate section")
        self._ensure_out()
        d = generate_scenario(self.cfg.scenario)
        path = self.out / "dataset.csv"
        _write_text(path, lambda s: write_scada_csv(d, s))
        dump_json(d.meta["ground_truth"], self.out / "ground_truth.json")
        return path

    def ingest(self) -> dict[str, Any]:
        self._ensure_out()
        d = self.data
        r = self.running
        gen = {g.value: 0 for g in GeneratorUse}
        rotor = r.column("rotor_speed")
        for v in rotor[np.isfinite(rotor)]:
            if v >= 0:
                gen[classify_generator(float(v)).value] += 1
        info = {
            "provenance": d.provenance,
            "rows": int(d.meta.get("rows", len(d))),
            "records": len(d),
            "rejected": d.rejected,
            "running": len(r),
            "cadence": d.cadence,
            "missing": {f: int(np.isnan(r.column(f)).sum()) for f in r.fields},
            "generator_use": gen,
        }
        _write_text(self.out / "running.csv", lambda s: write_scada_csv(r, s))
        dump_json(info, self.out / "ingest.json")
        return info

    # step 1

    def baseline(self, write: bool = True) -> tuple[np.datetime64, np.datetime64]:
        if self._window is not None:
            return self._window
        cfg = self.cfg
        if cfg.baseline_end is not None:
            self._window = (self.running.timestamps[0], cfg.baseline_end)
            return self._window
        cached = self.out / "baseline.json"
        if not write and cached.exists():
            doc = json.loads(cached.read_text(encoding="utf-8"))
            self._window = (parse_timestamp(doc["start"]), parse_timestamp(doc["end"]))
            return self._window
        bw = run_baseline(cfg, self.running)
        self._ensure_out()
        doc = bw.to_dict()
        doc["pair"] = list(cfg.pair)
        ub = effective_upper_bound(cfg, self.running)
        doc["upper_bound"] = None if ub is None else format_timestamp(ub)
        dump_json(doc, cached)
        _write_text(self.out / "rho_profile.csv", bw.profile.write_csv)
        self._window = (bw.start, bw.end)
        return self._window

    # step 2

    def fit(self, write: bool = True) -> dict[str, RegressionModel]:
        if self._models is not None:
            return self._models
        start, end = self.baseline(write=False)
        models: dict[str, RegressionModel] = {}
        pending = []
        for spec in self.cfg.models:
            path = self.out / f"model_{spec.response}.json"
            if not write and path.exists():
                models[spec.response] = RegressionModel.from_json(path.read_text(encoding="utf-8"))
            else:
                pending.append(spec)
        fitted = _pmap(lambda s: fit_one(self.cfg, self.running, start, end, s), pending)
        if fitted:
            self._ensure_out()
        for spec, m in zip(pending, fitted):
            models[spec.response] = m
            (self.out / f"model_{spec.response}.json").write_text(m.to_json() + "\n", encoding="utf-8")
        self._models = {s.response: models[s.response] for s in self.cfg.models}
        return self._models

    # steps 3 and 4

    def monitor(self) -> dict[str, Any]:
        start, end = self.baseline(write=False)
        models = self.fit(write=False)
        monitored = self.running
        if self.cfg.monitor_interval is not None:
            monitored = subsample(monitored, self.cfg.monitor_interval)
        results = _pmap(lambda m: monitor_one(self.cfg, monitored, start, end, m), models.values())
        self._ensure_out()
        summary: dict[str, Any] = {
            "baseline": {"start": format_timestamp(start), "end": format_timestamp(end)},
            "variables": {},
        }
        if self.cfg.events_path is not None:
            summary["events"] = [{"timestamp": format_timestamp(t), "label": lb}
                                 for t, lb in read_events(self.cfg.events_path)]
        for res in results:
            entry = res.report.summary(decimal=self.cfg.decimal)
            if res.fixed is not None:
                entry["fixed_thresholds"] = res.fixed
            entry["alarms_per_window"] = {
                "window_seconds": self.cfg.alarm_window,
                "max": max((c for _, c in res.windows), default=0),
                "windows_with_alarms": sum(1 for _, c in res.windows if c),
            }
            summary["variables"][res.variable] = entry
            _write_text(self.out / f"alarms_{res.variable}.csv", res.report.write_csv)
            _write_text(self.out / f"alarm_windows_{res.variable}.csv",
                        lambda s, w=res.windows: _write_windows(s, w))
        dump_json(summary, self.out / "summary.json")
        return summary

    def run_all(self) -> dict[str, Any]:
        self.baseline(write=True)
        self.fit(write=True)
        return self.monitor()


def _write_windows(stream, windows) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["window_start", "out_count"])
    for t, c in windows:
        w.writerow([format_timestamp(t), c])


def render_summary(summary: Mapping[str, Any]) -> str:
    lines = [f"baseline {summary['baseline']['start']} .. {summary['baseline']['end']}"]
    for var, e in summary["variables"].items():
        ch = e["chart"]
        lines.append(
            f"{var}: {e['out_count']}/{e['total']} out of control ({e['percent_out']}), "
            f"limits [{ch['lcl']:.6g}, {ch['ucl']:.6g}]"
        )
        if "fixed_thresholds" in e:
            f = e["fixed_thresholds"]
            lines.append(f"  fixed thresholds: {f['warning']} warning, {f['alarm']} alarm")
    return "\n".join(lines)
