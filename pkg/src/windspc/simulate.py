"""Synthetic SCADA scenarios with known ground truth and injectable faults.

Random streams
--------------
Every stochastic component draws from its own PCG64 generator seeded with
``SeedSequence([seed, crc32(name)])``, where ``name`` is the stream label
(``"env"``, ``"wind"``, ``"duty"``, ``"state"``, ``"generator_speed"``,
``"power"``, ``"missing"``, ``"pitch"``, ``"yaw"``, ``"link:<field>"`` and
``"fault:<index>"``). Changing one component's settings therefore leaves
the other streams untouched.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidConfig, OnsetOutOfRange, UnknownField
from .ingest import CORE_FIELDS, Dataset, OperatingState, as_datetime64, format_timestamp
from .regress import ModelTerm
from .turbine import PowerCurveParams, theoretical_power

DAY = 86400.0

_DRIVERS = ("env_temp", "wind_speed", "rotor_speed", "generator_speed", "power_output",
            "operating_state", "pitch_angle", "yaw")


def stream(seed: int, name: str) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class EnvTempModel:
    """Ambient temperature: seasonal and daily sinusoids plus white noise.

    The seasonal term starts at its trough when ``seasonal_phase_days`` is 0.
    """

    mean: float = 10.0
    seasonal_amplitude: float = 8.0
    seasonal_period_days: float = 365.0
    seasonal_phase_days: float = 0.0
    daily_amplitude: float = 3.0
    noise_sigma: float = 0.5


@dataclass
class WindModel:
    """Wind speed ``mean * exp(z)`` with ``z`` a zero-mean AR(1) per sample."""

    mean: float = 7.0
    persistence: float = 0.98
    noise_sigma: float = 0.05


@dataclass
class DutyModel:
    """Rotor-speed regime probabilities and the share of Run states."""

    primary: float = 0.55
    secondary: float = 0.30
    idle: float = 0.15
    run_probability: float = 0.95


@dataclass
class Link:
    """Ground-truth linear relation ``field = intercept + sum(coef * var**power) + N(0, sigma)``."""

    intercept: float
    terms: tuple[tuple[ModelTerm, float], ...]
    noise_sigma: float = 0.0

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Link":
        terms = tuple((ModelTerm(str(v), int(p)), float(c)) for v, p, c in doc.get("terms", ()))
        return cls(float(doc.get("intercept", 0.0)), terms, float(doc.get("noise_sigma", 0.0)))

    def to_dict(self) -> dict[str, Any]:
        return {
            "intercept": self.intercept,
            "terms": [[t.variable, t.power, c] for t, c in self.terms],
            "noise_sigma": self.noise_sigma,
        }


def default_linkage() -> dict[str, Link]:
    """Relations shaped like the published nacelle, generator and vibration models.

    Gearbox and bearing temperatures each carry one driver that no downstream
    model uses (wind speed, pitch angle). Without it they would be exact
    linear combinations of the generator model's other regressors once the
    noise is switched off, and that model could not be identified.
    """
    T = ModelTerm
    return {
        "nacelle_temp": Link(7.5, ((T("env_temp"), 0.95),), 1.0),
        "gearbox_temp": Link(15.0, ((T("env_temp"), 0.8), (T("generator_speed"), 0.02),
                                    (T("wind_speed"), 0.5)), 1.5),
        "bearing_temp": Link(10.0, ((T("env_temp"), 0.6), (T("gearbox_temp"), 0.4),
                                    (T("pitch_angle"), 0.3)), 1.0),
        "gen1_temp": Link(5.0, ((T("env_temp"), 0.5), (T("generator_speed"), 0.01),
                                (T("bearing_temp"), -0.5), (T("gearbox_temp"), 1.5)), 2.0),
        "gen2_temp": Link(20.0, ((T("env_temp"), 0.7),), 1.5),
        "oil_temp": Link(20.0, ((T("env_temp"), 0.5), (T("gearbox_temp"), 0.3)), 1.0),
        "gen_de_vibration": Link(0.2, ((T("generator_speed"), 2e-4), (T("wind_speed", 3), 1.5e-4),
                                       (T("gen1_temp"), 0.01), (T("gen1_temp", 2), -5e-5)), 0.05),
        "gbx_input_vibration": Link(0.3, ((T("gearbox_temp"), 0.005), (T("wind_speed", 3), 2e-4)), 0.05),
    }


class FaultKind(Enum):
    MEAN_SHIFT = "mean_shift"
    LINEAR_DRIFT = "linear_drift"
    DECORRELATION = "decorrelation"
    VIBRATION_GROWTH = "vibration_growth"


@dataclass(frozen=True)
class FaultSpec:
    """A fault applied from ``onset`` on.

    ``magnitude`` is in target units for MeanShift, target units per day for
    LinearDrift, the fraction of post-onset readings replaced by independent
    noise for Decorrelation, and the end-of-record relative growth for
    VibrationGrowth.
    """

    kind: FaultKind
    target: str
    onset: np.datetime64
    magnitude: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FaultKind(self.kind))
        object.__setattr__(self, "onset", as_datetime64(self.onset))
        if not self.magnitude > 0:
            raise InvalidConfig("fault magnitude must be positive")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FaultSpec":
        try:
            return cls(FaultKind(doc["kind"]), doc["target"], doc["onset"], float(doc["magnitude"]))
        except (KeyError, ValueError) as exc:
            raise InvalidConfig(f"bad fault spec {dict(doc)!r}: {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "target": self.target,
                "onset": format_timestamp(self.onset), "magnitude": self.magnitude}


@dataclass
class ScenarioConfig:
    duration_days: float = 30.0
    cadence: float = 240.0
    seed: int = 0
    start: str = "2013-06-19T00:00:00Z"
    env: EnvTempModel = field(default_factory=EnvTempModel)
    wind: WindModel = field(default_factory=WindModel)
    duty: DutyModel = field(default_factory=DutyModel)
    linkage: dict[str, Link] = field(default_factory=default_linkage)
    gear_ratio: float = 58.0
    generator_speed_noise: float = 5.0
    rotor_area: float = 1735.0
    power_coefficient: float = 0.4
    power_noise_kw: float = 10.0
    power_missing_fraction: float = 0.05
    faults: tuple[FaultSpec, ...] = ()

    @property
    def n_records(self) -> int:
        return int(round(self.duration_days * DAY / self.cadence))

    @property
    def vibration_channels(self) -> tuple[str, ...]:
        return tuple(k for k in self.linkage if k not in CORE_FIELDS)

    def noiseless(self) -> "ScenarioConfig":
        """Same scenario with all measurement and linkage noise set to zero.

        Wind innovations and rotor regimes stay random: they are the
        exogenous drivers that give the regressions something to fit.
        """
        return replace(
            self,
            env=replace(self.env, noise_sigma=0.0),
            linkage={k: replace(v, noise_sigma=0.0) for k, v in self.linkage.items()},
            generator_speed_noise=0.0,
            power_noise_kw=0.0,
            power_missing_fraction=0.0,
        )

    def validate(self) -> None:
        sigmas = [self.env.noise_sigma, self.wind.noise_sigma, self.generator_speed_noise,
                  self.power_noise_kw] + [l.noise_sigma for l in self.linkage.values()]
        if any(s < 0 for s in sigmas):
            raise InvalidConfig("noise sigmas must be non-negative")
        if not 0 <= self.wind.persistence < 1:
            raise InvalidConfig("wind persistence must lie in [0, 1)")
        if self.env.seasonal_period_days <= 0:
            raise InvalidConfig("seasonal period must be positive")
        if self.duration_days <= 0 or self.cadence <= 0 or self.wind.mean <= 0:
            raise InvalidConfig("duration, cadence and mean wind must be positive")
        probs = (self.duty.primary, self.duty.secondary, self.duty.idle)
        if min(probs) < 0 or sum(probs) <= 0:
            raise InvalidConfig("regime probabilities must be non-negative with a positive sum")
        if not 0 <= self.duty.run_probability <= 1:
            raise InvalidConfig("run_probability must lie in [0, 1]")
        if not 0 <= self.power_missing_fraction < 1:
            raise InvalidConfig("power_missing_fraction must lie in [0, 1)")
        known = set(_DRIVERS)
        for name, link in self.linkage.items():
            if name in _DRIVERS:
                raise InvalidConfig(f"{name!r} is an exogenous driver and cannot be linked")
            for term, _ in link.terms:
                if term.variable not in known:
                    raise InvalidConfig(
                        f"linkage for {name!r} uses {term.variable!r} before it is generated"
                    )
            known.add(name)
        try:
            as_datetime64(self.start)
        except ValueError as exc:
            raise InvalidConfig(f"bad start timestamp: {exc}") from None

    # config documents

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScenarioConfig":
        doc = dict(doc)
        kw: dict[str, Any] = {}
        try:
            for key in ("duration_days", "cadence", "gear_ratio", "generator_speed_noise",
                        "rotor_area", "power_coefficient", "power_noise_kw",
                        "power_missing_fraction"):
                if key in doc:
                    kw[key] = float(doc.pop(key))
            if "seed" in doc:
                kw["seed"] = int(doc.pop("seed"))
            if "start" in doc:
                kw["start"] = str(doc.pop("start"))
            if "env" in doc:
                kw["env"] = EnvTempModel(**doc.pop("env"))
            if "wind" in doc:
                kw["wind"] = WindModel(**doc.pop("wind"))
            if "duty" in doc:
                kw["duty"] = DutyModel(**doc.pop("duty"))
            if "linkage" in doc:
                kw["linkage"] = {k: Link.from_dict(v) for k, v in doc.pop("linkage").items()}
            if "faults" in doc:
                kw["faults"] = tuple(FaultSpec.from_dict(f) for f in doc.pop("faults"))
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad scenario config: {exc}") from None
        if doc:
            raise InvalidConfig(f"unknown scenario keys: {sorted(doc)}")
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return {
            "duration_days": self.duration_days,
            "cadence": self.cadence,
            "seed": self.seed,
            "start": self.start,
            "env": asdict(self.env),
            "wind": asdict(self.wind),
            "duty": asdict(self.duty),
            "linkage": {k: v.to_dict() for k, v in self.linkage.items()},
            "gear_ratio": self.gear_ratio,
            "generator_speed_noise": self.generator_speed_noise,
            "rotor_area": self.rotor_area,
            "power_coefficient": self.power_coefficient,
            "power_noise_kw": self.power_noise_kw,
            "power_missing_fraction": self.power_missing_fraction,
            "faults": [f.to_dict() for f in self.faults],
        }


def ground_truth(cfg: ScenarioConfig) -> dict[str, Any]:
    return {
        "seed": cfg.seed,
        "prng": "PCG64, SeedSequence([seed, crc32(stream_name)])",
        "linkage": {k: v.to_dict() for k, v in cfg.linkage.items()},
        "faults": [f.to_dict() for f in cfg.faults],
    }


def generate_scenario(cfg: ScenarioConfig) -> Dataset:
    """Generate a synthetic dataset; a pure function of ``cfg``."""
    cfg.validate()
    n = cfg.n_records
    if n < 1:
        raise InvalidConfig("scenario produces no records")
    seed = cfg.seed
    t_rel = np.arange(n, dtype=float) * cfg.cadence
    start = as_datetime64(cfg.start)
    timestamps = start + np.round(t_rel).astype(np.int64).astype("timedelta64[s]")
    days = t_rel / DAY
    cols: dict[str, np.ndarray] = {}

    e = cfg.env
    seasonal = -e.seasonal_amplitude * np.cos(2 * np.pi * (days + e.seasonal_phase_days) / e.seasonal_period_days)
    daily = -e.daily_amplitude * np.cos(2 * np.pi * (days - 0.125))  # coldest at 03:00
    cols["env_temp"] = e.mean + seasonal + daily + stream(seed, "env").normal(0.0, e.noise_sigma, n)

    w = cfg.wind
    shocks = stream(seed, "wind").normal(0.0, w.noise_sigma, n)
    shocks[0] /= np.sqrt(1 - w.persistence**2)  # start from the stationary law
    z = lfilter([1.0], [1.0, -w.persistence], shocks)
    cols["wind_speed"] = w.mean * np.exp(z)

    d = cfg.duty
    probs = np.array([d.primary, d.secondary, d.idle], dtype=float)
    regime = stream(seed, "duty").choice(3, size=n, p=probs / probs.sum())
    rg = stream(seed, "duty-speed")
    rotor = np.where(regime == 0, rg.uniform(25.9, 26.6, n),
                     np.where(regime == 1, rg.uniform(19.2, 20.8, n), rg.uniform(0.0, 18.5, n)))
    cols["rotor_speed"] = rotor
    cols["generator_speed"] = rotor * cfg.gear_ratio + stream(seed, "generator_speed").normal(
        0.0, cfg.generator_speed_noise, n)

    sr = stream(seed, "state")
    running = sr.random(n) < d.run_probability
    other = sr.integers(0, 3, n)
    cols["operating_state"] = np.where(running, float(OperatingState.RUN), other.astype(float))

    curve = PowerCurveParams(rotor_area=cfg.rotor_area, power_coefficient=cfg.power_coefficient)
    power = theoretical_power(cols["wind_speed"], curve) / 1000.0 * (regime != 2)
    power = power + stream(seed, "power").normal(0.0, cfg.power_noise_kw, n)
    missing = stream(seed, "missing").random(n) < cfg.power_missing_fraction
    cols["power_output"] = np.where(missing, np.nan, power)

    cols["pitch_angle"] = np.abs(stream(seed, "pitch").normal(0.0, 2.0, n))
    cols["yaw"] = np.mod(180.0 + np.cumsum(stream(seed, "yaw").normal(0.0, 1.0, n)), 360.0)

    for name, link in cfg.linkage.items():
        value = np.full(n, link.intercept)
        for term, coef in link.terms:
            value = value + coef * cols[term.variable] ** term.power
        cols[name] = value + stream(seed, f"link:{name}").normal(0.0, link.noise_sigma, n)

    ds = Dataset(
        timestamps,
        cols,
        cadence=cfg.cadence,
        provenance=f"simulated:{seed}",
        vibration_channels=cfg.vibration_channels,
        meta={"ground_truth": ground_truth(cfg)},
    )
    for i, fault in enumerate(cfg.faults):
        ds = inject_fault(ds, fault, rng=stream(seed, f"fault:{i}"))
    return ds


def inject_fault(d: Dataset, f: FaultSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Apply ``f`` to a copy of ``d``; records before the onset are untouched."""
    if f.target not in d.columns:
        raise UnknownField(f"dataset has no field {f.target!r}")
    if len(d) == 0 or not d.timestamps[0] <= f.onset <= d.timestamps[-1]:
        raise OnsetOutOfRange(f"onset {format_timestamp(f.onset)} lies outside the dataset span")
    x = np.array(d.column(f.target), dtype=float)
    post = d.timestamps >= f.onset
    elapsed = (d.epoch_seconds[post] - f.onset.astype(np.int64)).astype(float)
    if f.kind is FaultKind.MEAN_SHIFT:
        x[post] += f.magnitude
    elif f.kind is FaultKind.LINEAR_DRIFT:
        x[post] += f.magnitude * elapsed / DAY
    elif f.kind is FaultKind.VIBRATION_GROWTH:
        span = float(d.epoch_seconds[-1] - f.onset.astype(np.int64))
        x[post] *= 1.0 + f.magnitude * (elapsed / span if span > 0 else 0.0)
    elif f.kind is FaultKind.DECORRELATION:
        if rng is None:
            rng = np.random.default_rng(0)
        finite = x[np.isfinite(x)]
        mu, sd = finite.mean(), finite.std()
        seg = x[post]
        ok = np.isfinite(seg)
        replace_mask = rng.random(seg.size) < min(f.magnitude, 1.0)
        noise = rng.normal(mu, sd, seg.size)
        x[post] = np.where(replace_mask & ok, noise, seg)
    meta = dict(d.meta)
    meta["faults"] = list(meta.get("faults", [])) + [f.to_dict()]
    return d.with_column(f.target, x).replace(meta=meta)
