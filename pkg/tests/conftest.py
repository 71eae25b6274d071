from __future__ import annotations

import numpy as np
import pytest

from windspc.ingest import Dataset

T0 = np.datetime64("2013-06-19T00:00:00", "s")


def make_dataset(n=None, cadence=240, columns=None, offsets=None, **kw) -> Dataset:
    """Dataset on a regular grid (or explicit second offsets) from T0."""
    columns = columns or {}
    if offsets is None:
        if n is None:
            n = len(next(iter(columns.values()))) if columns else 0
        offsets = np.arange(n) * cadence
    ts = T0 + np.asarray(offsets, dtype=np.int64).astype("timedelta64[s]")
    return Dataset(ts, columns, cadence=cadence, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20131012)


def decorrelation_scenario(seed: int):
    """Hourly 60-day scenario whose nacelle/ambient link breaks at day 40.

    Returns ``(config, onset, onset_index)``. The ambient series is a slow
    seasonal ramp with little noise, so before the onset the pair is tightly
    correlated and the running correlation keeps climbing until the fault.
    """
    from dataclasses import replace

    from windspc.simulate import EnvTempModel, FaultKind, FaultSpec, ScenarioConfig, default_linkage

    onset_index = 40 * 24
    onset = T0 + np.timedelta64(onset_index * 3600, "s")
    linkage = default_linkage()
    linkage["nacelle_temp"] = replace(linkage["nacelle_temp"], noise_sigma=0.3)
    cfg = ScenarioConfig(
        duration_days=60, cadence=3600, seed=seed,
        env=EnvTempModel(seasonal_phase_days=365 / 4, daily_amplitude=0.0, noise_sigma=0.2),
        linkage=linkage,
        faults=(FaultSpec(FaultKind.DECORRELATION, "nacelle_temp", onset, 1.0),),
    )
    return cfg, onset, onset_index


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion's outcome for the end-of-run summary.

    Usage: ``criterion("3", passed, "detail")``; the line is printed whether
    or not the test's own assertions later fail.
    """

    def record(key: str, passed: bool, detail: str) -> None:
        prev = ACCEPTANCE.get(key)
        if prev is not None:
            passed = passed and prev[0]
            detail = f"{prev[1]}; {detail}"
        ACCEPTANCE[key] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
