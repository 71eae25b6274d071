"""Regression-adjusted statistical process control for wind-turbine SCADA data."""

from .baseline import BaselineWindow, CorrelationProfile, correlation_profile, detect_baseline
from .ingest import (
    CORE_FIELDS,
    Dataset,
    OperatingState,
    ScadaRecord,
    filter_running,
    parse_scada_csv,
    subsample,
    write_scada_csv,
)
from .regress import (
    ModelTerm,
    RegressionModel,
    acf,
    best_subset,
    enumerate_subsets,
    mallows_cp,
    ols_fit,
    pearson_correlation,
    predict,
    residual_series,
)
from .simulate import (
    DutyModel,
    EnvTempModel,
    FaultKind,
    FaultSpec,
    Link,
    ScenarioConfig,
    WindModel,
    generate_scenario,
    inject_fault,
)
from .spc import (
    AlarmReport,
    ControlChart,
    FixedThresholds,
    compare_fixed,
    fit_chart,
    format_percent,
    monitor,
    moving_range_sigma,
)
from .turbine import GeneratorUse, PowerCurveParams, classify_generator, theoretical_power

__version__ = "0.1.0"
