"""Turbine-specific domain logic: generator identification and power curve."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidParams, NegativeSpeed


class GeneratorUse(Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"
    NONE_IN_USE = "none"


# RPM bands of the two-generator (large/small) drivetrain.
PRIMARY_ABOVE = 25.8
SECONDARY_BAND = (19.0, 21.0)


def classify_generator(
    rotor_speed: float,
    primary_above: float = PRIMARY_ABOVE,
    secondary_band: tuple[float, float] = SECONDARY_BAND,
) -> GeneratorUse:
    """Infer which generator is online from the rotor speed (RPM).

    Primary when the speed strictly exceeds ``primary_above``, secondary
    inside the closed ``secondary_band``, otherwise neither.
    """
    if rotor_speed < 0 or np.isnan(rotor_speed):
        raise NegativeSpeed(f"rotor speed must be >= 0, got {rotor_speed!r}")
    if rotor_speed > primary_above:
        return GeneratorUse.PRIMARY
    lo, hi = secondary_band
    if lo <= rotor_speed <= hi:
        return GeneratorUse.SECONDARY
    return GeneratorUse.NONE_IN_USE


@dataclass(frozen=True)
class PowerCurveParams:
    """Parameters of the theoretical power curve ``P = 0.5 * rho * A * cp * u**3``.

    Speeds in m/s, area in m², power in W. ``rotor_area`` and
    ``power_coefficient`` have no defaults and must come from configuration.
    """

    rotor_area: float
    power_coefficient: float
    air_density: float = 1.225
    cut_in: float = 4.0
    rated: float = 15.0
    cut_out: float = 25.0
    rated_power: float = 600_000.0

    def __post_init__(self) -> None:
        if not 0 < self.cut_in < self.rated < self.cut_out:
            raise InvalidParams("need 0 < cut_in < rated < cut_out")
        if not 0 < self.power_coefficient < 1:
            raise InvalidParams("power_coefficient must lie in (0, 1)")
        if self.air_density <= 0 or self.rotor_area <= 0:
            raise InvalidParams("air_density and rotor_area must be positive")
        if self.rated_power <= 0:
            raise InvalidParams("rated_power must be positive")

    @classmethod
    def from_dict(cls, cfg: dict) -> "PowerCurveParams":
        try:
            return cls(**cfg)
        except TypeError as exc:
            raise InvalidParams(str(exc)) from None


def theoretical_power(wind_speed, p: PowerCurveParams):
    """Theoretical electrical output in W for scalar or array wind speeds.

    Zero outside ``[cut_in, cut_out]``; cubic and capped at ``rated_power``
    between cut-in and rated speed; ``rated_power`` from rated to cut-out.
    """
    u = np.asarray(wind_speed, dtype=float)
    if np.any(u < 0):
        raise ValueError("wind speed must be non-negative")
    cubic = 0.5 * p.air_density * p.rotor_area * p.power_coefficient * u**3
    out = np.where(u < p.rated, np.minimum(cubic, p.rated_power), p.rated_power)
    out = np.where((u < p.cut_in) | (u > p.cut_out), 0.0, out)
    return float(out) if out.ndim == 0 else out
