"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`WindSpcError`. The
three intermediate classes map onto CLI exit statuses (input 2, modeling 3,
config 4).
"""

from __future__ import annotations


class WindSpcError(Exception):
    exit_code = 1


class InputError(WindSpcError, ValueError):
    exit_code = 2


class ModelingError(WindSpcError, ValueError):
    exit_code = 3


class ConfigError(WindSpcError, ValueError):
    exit_code = 4


# ingestion
class MissingColumn(InputError):
    pass


class EmptyInput(InputError):
    pass


class NonMonotoneTimestamps(InputError):
    pass


class InvalidInterval(ConfigError):
    pass


# turbine model
class NegativeSpeed(InputError):
    pass


class InvalidParams(ConfigError):
    pass


# regression
class RankDeficient(ModelingError):
    pass


class InsufficientData(ModelingError):
    pass


class DegenerateFullModel(ModelingError):
    pass


class TooManyCandidates(ModelingError):
    pass


class MissingField(ModelingError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class ZeroVariance(ModelingError):
    pass


class LengthMismatch(ModelingError):
    pass


class SeriesTooShort(ModelingError):
    pass


# baseline / charts
class NoValidWindow(ModelingError):
    pass


class ZeroRange(ModelingError):
    pass


class InsufficientBaseline(ModelingError):
    pass


# simulation
class InvalidConfig(ConfigError):
    pass


class UnknownField(ConfigError):
    pass


class OnsetOutOfRange(ConfigError):
    pass
