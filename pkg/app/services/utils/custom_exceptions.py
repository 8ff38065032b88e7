"""Create custom exceptions for services here."""


class NPIException(Exception):
    pass


class InvalidState(NPIException, ValueError):
    pass


class WeightError(NPIException):
    pass


class RangeError(NPIException):
    pass


class NegativeProbability(NPIException):
    pass


class UnsupportedState(NPIException):
    pass


class ZeroDenominator(NPIException):
    pass


class ConfigurationError(NPIException):
    pass


class ConfigError(NPIException):
    pass


class UnsortedStream(NPIException):
    pass


class AlreadyCorrected(NPIException):
    pass


class NotCorrected(NPIException):
    pass


class EmptyChannel(NPIException):
    pass


class InvalidCalibration(NPIException):
    pass


class MalformedFile(NPIException):
    pass
