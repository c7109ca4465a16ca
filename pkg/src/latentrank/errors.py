"""Exception hierarchy shared by every module."""


class LatentRankError(ValueError):
    """Base class for all errors raised by latentrank."""


class InvalidParameterError(LatentRankError):
    pass


class InvalidIntervalError(LatentRankError):
    pass


class DomainError(LatentRankError):
    pass


class InvalidDataError(LatentRankError):
    pass


class UndefinedStatisticError(LatentRankError):
    """The requested statistic has no value for this data (e.g. constant ranks)."""


class SampleTooSmallError(LatentRankError):
    pass


class InsufficientSamplesError(LatentRankError):
    """Too few posterior draws for the requested estimator."""


class ConfigurationError(LatentRankError):
    pass
