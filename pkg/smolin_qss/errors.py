"""Exception types raised by smolin_qss."""


class QssError(Exception):
    """Base class for every error raised by this package."""


class LabelError(QssError):
    """Qubit labels overlap, are unknown, or do not form a permutation."""


class CapacityError(QssError):
    """An operation would exceed the configured qubit cap."""


class ValidationError(QssError):
    """A matrix failed a numerical check (unitarity, hermiticity, ...)."""


class DomainError(QssError):
    """An argument lies outside the domain of an operation."""


class ConfigError(QssError):
    """Invalid protocol, experiment or file configuration."""


class ProtocolViolation(QssError):
    """A party broke the message rules of a protocol run."""


class StrategyInfeasible(QssError):
    """A cheating strategy cannot be carried out under the run's rules."""


class UsageError(QssError):
    """An operation was invoked in a state where it is not allowed."""


class ReportError(QssError):
    """A report could not be written."""
