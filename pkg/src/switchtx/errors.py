"""Exception types raised across the package."""


class SwitchTxError(Exception):
    """Base class for all errors raised by switchtx."""


class CapacityExceeded(SwitchTxError):
    pass


class MalformedPacket(SwitchTxError):
    pass


class QueueOverflow(SwitchTxError):
    """A recirculation queue is full; on hardware the packet would be dropped."""


class Infeasible(SwitchTxError):
    pass


class UnknownKey(SwitchTxError, KeyError):
    pass


class ConstraintViolation(SwitchTxError):
    pass


class UnsupportedShape(SwitchTxError):
    """A warm transaction reads a hot tuple and then touches a cold tuple that depends on it."""


class InconsistentLogs(SwitchTxError):
    pass


class NoConsistentOrder(SwitchTxError):
    pass


class ConfigError(SwitchTxError):
    pass


class AuditFailure(SwitchTxError):
    pass
