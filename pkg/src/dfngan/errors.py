"""Exception types raised across the package."""


class DfnGanError(Exception):
    """Base class for all package errors."""


class ConvergenceFailure(DfnGanError):
    pass


class DefectiveMatrix(DfnGanError):
    pass


class AllZeroSpectrum(DfnGanError):
    pass


class NotPSD(DfnGanError):
    pass


class MalformedWav(DfnGanError):
    pass


class UnsupportedEncoding(DfnGanError):
    pass


class SignalTooShort(DfnGanError):
    pass


class ShapeMismatch(DfnGanError, ValueError):
    pass


class ZeroPowerGenerated(DfnGanError):
    pass


class NonFiniteGradient(DfnGanError):
    pass


class NonFiniteLoss(DfnGanError):
    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class ChecksumError(DfnGanError):
    pass


class VersionMismatch(DfnGanError):
    pass


class ConfigError(DfnGanError, ValueError):
    pass
