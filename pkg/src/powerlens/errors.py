"""Exception hierarchy. CLI maps ``ParseError`` to exit 2 and ``FitError`` to exit 3."""


class PowerLensError(Exception):
    pass


class ParseError(PowerLensError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class SchemaMismatch(ParseError):
    pass


class NonMonotoneTimestamp(ParseError):
    pass


class UnsupportedVersion(ParseError):
    pass


class FitError(PowerLensError):
    pass


class InsufficientData(FitError):
    pass


class InsufficientDataAtFrequency(InsufficientData):
    def __init__(self, freq_khz, message=""):
        self.freq_khz = freq_khz
        super().__init__(f"insufficient data at {freq_khz} kHz" + (f": {message}" if message else ""))


class SingularSystem(FitError):
    pass


class EmptyGroup(FitError):
    pass


class NonFiniteLoss(FitError):
    pass


class ModelNotFitted(PowerLensError):
    pass


class MissingPerCoreData(PowerLensError, ValueError):
    pass


class LengthMismatch(PowerLensError, ValueError):
    pass


class DegenerateVariance(PowerLensError, ValueError):
    pass


class EmptyDataset(PowerLensError, ValueError):
    pass


class EmptyTrace(PowerLensError, ValueError):
    pass


class OutOfRange(PowerLensError, ValueError):
    pass


class WindowTooLarge(OutOfRange):
    pass


class UnsupportedFrequency(PowerLensError, ValueError):
    pass


class GovernorPermissionDenied(PowerLensError, PermissionError):
    pass


class MeterReadFailure(PowerLensError):
    pass
