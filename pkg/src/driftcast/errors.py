"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`DriftcastError`. The three middle classes decide the CLI exit code:
configuration problems exit 2, data problems 3, numerical failures 4.
"""


class DriftcastError(Exception):
    exit_code = 1


class ConfigError(DriftcastError, ValueError):
    exit_code = 2


class DataError(DriftcastError, ValueError):
    exit_code = 3


class NumericalError(DriftcastError, ArithmeticError):
    exit_code = 4


# ingestion / windowing
class MalformedRow(DataError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class DuplicateTimestamp(DataError):
    def __init__(self, line, timestamp):
        super().__init__(f"line {line}: duplicate timestamp {timestamp}")
        self.line = line


class NonPositivePrice(DataError):
    pass


class OhlcOrderViolation(DataError):
    pass


class ConstantSeries(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class TooFewWindows(DataError):
    pass


class EmptySequence(DataError):
    pass


class LengthMismatch(DataError):
    pass


# patterns
class LengthTooSmall(DataError):
    pass


class WindowTooShort(DataError):
    pass


class IndivisibleWindowSize(ConfigError):
    pass


class InvalidTemplate(ConfigError):
    pass


# tensors and models
class ShapeMismatch(DriftcastError, ValueError):
    def __init__(self, op, *shapes):
        joined = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")
        self.op = op
        self.shapes = shapes


class NonScalarLoss(DriftcastError, ValueError):
    pass


class MissingGradient(DriftcastError, ValueError):
    pass


class TeacherTargetsMissing(DriftcastError, ValueError):
    pass


class EmptyDataset(DataError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class VersionMismatch(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


# statistics
class NoPivotsAtAll(NumericalError):
    pass


class EmptyHistory(DataError):
    pass


class NonPositiveVariance(NumericalError):
    pass


class IncompatibleConfigs(ConfigError):
    pass
