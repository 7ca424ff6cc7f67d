"""Exception hierarchy shared across the detector pipeline."""


class HfoError(Exception):
    """Base class for all errors raised by snn_hfo."""


class RecordingFormatError(HfoError):
    """A recording file could not be parsed.

    ``location`` is a byte offset for binary files and a 1-based line number
    for CSV files.
    """

    def __init__(self, message, path=None, location=None):
        self.path = path
        self.location = location
        where = []
        if path is not None:
            where.append(str(path))
        if location is not None:
            where.append(str(location))
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ChannelLengthMismatch(RecordingFormatError):
    pass


class UnsupportedEncoding(RecordingFormatError):
    pass


class InvalidPair(HfoError):
    pass


class InvalidFilterSpec(HfoError):
    pass


class NonFiniteSample(HfoError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"non-finite sample at index {index}")


class SignalTooShort(HfoError):
    pass


class OutOfRangeParam(HfoError):
    pass


class NoAdmissibleConfig(HfoError):
    pass


class EmptyCorpus(HfoError):
    pass


class InvalidDuration(HfoError, ValueError):
    pass


class InvalidCount(HfoError, ValueError):
    pass


class MissingCalibration(HfoError):
    pass
