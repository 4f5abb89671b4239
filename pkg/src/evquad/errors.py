"""Exception hierarchy shared by every stage of the codec."""


class EvquadError(ValueError):
    """Base class for all codec errors."""


class ParseError(EvquadError):
    """Malformed input record; ``offset`` is the byte offset of the bad record."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class OrderingError(EvquadError):
    pass


class BoundsError(EvquadError):
    pass


class DuplicateEventError(EvquadError):
    pass


class FormatError(EvquadError):
    """Container-level problem: bad magic, version, header fields or trailing bytes."""


class CorruptStreamError(EvquadError):
    """The payload cannot be decoded.

    ``events`` holds whatever was decoded before the failure (possibly empty)
    and ``unit_index`` the index of the unit that failed, when known.
    """

    def __init__(self, message, unit_index=None, events=None):
        super().__init__(message)
        self.unit_index = unit_index
        self.events = events


class ModelError(EvquadError):
    pass


class TrainingError(EvquadError):
    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch
