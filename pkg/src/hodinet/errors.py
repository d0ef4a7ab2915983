class HodinetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HodinetError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(HodinetError, ValueError):
    """A documented precondition does not hold (stage sizes, scalar roots, ...)."""


class ConfigError(HodinetError, ValueError):
    """Configuration or checkpoint does not match the model being built."""


class ParseError(HodinetError, ValueError):
    """Malformed image or checkpoint file."""

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class UnsupportedFormatError(ParseError):
    """Well-formed file that uses a feature outside the supported subset."""
