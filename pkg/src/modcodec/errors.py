"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes (see ``modcodec.cli``).
"""


class ModcodecError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ModcodecError, ValueError):
    """Invalid configuration, argument, or shape combination."""


class NumericError(ModcodecError, ArithmeticError):
    """A NaN/Inf appeared, or an operation left its numeric domain."""


class GraphError(ModcodecError, RuntimeError):
    """Misuse of the differentiation record (non-scalar loss, stale graph)."""


class DataError(ModcodecError):
    """Malformed file, bitstream, or checkpoint."""


class DecodeError(DataError):
    """Entropy-coded payload could not be decoded."""


class ChecksumError(DataError):
    """Bitstream was produced by a different model checkpoint."""
