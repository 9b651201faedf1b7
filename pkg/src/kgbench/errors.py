"""Exception hierarchy shared by every stage.

The command line maps these onto exit codes: :class:`ConfigError` is a
usage problem (1), :class:`DataError` means bad input data (2) and
:class:`RuntimeFailure` covers failures while running (3).
"""


class KGBenchError(Exception):
    """Base class for all errors raised by kgbench."""


class ConfigError(KGBenchError):
    """Invalid configuration or command-line usage."""


class DataError(KGBenchError):
    """Malformed or inconsistent input data.

    ``path`` and ``line`` locate the offending record when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class SchemaError(DataError):
    """A relation schema violates one of the relation invariants."""


class RuntimeFailure(KGBenchError):
    """Failure while a stage is running (divergence, scorer crash, ...)."""


class DivergenceError(RuntimeFailure):
    def __init__(self, batch_index, loss):
        self.batch_index = batch_index
        self.loss = loss
        super().__init__(f"training diverged: non-finite loss {loss!r} in batch {batch_index}")


class ProtocolError(RuntimeFailure):
    """External scorer broke the line protocol."""
