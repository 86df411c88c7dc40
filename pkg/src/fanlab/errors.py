"""Exception hierarchy shared by every fanlab module."""


class FanlabError(Exception):
    pass


class DimensionError(FanlabError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(FanlabError, FloatingPointError):
    """An op produced NaN or Inf."""


class ContractError(FanlabError, RuntimeError):
    """A precondition of an API call was violated."""


class SpecError(FanlabError, ValueError):
    """A network specification is malformed."""


class ConfigError(FanlabError, ValueError):
    """An experiment/task configuration is invalid."""


class DivergenceError(FanlabError):
    """Training produced a non-finite loss.

    ``last_record`` holds the last finite metrics record (or None) and
    ``history`` everything recorded before the failure.
    """

    def __init__(self, message, last_record=None, history=()):
        super().__init__(message)
        self.last_record = last_record
        self.history = list(history)
