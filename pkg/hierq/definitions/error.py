"""Error classes for package."""


class HierqException(Exception):
    """General hierq exception.

    Args:
        message (str): Human readable message.
        **details: Extra machine readable context, echoed by `to_dict()`.
    """

    def __init__(self, message='', **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        """Machine readable representation, as printed by the CLI."""
        return {
            'error': self.__class__.__name__,
            'message': str(self),
            'details': {k: _plain(v) for k, v in self.details.items()}
        }


class ConfigurationError(HierqException):
    """Invalid parameters or experiment config."""


class DimensionMismatchError(ConfigurationError):
    """Vector length does not match the expected dimension."""


class InputError(HierqException):
    """Invalid input value, e.g. non-finite vector entries."""


class ConditionViolatedError(HierqException):
    """A closed-form result is used outside the condition it requires."""


class DivergenceError(HierqException):
    """Training diverged: non-finite or exploding cloud model.

    Attributes:
        round (int): Cloud round at which divergence was detected.
        trace (RunTrace or None): Trace recorded up to the previous round.
    """

    def __init__(self, message='', round=None, trace=None, **details):
        super().__init__(message, round=round, **details)
        self.round = round
        self.trace = trace


class OutputError(HierqException):
    """Output location cannot be written."""


def _plain(value):
    """Coerce detail values to JSON-friendly types."""
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(x) for x in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return str(value)
