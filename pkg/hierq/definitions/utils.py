"""Utils."""
import numpy as np

from hierq.definitions.error import DimensionMismatchError, InputError


def as_vector(values, dim=None, name='vector'):
    """Coerce values to a finite float64 vector.

    Args:
        values (array-like): Vector entries.
        dim (int or None): Required length, if any.
        name (str): Name used in error messages.

    Returns:
        numpy.ndarray: One-dimensional float64 array.

    Raises:
        DimensionMismatchError: Length differs from dim.
        InputError: Any entry is NaN or infinite.
    """
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        vector = vector.reshape(-1)
    if dim is not None and vector.shape[0] != dim:
        msg = '{} has length {}, expected {}.'.format(
            name, vector.shape[0], dim)
        raise DimensionMismatchError(msg, expected=dim, got=vector.shape[0])
    if not np.all(np.isfinite(vector)):
        raise InputError('{} contains non-finite entries.'.format(name))
    return vector


def norm_sq(vector):
    """Squared Euclidean norm as a python float."""
    return float(np.dot(vector, vector))


def ceil_int(value):
    """Ceiling of a positive real as an int, never below 1.

    Examples:
        >>> ceil_int(6.32)
        7
        >>> ceil_int(0.001)
        1
    """
    return max(1, int(np.ceil(value)))
