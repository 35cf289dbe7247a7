"""Small input-validation helpers shared by the modules."""

import math
from numbers import Real

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid user input (bad parameter values, files, keys)."""


class NumericalError(RuntimeError):
    """Raised when a computation produces non-finite or inconsistent numbers."""


def check_positive(name, value, allow_zero=False):
    """Return ``value`` as float after checking it is finite and positive.

    Args:
        name: Parameter name used in the error message.
        value: Value to check.
        allow_zero: Accept zero as well.

    Returns:
        The value converted to ``float``.
    """
    if not isinstance(value, Real) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    value = float(value)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"{name} must be {bound}, got {value!r}")
    return value


def check_fraction(name, value):
    value = check_positive(name, value, allow_zero=True)
    if value > 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_choice(name, value, choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def as_complex_array(name, values, ndim=1):
    arr = np.asarray(values, dtype=complex)
    if arr.ndim != ndim:
        raise ConfigError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite values")
    return arr


def frozen(arr):
    """Return a read-only copy of ``arr``."""
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out
