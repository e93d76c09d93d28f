"""Input-validation helpers shared by all modules."""
import math

import numpy as np


class ValidationError(ValueError):
    """Raised for inputs that violate a documented precondition."""


class ConvergenceError(RuntimeError):
    """Raised when a numerical procedure fails to reach its tolerance."""


def check_finite(value, name):
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def check_positive(value, name, allow_zero=False):
    value = check_finite(value, name)
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValidationError(f"{name} must be {bound}, got {value!r}")
    return value


def check_nonnegative(value, name):
    return check_positive(value, name, allow_zero=True)


def check_interval(pair, name):
    lo, hi = (check_finite(v, name) for v in pair)
    if not lo < hi:
        raise ValidationError(f"{name} must satisfy lo < hi, got {pair!r}")
    return lo, hi


def check_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value:
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_array(values, name, ndim=None, nonnegative=False):
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if nonnegative and np.any(arr < 0):
        raise ValidationError(f"{name} contains negative entries")
    return arr


def check_uniform_axis(axis, name, rtol=1e-9):
    axis = check_array(axis, name, ndim=1)
    if axis.size < 2:
        raise ValidationError(f"{name} needs at least two points")
    steps = np.diff(axis)
    if np.any(steps <= 0) or np.ptp(steps) > rtol * abs(steps.mean()) * axis.size:
        raise ValidationError(f"{name} must be a uniform increasing grid")
    return axis
