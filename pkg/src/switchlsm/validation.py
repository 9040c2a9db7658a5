"""Input validation helpers and the package's exception types.

All user-facing entry points funnel their argument checking through these
helpers so error behaviour stays uniform across the library, the estimator
and the CLI.
"""

from __future__ import annotations

import numpy as np

LEANING_EPS = 1e-6
ROW_SUM_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class IngestionError(ValidationError):
    """Raised when an input file is malformed."""


class DegenerateSeriesError(ValueError):
    """Raised when a chain series is too short or has zero variance."""


class DegenerateInputError(ValueError):
    """Raised when a quantity is undefined for the given configuration."""


class NumericalDegeneracyError(RuntimeError):
    """Raised when a computation collapses numerically (e.g. all-impossible
    emission rows in the state filter)."""


class InitializationError(RuntimeError):
    """Raised when a sampler cannot start from its initial state.

    Carries a ``payload`` dict describing the offending quantities.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = dict(payload or {})


def as_float_array(x, name, ndim=None):
    arr = np.asarray(x, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_finite_scalar(x, name):
    x = float(x)
    if not np.isfinite(x):
        raise ValidationError(f"{name} must be finite, got {x}")
    return x


def check_positive(x, name):
    x = check_finite_scalar(x, name)
    if x <= 0:
        raise ValidationError(f"{name} must be > 0, got {x}")
    return x


def check_positive_array(x, name):
    arr = as_float_array(x, name)
    if arr.size and arr.min(initial=np.inf) <= 0:
        raise ValidationError(f"{name} must be elementwise > 0")
    return arr


def check_row_stochastic(mat, name="trans", tol=ROW_SUM_TOL):
    mat = as_float_array(mat, name, ndim=2)
    if mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {mat.shape}")
    if np.any(mat < 0):
        raise ValidationError(f"{name} must have nonnegative entries")
    row_sums = mat.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > tol):
        raise ValidationError(f"rows of {name} must sum to 1 within {tol:g}, got {row_sums}")
    return mat


def check_weights(weights, name="weights"):
    """Validate a (T, N, N) stack of symmetric nonnegative-integer matrices.

    The diagonal is never read and is not validated.
    """
    arr = np.asarray(weights)
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValidationError(f"{name} must have shape (T, N, N), got {arr.shape}")
    arr = arr.astype(float, copy=True)
    if arr.size == 0:
        return arr
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    off = ~np.eye(arr.shape[1], dtype=bool)
    vals = arr[:, off]
    if np.any(vals < 0):
        raise ValidationError(f"{name} must be nonnegative off the diagonal")
    if np.any(vals != np.round(vals)):
        raise ValidationError(f"{name} must hold integer counts off the diagonal")
    if not np.allclose(arr * off, np.transpose(arr, (0, 2, 1)) * off):
        raise ValidationError(f"{name} must be symmetric off the diagonal")
    return arr


def clamp_leaning(leaning, name="leaning", eps=LEANING_EPS):
    """Clamp leaning values into [eps, 1 - eps]; reject values outside [0, 1]."""
    arr = np.asarray(leaning, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValidationError(f"{name} must lie in [0, 1] before clamping")
    return np.clip(arr, eps, 1.0 - eps)


def check_unit_interval_open(x, name, eps=LEANING_EPS):
    x = check_finite_scalar(x, name)
    if x < eps or x > 1.0 - eps:
        raise ValidationError(f"{name} must lie in [{eps:g}, {1 - eps:g}] after clamping, got {x}")
    return x


def check_seed(seed):
    seed = int(seed)
    if seed < 0:
        raise ValidationError(f"seed must be a nonnegative integer, got {seed}")
    return seed
