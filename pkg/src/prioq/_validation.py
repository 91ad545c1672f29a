"""Small argument checkers shared by the public functions and estimators."""

import numbers

import numpy as np
from sklearn.utils import check_scalar

from .exceptions import ContractError, DomainError


def check_probability(value, name, *, allow_zero=True, allow_one=True):
    """Return ``value`` as float after checking it lies in [0, 1]."""
    check_scalar(value, name, numbers.Real, min_val=0.0, max_val=1.0)
    value = float(value)
    if not allow_zero and value == 0.0:
        raise ValueError(f"{name} must be > 0, got 0")
    if not allow_one and value == 1.0:
        raise ValueError(f"{name} must be < 1, got 1")
    return value


def check_positive_int(value, name, *, min_val=1):
    check_scalar(value, name, numbers.Integral, min_val=min_val)
    return int(value)


def check_in_support(s, lo, hi, name="s"):
    """Return ``s`` as a float array, raising DomainError if any entry is off [lo, hi]."""
    arr = np.asarray(s, dtype=float)
    # a few ulps of slack so that grid endpoints produced by affine maps pass
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(arr < lo - slack) or np.any(arr > hi + slack) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must lie in the support [{lo}, {hi}]")
    return np.clip(arr, lo, hi)


def check_grid_density(nodes, weights, values, *, mass_tol=1e-6):
    """Check that tabulated ``values`` form a probability density on a quadrature grid."""
    values = np.asarray(values, dtype=float)
    if values.shape != np.shape(nodes):
        raise ContractError("density values must have one entry per grid node")
    if not np.all(np.isfinite(values)):
        raise ContractError("density values must be finite")
    if np.any(values < 0):
        raise ContractError("density values must be nonnegative")
    mass = float(np.dot(weights, values))
    if abs(mass - 1.0) > mass_tol:
        raise ContractError(f"density integrates to {mass!r}, not 1 (tolerance {mass_tol})")
    return values
