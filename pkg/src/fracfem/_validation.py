"""Input validation helpers shared by the estimator and the functional API."""

import numbers

import numpy as np


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def check_alpha(alpha):
    """Return ``alpha`` as a float in the open interval (0, 1)."""
    value = float(getattr(alpha, "alpha", alpha))
    if not 0.0 < value < 1.0:
        raise DomainError(f"fractional order must lie in (0, 1), got {value!r}")
    return value


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise DomainError(f"{name} must be a finite real number, got {value!r}")
    if value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_time_grid(grid):
    """Validate a time grid: starts at 0, strictly increasing."""
    grid = np.asarray(getattr(grid, "points", grid), dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("time grid must be a non-empty 1D array")
    if grid[0] != 0.0:
        raise DomainError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("time grid must be strictly increasing")
    return grid


def check_points(x, dim):
    """Coerce evaluation points to shape ``(n_points, dim)``."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DomainError(f"points must have shape (n, {dim}), got {x.shape}")
    return x
