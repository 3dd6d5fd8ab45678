"""Input validation helpers shared by the library, the estimators and the CLI."""

import math
import numbers

import numpy as np

from thermowit.exceptions import DimensionError, DomainError, ValidationError

HERMITIAN_ATOL = 1e-9
TRACE_ATOL = 1e-9
# eigenvalues in [-PSD_CLAMP, 0) are float noise and read as 0
PSD_CLAMP = 1e-9


def check_square_matrix(a, name="matrix"):
    """Return ``a`` as a complex square 2-d array, or raise."""
    try:
        arr = np.asarray(a, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_hermitian(arr, name="matrix", atol=HERMITIAN_ATOL):
    dev = np.max(np.abs(arr - arr.conj().T))
    if dev > atol:
        raise ValidationError(f"{name} is not Hermitian (max deviation {dev:.3e})")
    return arr


def check_dims(dims, total):
    """Validate a subsystem dimension list against a total dimension."""
    if dims is None:
        return (int(total),)
    try:
        dims = tuple(int(d) for d in dims)
    except (TypeError, ValueError):
        raise DimensionError(f"dims must be a list of integers, got {dims!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise DimensionError(f"dims must be positive integers, got {dims}")
    if math.prod(dims) != total:
        raise DimensionError(f"product of dims {dims} is {math.prod(dims)}, matrix dimension is {total}")
    return dims


def check_subsystems(indices, n_subsystems, name="keep"):
    """Return sorted unique subsystem indices, checking the range."""
    if isinstance(indices, numbers.Integral):
        indices = (indices,)
    idx = sorted({int(i) for i in indices})
    if not idx:
        raise DimensionError(f"{name} must be non-empty")
    if idx[0] < 0 or idx[-1] >= n_subsystems:
        raise DimensionError(f"{name}={idx} out of range for {n_subsystems} subsystems")
    return tuple(idx)


def check_beta(beta, name="beta"):
    beta = check_finite(beta, name)
    if beta <= 0:
        raise DomainError(f"{name} must be positive, got {beta}")
    return beta


def check_finite(x, name="x"):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a real number, got {x!r}") from None
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x}")
    return x


def check_unit_interval(p, name="p"):
    p = check_finite(p, name)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_int(n, name, minimum=None, maximum=None):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        if isinstance(n, float) and n.is_integer():
            n = int(n)
        else:
            raise DomainError(f"{name} must be an integer, got {n!r}")
    n = int(n)
    if minimum is not None and n < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {n}")
    if maximum is not None and n > maximum:
        raise DomainError(f"{name} must be <= {maximum}, got {n}")
    return n
