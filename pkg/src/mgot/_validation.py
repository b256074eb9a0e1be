"""Input validation helpers shared by the solvers."""

import numpy as np

SIMPLEX_ATOL = 1e-9


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Attributes
    ----------
    violation : float
        Marginal violation (max-norm) reached when the solver stopped.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, violation=float("nan"), iterations=0, index=None):
        super().__init__(message)
        self.violation = violation
        self.iterations = iterations
        self.index = index


def check_cost(cost, name="cost"):
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or 0 in C.shape:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(C < 0):
        raise ValueError(f"{name} contains negative entries")
    return C


def check_square(mat, name):
    M = np.asarray(mat, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def check_marginal(weights, size=None, name="marginal", strict=True):
    """Validate a probability vector; ``strict`` forbids zero entries."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if size is not None and w.size != size:
        raise ValueError(f"{name} has length {w.size}, expected {size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(w.sum() - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"{name} must sum to 1 (sum={w.sum()!r})")
    if strict and np.any(w == 0):
        idx = int(np.flatnonzero(w == 0)[0])
        raise ValueError(f"{name} has a zero entry at index {idx}")
    return w


def uniform(n):
    return np.full(n, 1.0 / n)


def check_positive(value, name):
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value
