"""Scalar training losses: cross-entropy, confusion loss and their weighted total.

Batched inputs (2-d probability arrays) are reduced by the arithmetic mean.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

PROB_FLOOR = 1e-12


class ClampWarning(RuntimeWarning):
    """A probability below the floor was clamped before taking its log."""


def _clamped_log(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < PROB_FLOOR):
        warnings.warn(
            f"probabilities below {PROB_FLOOR:g} clamped before log", ClampWarning, stacklevel=3
        )
    return np.log(np.maximum(p, PROB_FLOOR))


def _check_simplex(p):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim not in (1, 2) or p.shape[-1] == 0:
        raise ValueError(f"probabilities must be a 1-d vector or 2-d batch, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must be finite and lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("probabilities must sum to 1")
    return p


def cross_entropy(p, true_index):
    """``-log p[true_index]``; a batch ``(n, k)`` with ``n`` indices gives the mean."""
    p = _check_simplex(p)
    idx = np.asarray(true_index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("true_index must be integer")
    k = p.shape[-1]
    if np.any(idx < 0) or np.any(idx >= k):
        raise IndexError(f"true_index out of range for {k} classes")
    if p.ndim == 1:
        if idx.ndim != 0:
            raise ValueError("a single probability vector takes a scalar index")
        return float(-_clamped_log(p[int(idx)]))
    if idx.shape != (p.shape[0],):
        raise ValueError("batch needs one index per row")
    return float(-np.mean(_clamped_log(p[np.arange(p.shape[0]), idx])))


def confusion_loss(p_s):
    """``-(1/N) sum_i log p_s[i]``, minimized (at ``log N``) by the uniform vector."""
    p = _check_simplex(p_s)
    per_row = -np.mean(_clamped_log(p), axis=-1)
    return float(np.mean(per_row))


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta_align: float = 0.8

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta_align >= 0):
            raise ValueError("loss weights must be nonnegative")


# which parameter groups each term is allowed to update
PARAMETER_GROUPS = {
    "classification": ("encoder", "condition_head"),
    "confusion": ("encoder", "sensitive_head"),
    "sensitive": ("sensitive_head",),
    "alignment": ("encoder", "text_encoder", "mask_generator"),
}


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    terms: dict
    parameter_groups: dict = field(default_factory=lambda: dict(PARAMETER_GROUPS))

    def __float__(self):
        return self.total

    def for_group(self, group):
        """Weighted sum of the terms that flow into ``group``."""
        return sum(v for k, v in self.terms.items() if group in self.parameter_groups[k])


def total_loss(l_c, l_conf, l_s, l_got, w=None):
    """Weighted total ``l_c + alpha*l_conf + l_s + beta_align*l_got``.

    The sensitive-branch term is tagged so that callers can route it to the
    sensitive head only.
    """
    w = w or LossWeights()
    values = (l_c, l_conf, l_s, l_got)
    if not all(math.isfinite(x) for x in values):
        raise ValueError("loss terms must be finite")
    terms = {
        "classification": float(l_c),
        "confusion": w.alpha * l_conf,
        "sensitive": float(l_s),
        "alignment": w.beta_align * l_got,
    }
    return LossBreakdown(l_c + w.alpha * l_conf + l_s + w.beta_align * l_got, terms)
