"""Invertible preprocessing transforms for observation matrices.

Each transform returns the transformed array and a JSON-serializable
metadata dict that records what was done.
"""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError

LOG_SQUARED_FLOOR = 1e-12
STEPS = ("center_scale", "first_difference", "log_squared", "max_abs_scale")


def center_scale(y):
    """Subtract the column means and divide by the column standard deviations."""
    y = np.asarray(y, dtype=float)
    mean = y.mean(axis=0)
    scale = y.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (y - mean) / scale, {"step": "center_scale", "mean": mean.tolist(), "scale": scale.tolist()}


def invert_center_scale(y, meta):
    return np.asarray(y, dtype=float) * np.asarray(meta["scale"]) + np.asarray(meta["mean"])


def first_difference(y):
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 2:
        raise ParameterError("first differences need at least two rows")
    return np.diff(y, axis=0), {"step": "first_difference", "first_row": y[0].tolist()}


def invert_first_difference(dy, meta):
    first = np.asarray(meta["first_row"], dtype=float)
    return np.vstack([first, first + np.cumsum(np.asarray(dy, dtype=float), axis=0)])


def log_squared(y, floor: float = LOG_SQUARED_FLOOR):
    """``log(max(y^2, floor))``; the number of clamped entries is recorded."""
    y = np.asarray(y, dtype=float)
    sq = y * y
    clamped = int(np.sum(sq < floor))
    return np.log(np.maximum(sq, floor)), {"step": "log_squared", "floor": floor,
                                           "clamped_entries": clamped}


def max_abs_scale(y, target: float = 10.0):
    """Scale each column so that its largest magnitude equals ``target``."""
    y = np.asarray(y, dtype=float)
    m = np.max(np.abs(y), axis=0)
    factor = np.where(m > 0, target / np.where(m > 0, m, 1.0), 1.0)
    return y * factor, {"step": "max_abs_scale", "target": target, "factor": factor.tolist()}


def invert_max_abs_scale(y, meta):
    return np.asarray(y, dtype=float) / np.asarray(meta["factor"])


_FORWARD = {"center_scale": center_scale, "first_difference": first_difference,
            "log_squared": log_squared, "max_abs_scale": max_abs_scale}


def apply_steps(y, steps):
    """Apply named steps in order; returns ``(array, list of metadata dicts)``."""
    metas = []
    for s in steps:
        if s not in _FORWARD:
            raise ParameterError(f"unknown preprocessing step {s!r}; choose from {STEPS}")
        y, meta = _FORWARD[s](y)
        metas.append(meta)
    return y, metas


def invert_steps(y, metas):
    """Undo a sequence of steps (log-squared is not invertible)."""
    inverse = {"center_scale": invert_center_scale, "first_difference": invert_first_difference,
               "max_abs_scale": invert_max_abs_scale}
    for meta in reversed(metas):
        if meta["step"] not in inverse:
            raise ParameterError(f"step {meta['step']!r} cannot be inverted")
        y = inverse[meta["step"]](y, meta)
    return y
