"""Input checks shared by the estimators and data types."""

import numbers

import numpy as np


def as_finite_vector(value, name, size=None):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.size != size:
        raise ValueError(f"{name} must have length {size}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_nonnegative(arr, name):
    if np.any(np.asarray(arr) < 0):
        raise ValueError(f"{name} must be nonnegative")


def check_positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positive(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_game(game):
    """Accept a ``TwoStageGame`` or its dict form; return a ``TwoStageGame``."""
    from .game import TwoStageGame, game_from_dict

    if isinstance(game, TwoStageGame):
        return game
    if isinstance(game, dict):
        return game_from_dict(game)
    raise TypeError(f"expected a TwoStageGame or its dict form, got {type(game).__name__}")
