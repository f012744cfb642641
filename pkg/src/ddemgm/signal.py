"""Raw multivariate series handling: validation, finite differences, summary stats."""

from dataclasses import dataclass

import numpy as np


class LengthError(ValueError):
    """Series too short for the requested operation."""


class EmptyInputError(ValueError):
    """Operation needs at least one sample."""


def as_series(values) -> np.ndarray:
    """Coerce ``values`` to a float64 array of shape ``(N, n)``.

    1-D input is read as a univariate series. Non-finite values are rejected
    here so they never reach the embedding or the models.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"series must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError("series is empty")
    if arr.shape[1] == 0:
        raise ValueError("series has zero dimensions")
    if not np.all(np.isfinite(arr)):
        raise ValueError("series contains non-finite values")
    return arr


def derivative(series, tau: int = 1) -> np.ndarray:
    """Lag-``tau`` finite difference ``(y[t+tau] - y[t]) / tau``.

    Output has ``len(series) - tau`` rows.
    """
    y = as_series(series)
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    if y.shape[0] <= tau:
        raise LengthError(f"need more than {tau} samples, got {y.shape[0]}")
    return (y[tau:] - y[:-tau]) / tau


@dataclass(frozen=True)
class SeriesStats:
    minimum: np.ndarray
    maximum: np.ndarray
    std: np.ndarray  # population convention (ddof=0)
    length: int


def stats(series) -> SeriesStats:
    y = as_series(series)
    return SeriesStats(
        minimum=y.min(axis=0),
        maximum=y.max(axis=0),
        std=y.std(axis=0),
        length=y.shape[0],
    )
