"""Modeling throughput and model size across grid resolutions."""

import gc
import time
from dataclasses import dataclass

import numpy as np

from ..classifier import OnlineClassifier
from ..embedding import EmbeddingConfig
from ..params import select_cell_sizes
from ..signal import LengthError, as_series, derivative
from .io import dumps_model

DEFAULT_SWEEP = (20, 30, 40, 50, 60)


@dataclass
class BenchReport:
    bins: int
    points: int
    seconds: float  # best of the timed windows
    rate: float  # points / seconds
    cells: int  # distinct cells in the last window's model
    model_bytes: int

    def as_dict(self):
        return {"bins": self.bins, "points": self.points,
                "seconds": round(self.seconds, 6), "rate": round(self.rate, 1),
                "cells": self.cells, "model_bytes": self.model_bytes}


def bench_rate(series, s, d, r=1, bins_sweep=DEFAULT_SWEEP, points=10_000,
               repeats=3, tau=1, seed=0):
    """Time online modeling of ``points``-long windows, one report per bins.

    Every bins setting trains on the same ``repeats`` random windows; cell
    sizes come from the derivative range of the full series. ``seconds`` is
    the fastest window, the usual best-of-N timing convention.
    """
    y = as_series(series)
    if y.shape[0] < points:
        raise LengthError(f"need at least {points} samples, got {y.shape[0]}")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, y.shape[0] - points + 1, size=repeats)
    dy = derivative(y, tau)
    reports = []
    for bins in bins_sweep:
        config = EmbeddingConfig.from_dim_sizes(s, d, select_cell_sizes(dy, bins), tau)
        best = float("inf")
        clf = None
        for start in starts:
            window = y[start:start + points]
            clf = OnlineClassifier(config, r=r)
            gc_was = gc.isenabled()
            gc.disable()
            try:
                t0 = time.perf_counter()
                clf.train_series("stream", window)
                best = min(best, time.perf_counter() - t0)
            finally:
                if gc_was:
                    gc.enable()
        reports.append(BenchReport(
            bins=bins, points=points, seconds=best, rate=points / best,
            cells=len(clf.models["stream"]), model_bytes=len(dumps_model(clf)),
        ))
    return reports
