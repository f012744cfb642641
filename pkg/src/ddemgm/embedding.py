"""Delay embedding and its streaming, grid-quantized derivative variant.

States are stacked as ``(y[t], y[t+s], ..., y[t+(d-1)s])`` with each
``y`` an ``n``-vector, giving ``D = n * d`` coordinates per state. The
streaming form works on first differences and snaps each state to an
integer grid cell, which is what the Markov models count.
"""

from dataclasses import dataclass

import numpy as np

from .signal import LengthError, as_series, derivative

Cell = tuple  # tuple[int, ...] of length D


@dataclass(frozen=True)
class EmbeddingConfig:
    """Delay step ``s``, dimension ``d``, derivative lag ``tau`` and grid.

    ``cell_sizes`` has one entry per embedded coordinate (``n * d``); use
    :meth:`from_dim_sizes` to replicate per-channel sizes across delays.
    """

    n: int
    s: int
    d: int
    tau: int
    cell_sizes: tuple

    def __post_init__(self):
        if self.n < 1 or self.s < 1 or self.d < 1 or self.tau < 1:
            raise ValueError("n, s, d and tau must all be >= 1")
        sizes = tuple(float(c) for c in self.cell_sizes)
        if len(sizes) != self.n * self.d:
            raise ValueError(
                f"expected {self.n * self.d} cell sizes, got {len(sizes)}"
            )
        if not all(np.isfinite(c) and c > 0 for c in sizes):
            raise ValueError("cell sizes must be finite and positive")
        object.__setattr__(self, "cell_sizes", sizes)

    @classmethod
    def from_dim_sizes(cls, s, d, dim_sizes, tau=1):
        dim_sizes = [float(c) for c in np.atleast_1d(dim_sizes)]
        return cls(n=len(dim_sizes), s=int(s), d=int(d), tau=int(tau),
                   cell_sizes=tuple(dim_sizes) * int(d))

    @property
    def D(self) -> int:
        return self.n * self.d

    @property
    def span(self) -> int:
        """Raw samples covered by one embedded state, before differencing."""
        return (self.d - 1) * self.s + 1

    @property
    def warmup(self) -> int:
        """Pushes that emit nothing on a fresh stream."""
        return (self.d - 1) * self.s + self.tau


def delay_embed(series, s: int, d: int) -> np.ndarray:
    """Stack delayed copies; row ``t`` is ``y[t], y[t+s], ..., y[t+(d-1)s]``.

    Returns an array of shape ``(N - (d-1)*s, n*d)``.
    """
    y = as_series(series)
    if s < 1 or d < 1:
        raise ValueError("s and d must be >= 1")
    count = y.shape[0] - (d - 1) * s
    if count < 1:
        raise LengthError(
            f"need at least {(d - 1) * s + 1} samples, got {y.shape[0]}"
        )
    return np.hstack([y[k * s:k * s + count] for k in range(d)])


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def discretize_many(states, cell_sizes) -> np.ndarray:
    """Quantize each row of ``states`` to integer cell indices."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    sizes = np.asarray(cell_sizes, dtype=np.float64)
    if states.shape[1] != sizes.shape[0]:
        raise ValueError(
            f"state has {states.shape[1]} coords but {sizes.shape[0]} cell sizes"
        )
    if np.any(sizes <= 0):
        raise ValueError("cell sizes must be positive")
    return _round_half_away(states / sizes).astype(np.int64)


def discretize(state, cell_sizes) -> Cell:
    """Nearest grid cell of a single state.

    Cell 0 on each axis is centred on the origin; ties round away from zero.
    """
    return tuple(int(v) for v in discretize_many(state, cell_sizes)[0])


def dde_cells(series, config: EmbeddingConfig) -> np.ndarray:
    """Offline DDE: derivative, delay embedding, quantization.

    Returns a ``(T, D)`` integer array, empty when the series is shorter
    than one window.
    """
    y = as_series(series)
    if y.shape[1] != config.n:
        raise ValueError(f"expected {config.n} channels, got {y.shape[1]}")
    if y.shape[0] <= config.warmup:
        return np.empty((0, config.D), dtype=np.int64)
    states = delay_embed(derivative(y, config.tau), config.s, config.d)
    return discretize_many(states, config.cell_sizes)


class DdeStream:
    """Incremental DDE over a fixed-size ring buffer of raw samples.

    Holds ``(d-1)*s + 1 + tau`` samples; once full, every push yields the
    cell of the newest complete window.
    """

    def __init__(self, config: EmbeddingConfig):
        self.config = config
        self.capacity = config.span + config.tau
        self._buf = np.zeros((self.capacity, config.n))
        self._sizes = np.asarray(config.cell_sizes)
        lead = np.arange(config.d) * config.s
        self._lead = lead + config.tau
        self._lag = lead
        self._pos = 0
        self._count = 0
        self.prev = None

    def reset(self):
        self._pos = 0
        self._count = 0
        self.prev = None

    @property
    def count(self) -> int:
        """Samples pushed since the last reset."""
        return self._count

    def push(self, sample):
        """Add one sample; return its cell, or None during warm-up."""
        x = np.asarray(sample, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.config.n:
            raise ValueError(
                f"sample has {x.shape[0]} values, expected {self.config.n}"
            )
        if not np.all(np.isfinite(x)):
            raise ValueError("sample contains non-finite values")
        self._buf[self._pos] = x
        self._pos = (self._pos + 1) % self.capacity
        self._count += 1
        if self._count < self.capacity:
            return None
        # oldest sample now sits at _pos
        lead = self._buf[(self._pos + self._lead) % self.capacity]
        lag = self._buf[(self._pos + self._lag) % self.capacity]
        coords = ((lead - lag) / self.config.tau).reshape(-1)
        idx = _round_half_away(coords / self._sizes)
        cell = tuple(int(v) for v in idx)
        self.prev = cell
        return cell
