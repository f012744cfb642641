"""Automatic choice of delay step, embedding dimension and grid cell size."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .embedding import delay_embed
from .signal import LengthError, as_series, derivative

log = logging.getLogger(__name__)


class NoDominantFrequencyError(ValueError):
    """Spectrum is flat outside DC (constant input)."""


class MissingDataError(ValueError):
    pass


def dominant_freq_index(series) -> int:
    """Index of the strongest non-DC bin of the DFT magnitude spectrum.

    Bins ``1 .. N//2`` are searched. Multichannel input averages the
    per-channel magnitude spectra first. Ties go to the lowest bin.
    """
    y = as_series(series)
    N = y.shape[0]
    if N < 4:
        raise LengthError(f"need at least 4 samples, got {N}")
    if np.all(y == y[0]):
        raise NoDominantFrequencyError("constant series")
    mag = np.abs(np.fft.rfft(y, axis=0)).mean(axis=1)
    band = mag[1:N // 2 + 1]
    if band.max() <= 1e-12:
        raise NoDominantFrequencyError("no spectral energy outside DC")
    return int(np.argmax(band)) + 1


def select_delay(N: int, d: int, n: int) -> int:
    """Delay step ``floor(N / (2 d n))``, at least 1."""
    if N < 1 or d < 1 or n < 1:
        raise ValueError("N, d and n must be >= 1")
    return max(1, N // (2 * d * n))


def _fnn_pairs(y, s, m):
    """States at dimension ``m`` that have a successor coordinate, plus it."""
    N = y.shape[0]
    count = N - m * s
    if count < 1:
        raise LengthError(f"need more than {m * s} samples for m={m}, s={s}")
    states = delay_embed(y, s, m)[:count]
    ahead = y[m * s:m * s + count]
    return states, ahead


def fnn_fraction(series, s: int, m: int, eps: float, r_th: float = 10.0) -> float:
    """Fraction of states whose nearest eps-neighbour is false at dimension m.

    For each state with at least one other state strictly closer than
    ``eps``, the nearest such neighbour ``j`` (lowest index on ties) is
    checked with ``R = |y[i+m*s] - y[j+m*s]| / |x_i - x_j|``. States with
    no eps-neighbour do not enter the denominator; 0 is returned when none
    qualify.
    """
    y = as_series(series)
    if eps <= 0 or r_th <= 0:
        raise ValueError("eps and r_th must be positive")
    states, ahead = _fnn_pairs(y, s, m)
    count = states.shape[0]
    eps2 = eps * eps
    tested = 0
    flagged = 0
    block = 512
    for lo in range(0, count, block):
        hi = min(lo + block, count)
        diff = states[lo:hi, None, :] - states[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        d2[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        d2[d2 >= eps2] = np.inf
        j = np.argmin(d2, axis=1)
        best = d2[np.arange(hi - lo), j]
        has = np.isfinite(best)
        if not has.any():
            continue
        rows = np.arange(lo, hi)[has]
        j = j[has]
        num = np.sqrt(np.sum((ahead[rows] - ahead[j]) ** 2, axis=1))
        den = np.sqrt(best[has])
        with np.errstate(divide="ignore", invalid="ignore"):
            R = np.where(num == 0, 0.0, num / den)
        tested += rows.size
        flagged += int(np.count_nonzero(R > r_th))
    return flagged / tested if tested else 0.0


@dataclass
class FnnReport:
    fractions: dict  # m -> fraction
    d: int
    exhausted: bool  # no m reached the negligible level


def select_dimension(series, s: int, eps=None, r_th: float = 10.0,
                     negligible: float = 0.01, m_max: int = 12) -> FnnReport:
    """Smallest ``m`` whose false-neighbour fraction is at most ``negligible``.

    ``eps`` defaults to a tenth of the channel-averaged standard deviation.
    The sweep stops early, flagged as exhausted, if the series is too short
    to test larger ``m``.
    """
    y = as_series(series)
    if eps is None:
        eps = float(y.std(axis=0).mean()) / 10.0
    if eps <= 0:
        raise ValueError("eps must be positive (is the series constant?)")
    fractions = {}
    for m in range(1, m_max + 1):
        try:
            frac = fnn_fraction(y, s, m, eps, r_th)
        except LengthError:
            if m == 1:
                raise
            log.warning("series too short for m=%d at s=%d; stopping sweep", m, s)
            break
        fractions[m] = frac
        if frac <= negligible:
            return FnnReport(fractions, m, False)
    return FnnReport(fractions, max(fractions), True)


def select_cell_sizes(deriv_series, bins: int = 50) -> np.ndarray:
    """Per-channel cell size ``(max - min) / bins``; flat channels get 1."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    y = as_series(deriv_series)  # EmptyInputError on empty input
    span = y.max(axis=0) - y.min(axis=0)
    return np.where(span > 0, span / bins, 1.0)


@dataclass
class ParamSelection:
    s: int
    d: int
    cell_sizes: np.ndarray  # per input channel
    provenance: dict = field(default_factory=dict)  # label -> [(s, d), ...]


def select_series_params(series, tau: int = 1, m_max: int = 12, **fnn_kw):
    """``(s, d)`` for one series, computed on its derivative.

    Seeds ``d = 2`` to get ``s``, sweeps FNN at that ``s`` for ``d``, then
    recomputes ``s`` once with the final ``d``.
    """
    dy = derivative(series, tau)
    N = dy.shape[0]
    n_dom = dominant_freq_index(dy)
    s = select_delay(N, 2, n_dom)
    d = select_dimension(dy, s, m_max=m_max, **fnn_kw).d
    return select_delay(N, d, n_dom), d


def _round_half_up(x: float) -> int:
    return max(1, int(np.floor(x + 0.5)))


def select_params(labeled, per_class_k: int = 5, m_max: int = 12,
                  bins: int = 50, tau: int = 1, seed=None) -> ParamSelection:
    """Class-averaged parameters from a random draw of training series.

    ``labeled`` maps each label to a list of series. Each class contributes
    the mean of its drawn series' ``(s, d)``; the final values are the
    across-class means rounded half up. Cell sizes come from the pooled
    derivative range of every drawn series.
    """
    rng = np.random.default_rng(seed)
    if not labeled:
        raise MissingDataError("no classes given")
    class_s, class_d = [], []
    provenance = {}
    pooled = []
    for label, items in labeled.items():
        if len(items) == 0:
            raise MissingDataError(f"class {label!r} has no series")
        k = min(per_class_k, len(items))
        picks = rng.choice(len(items), size=k, replace=False)
        chosen = []
        for i in sorted(picks):
            y = as_series(items[i])
            try:
                chosen.append(select_series_params(y, tau=tau, m_max=m_max))
            except (NoDominantFrequencyError, LengthError, ValueError) as exc:
                log.warning("class %r series %d skipped: %s", label, i, exc)
                continue
            pooled.append(derivative(y, tau))
        if not chosen:
            raise MissingDataError(f"class {label!r} has no usable series")
        provenance[label] = chosen
        class_s.append(np.mean([c[0] for c in chosen]))
        class_d.append(np.mean([c[1] for c in chosen]))
    return ParamSelection(
        s=_round_half_up(float(np.mean(class_s))),
        d=_round_half_up(float(np.mean(class_d))),
        cell_sizes=select_cell_sizes(np.vstack(pooled), bins),
        provenance=provenance,
    )
