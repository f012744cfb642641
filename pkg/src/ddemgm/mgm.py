"""Markov geographic model: per-class cell and transition counts plus scoring.

A class model keeps, for the grid cells its training trajectories visit,

* a visit count per cell, turned into a log-damped occupancy distribution
  ``P(c) = log(n_c + 1) / sum_k log(n_k + 1)``;
* a count per observed transition, turned into ``P(to | from)``.

A test trajectory is scored by the running sum of occupancy probabilities
and the running log-product of (neighbourhood-pooled) transition
probabilities. Working in the log domain keeps long streams from
underflowing; the argmax over classes is unchanged.
"""

import itertools
import math
import threading
from dataclasses import dataclass

import numpy as np
from numba import njit

from .embedding import EmbeddingConfig

EPS_P = 1e-6
LOG_SHIFT = 62  # log terms scaled by 2**62 are exact integers
ENUMERATE_LIMIT = 4096


def _log_fx(count):
    return int(math.ldexp(math.log(count + 1), LOG_SHIFT))


class EmptyModelError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


@njit(cache=True)
def _cheb_within(a, b, r):
    for k in range(a.shape[0]):
        if abs(a[k] - b[k]) > r:
            return False
    return True


@njit(cache=True)
def _scan_counts(F, Ftot, Fhead, nF, T, Tnext, Tcnt, frm, to, r):
    # transitions leaving source k: Fhead[k], Tnext[...], ... until -1
    den = 0
    num = 0
    for k in range(nF):
        if not _cheb_within(F[k], frm, r):
            continue
        den += Ftot[k]
        m = Fhead[k]
        while m >= 0:
            if _cheb_within(T[m], to, r):
                num += Tcnt[m]
            m = Tnext[m]
    return num, den


@njit(cache=True)
def _scan_counts_many(F, Ftot, Fhead, nF, T, Tnext, Tcnt, frms, tos, r):
    q = frms.shape[0]
    nums = np.zeros(q, dtype=np.int64)
    dens = np.zeros(q, dtype=np.int64)
    for i in range(q):
        nums[i], dens[i] = _scan_counts(F, Ftot, Fhead, nF, T, Tnext, Tcnt,
                                        frms[i], tos[i], r)
    return nums, dens


@njit(cache=True)
def _row_hash(row):
    h = np.uint64(1469598103934665603)
    for k in range(row.shape[0]):
        h = (h ^ np.uint64(row[k])) * np.uint64(1099511628211)
    return h


@njit(cache=True)
def _build_table(F, nF):
    size = 1
    while size < 2 * nF + 1:
        size *= 2
    table = np.full(size, -1, dtype=np.int64)
    mask = np.uint64(size - 1)
    for k in range(nF):
        slot = _row_hash(F[k]) & mask
        while table[slot] >= 0:
            slot = (slot + np.uint64(1)) & mask
        table[slot] = k
    return table


@njit(cache=True)
def _find(table, F, key):
    mask = np.uint64(table.shape[0] - 1)
    slot = _row_hash(key) & mask
    while table[slot] >= 0:
        k = table[slot]
        same = True
        for j in range(key.shape[0]):
            if F[k, j] != key[j]:
                same = False
                break
        if same:
            return k
        slot = (slot + np.uint64(1)) & mask
    return -1


@njit(cache=True)
def _probe_counts_many(F, Ftot, Fhead, nF, T, Tnext, Tcnt, frms, tos, r):
    # visit the (2r+1)^D source window of each query through a hash index
    table = _build_table(F, nF)
    q, D = frms.shape
    nums = np.zeros(q, dtype=np.int64)
    dens = np.zeros(q, dtype=np.int64)
    off = np.empty(D, dtype=np.int64)
    key = np.empty(D, dtype=np.int64)
    for i in range(q):
        off[:] = -r
        num = 0
        den = 0
        while True:
            for j in range(D):
                key[j] = frms[i, j] + off[j]
            k = _find(table, F, key)
            if k >= 0:
                den += Ftot[k]
                m = Fhead[k]
                while m >= 0:
                    if _cheb_within(T[m], tos[i], r):
                        num += Tcnt[m]
                    m = Tnext[m]
            j = 0
            while j < D and off[j] == r:
                off[j] = -r
                j += 1
            if j == D:
                break
            off[j] += 1
        nums[i] = num
        dens[i] = den
    return nums, dens


class _Growable:
    """Row-appendable int64 array with amortized doubling."""

    def __init__(self, width, cap=64):
        shape = (cap, width) if width else (cap,)
        self.data = np.zeros(shape, dtype=np.int64)
        self.size = 0

    def append(self, row):
        if self.size == self.data.shape[0]:
            grown = np.zeros((2 * self.size,) + self.data.shape[1:], np.int64)
            grown[:self.size] = self.data
            self.data = grown
        self.data[self.size] = row
        self.size += 1
        return self.size - 1


class ClassModel:
    """Sparse cell/transition counts for one class.

    ``observe`` is the only mutator. It and every query take the model
    lock, so a single writer may update the model while other threads
    score against it; each observe lands atomically.
    """

    def __init__(self, config: EmbeddingConfig):
        self.config = config
        self.geo_counts = {}
        self._log_total_fx = 0
        self.trans_counts = {}
        self.out_index = {}  # from -> {to: count}
        self.out_total = {}
        self._lock = threading.RLock()
        D = config.D
        self._from_id = {}
        self._F = _Growable(D)
        self._Ftot = _Growable(0)
        self._Fhead = _Growable(0)
        self._trans_id = {}
        self._T = _Growable(D)
        self._Tnext = _Growable(0)
        self._Tcnt = _Growable(0)

    @property
    def geo_log_total(self) -> float:
        """Sum of log(count + 1) over visited cells, correctly rounded."""
        return math.ldexp(float(self._log_total_fx), -LOG_SHIFT)

    def __len__(self):
        return len(self.geo_counts)

    @property
    def n_observed(self) -> int:
        return sum(self.geo_counts.values())

    def _check(self, cell):
        if len(cell) != self.config.D:
            raise ValueError(
                f"cell has {len(cell)} indices, model expects {self.config.D}"
            )

    # -- mutation ---------------------------------------------------------

    def _add_geo(self, cell, count):
        old = self.geo_counts.get(cell, 0)
        self.geo_counts[cell] = old + count
        # exact integer bookkeeping: the total depends only on the counts
        self._log_total_fx += _log_fx(old + count) - _log_fx(old)

    def _add_trans(self, frm, to, count):
        key = (frm, to)
        self.trans_counts[key] = self.trans_counts.get(key, 0) + count
        outs = self.out_index.setdefault(frm, {})
        outs[to] = outs.get(to, 0) + count
        self.out_total[frm] = self.out_total.get(frm, 0) + count
        k = self._from_id.get(frm)
        if k is None:
            k = self._F.append(frm)
            self._Ftot.append(0)
            self._Fhead.append(-1)
            self._from_id[frm] = k
        self._Ftot.data[k] += count
        m = self._trans_id.get(key)
        if m is None:
            m = self._T.append(to)
            self._Tnext.append(self._Fhead.data[k])
            self._Fhead.data[k] = m
            self._Tcnt.append(0)
            self._trans_id[key] = m
        self._Tcnt.data[m] += count

    def observe(self, cell, prev=None):
        """Count one visit to ``cell`` and, if given, the step ``prev -> cell``."""
        cell = tuple(cell)
        self._check(cell)
        if prev is not None:
            prev = tuple(prev)
            self._check(prev)
        with self._lock:
            self._add_geo(cell, 1)
            if prev is not None:
                self._add_trans(prev, cell, 1)

    def load_counts(self, geo, trans):
        """Bulk-add count maps (used when reading a saved model)."""
        with self._lock:
            for cell, c in geo.items():
                self._check(cell)
                self._add_geo(tuple(cell), int(c))
            for (frm, to), c in trans.items():
                if frm not in self.geo_counts or to not in self.geo_counts:
                    raise ValueError("transition references an unvisited cell")
                self._add_trans(tuple(frm), tuple(to), int(c))

    def recompute_log_total(self) -> float:
        return math.fsum(math.log(c + 1) for c in self.geo_counts.values())

    # -- queries ----------------------------------------------------------

    def geo_prob(self, cell) -> float:
        with self._lock:
            if not self.geo_counts:
                raise EmptyModelError("model has no observations")
            return math.log(self.geo_counts.get(tuple(cell), 0) + 1) / self.geo_log_total

    def trans_prob(self, to, frm) -> float:
        """``P(to | from)``; the floor ``EPS_P`` for unseen pairs or sources."""
        with self._lock:
            if not self.geo_counts:
                raise EmptyModelError("model has no observations")
            frm = tuple(frm)
            c = self.out_index.get(frm, {}).get(tuple(to), 0)
            return c / self.out_total[frm] if c else EPS_P

    def _arrays(self):
        return (self._F.data, self._Ftot.data, self._Fhead.data, self._F.size,
                self._T.data, self._Tnext.data, self._Tcnt.data)

    def neighborhood_counts(self, to, frm, r: int, method=None):
        """Pooled transition counts between Chebyshev balls of radius ``r``.

        Returns ``(num, den)``: ``num`` sums transitions from any cell within
        ``r`` of ``frm`` into any cell within ``r`` of ``to``; ``den`` sums all
        transitions leaving the ``frm`` ball. ``method`` forces "enumerate"
        (walk the window offsets) or "scan" (filter the learned sources);
        by default the window is enumerated when it has at most 4096 cells.
        """
        if r < 0:
            raise ValueError("r must be >= 0")
        to = tuple(to)
        frm = tuple(frm)
        D = self.config.D
        if method is None:
            method = "enumerate" if (2 * r + 1) ** D <= ENUMERATE_LIMIT else "scan"
        with self._lock:
            if method == "enumerate":
                return self._enumerate_counts(to, frm, r)
            num, den = _scan_counts(*self._arrays(), np.asarray(frm, np.int64),
                                    np.asarray(to, np.int64), r)
            return int(num), int(den)

    def _enumerate_counts(self, to, frm, r):
        num = den = 0
        if r == 0:
            outs = self.out_index.get(frm)
            if outs:
                return outs.get(to, 0), self.out_total[frm]
            return 0, 0
        span = range(-r, r + 1)
        for off in itertools.product(span, repeat=len(frm)):
            beta = tuple(a + b for a, b in zip(frm, off))
            outs = self.out_index.get(beta)
            if not outs:
                continue
            den += self.out_total[beta]
            for alpha, c in outs.items():
                if all(abs(a - b) <= r for a, b in zip(alpha, to)):
                    num += c
        return num, den

    def neighborhood_counts_many(self, tos, frms, r: int, method=None):
        """Vectorized :meth:`neighborhood_counts` over aligned query arrays.

        ``method`` is ``"probe"`` (hash lookups over the source window) or
        ``"scan"`` (test every source); by default the cheaper one.
        """
        if r < 0:
            raise ValueError("r must be >= 0")
        tos = np.ascontiguousarray(tos, dtype=np.int64).reshape(-1, self.config.D)
        frms = np.ascontiguousarray(frms, dtype=np.int64).reshape(-1, self.config.D)
        with self._lock:
            arrays = self._arrays()
            if method is None:
                method = "probe" if (2 * r + 1) ** self.config.D < arrays[3] else "scan"
            kernel = _probe_counts_many if method == "probe" else _scan_counts_many
            return kernel(*arrays, frms, tos, r)

    def trans_prob_neighborhood(self, to, frm, r: int = 1) -> float:
        num, den = self.neighborhood_counts(to, frm, r)
        return _pooled_prob(num, den)


def _pooled_prob(num, den):
    return num / den if num > 0 else EPS_P


@dataclass(frozen=True)
class ScoreState:
    s_g: float = 0.0
    log_s_m: float = 0.0
    t: int = 0

    def similarity(self) -> float:
        """``S_G * exp(log S_M)``; 0 before any evidence."""
        return self.s_g * math.exp(self.log_s_m) if self.t else 0.0

    def log_similarity(self) -> float:
        return math.log(self.s_g) + self.log_s_m if self.s_g > 0 else -math.inf


def score_init() -> ScoreState:
    return ScoreState()


def score_update(state: ScoreState, model: ClassModel, cell, prev=None,
                 r: int = 1) -> ScoreState:
    """Fold one more test cell into the running similarity."""
    if prev is None and state.t > 0:
        raise ProtocolError("prev cell required after the first update")
    log_s_m = state.log_s_m
    if prev is not None:
        log_s_m += math.log(model.trans_prob_neighborhood(cell, prev, r))
    return ScoreState(state.s_g + model.geo_prob(cell), log_s_m, state.t + 1)


def batch_score(model: ClassModel, trajectory, r: int = 1):
    """``(s_g, log_s_m)`` of a whole cell trajectory against one model.

    Same sums, in the same order, as folding :func:`score_update`; the
    pooled transition counts come from one compiled call.
    """
    cells = [tuple(int(v) for v in c) for c in trajectory]
    if not cells:
        raise ValueError("empty trajectory")
    s_g = 0.0
    for c in cells:
        s_g += model.geo_prob(c)
    log_s_m = 0.0
    if len(cells) > 1:
        arr = np.asarray(cells, dtype=np.int64)
        nums, dens = model.neighborhood_counts_many(arr[1:], arr[:-1], r)
        pairs = zip(nums.tolist(), dens.tolist())
        for num, den in pairs:
            log_s_m += math.log(_pooled_prob(num, den))
    return s_g, log_s_m


def compare(scores):
    """Index of the best ``(s_g, log_s_m)`` pair, or None if none is finite.

    Ranks by ``log(s_g) + log_s_m`` with ``s_g == 0`` as minus infinity;
    ties go to the lowest index.
    """
    if len(scores) == 0:
        raise ValueError("no classes to compare")
    best, best_val = None, -math.inf
    for i, (s_g, log_s_m) in enumerate(scores):
        if s_g <= 0:
            continue
        val = math.log(s_g) + log_s_m
        if val > best_val:
            best, best_val = i, val
    return best
