"""Multi-class online training and classification over raw samples."""

from dataclasses import dataclass

import numpy as np

from .embedding import DdeStream, EmbeddingConfig, dde_cells
from .mgm import ClassModel, EmptyModelError, batch_score, compare, score_init, score_update


@dataclass(frozen=True)
class Prediction:
    label: object  # None when undecided
    scores: dict  # label -> (s_g, log_s_m)
    t: int
    decided: bool


class OnlineClassifier:
    """One Markov geographic model per label, fed sample by sample.

    Each label gets its own training stream so interleaved labels never
    produce cross-label transitions. Call :meth:`end_series` at series
    boundaries.
    """

    def __init__(self, config: EmbeddingConfig, r: int = 1):
        self.config = config
        self.r = int(r)
        self.models = {}
        self.train_streams = {}
        self.test_stream = DdeStream(config)
        self.scores = {}
        self._test_prev = None

    @property
    def labels(self):
        return list(self.models)

    def _model(self, label):
        model = self.models.get(label)
        if model is None:
            model = self.models[label] = ClassModel(self.config)
            self.train_streams[label] = DdeStream(self.config)
            self.scores[label] = score_init()
        return model

    def train_point(self, label, sample):
        model = self._model(label)
        stream = self.train_streams[label]
        prev = stream.prev
        cell = stream.push(sample)
        if cell is not None:
            model.observe(cell, prev)

    def end_series(self, label=None):
        """Reset the training stream of ``label`` (all labels if None)."""
        streams = self.train_streams.values() if label is None else [self.train_streams[label]]
        for stream in streams:
            stream.reset()

    def train_series(self, label, series):
        """Train on a complete series, then close it."""
        self._model(label)
        for sample in np.asarray(series, dtype=np.float64).reshape(len(series), -1):
            self.train_point(label, sample)
        self.end_series(label)

    def classify_point(self, sample):
        """Push one test sample; the current prediction once a cell is scored."""
        if not self.models:
            raise EmptyModelError("no trained classes")
        cell = self.test_stream.push(sample)
        if cell is None:
            return None
        prev = self._test_prev
        for label, model in self.models.items():
            state = self.scores.get(label, score_init())
            if state.t == 0:
                # label added after this trajectory started: score from here
                state = score_update(state, model, cell, None, self.r)
            else:
                state = score_update(state, model, cell, prev, self.r)
            self.scores[label] = state
        self._test_prev = cell
        return self.prediction()

    def prediction(self):
        labels = list(self.models)
        pairs = [(self.scores[lb].s_g, self.scores[lb].log_s_m) for lb in labels]
        best = compare(pairs)
        t = max((self.scores[lb].t for lb in labels), default=0)
        return Prediction(
            label=None if best is None else labels[best],
            scores=dict(zip(labels, pairs)),
            t=t,
            decided=best is not None,
        )

    def reset_scores(self):
        self.scores = {label: score_init() for label in self.models}
        self.test_stream.reset()
        self._test_prev = None

    def classify_series(self, series):
        """Final prediction for a whole test series, from fresh scores.

        Equivalent to :meth:`reset_scores` followed by :meth:`classify_point`
        on every sample, but scores each class in one batch. Returns None if
        the series is shorter than one embedding window.
        """
        if not self.models:
            raise EmptyModelError("no trained classes")
        self.reset_scores()
        cells = dde_cells(series, self.config)
        if len(cells) == 0:
            return None
        labels = list(self.models)
        pairs = [batch_score(self.models[lb], cells, self.r) for lb in labels]
        best = compare(pairs)
        return Prediction(
            label=None if best is None else labels[best],
            scores=dict(zip(labels, pairs)),
            t=len(cells),
            decided=best is not None,
        )
