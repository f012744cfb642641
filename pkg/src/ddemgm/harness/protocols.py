"""Evaluation protocols: stratified holdout and alternating online."""

import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..classifier import OnlineClassifier
from ..embedding import EmbeddingConfig
from .io import Dataset, dumps_model


class StratificationError(ValueError):
    pass


@dataclass
class EvalReport:
    protocol: str
    accuracy: float
    confusion: dict  # true label -> {predicted label (None = undecided): count}
    evaluated: int
    seconds: float
    model_bytes: int
    curve: list = field(default_factory=list)  # running accuracy per scored series
    excluded: int = 0  # online: series whose label had no model yet

    def as_dict(self):
        return {
            "protocol": self.protocol,
            "accuracy": self.accuracy,
            "evaluated": self.evaluated,
            "excluded": self.excluded,
            "seconds": round(self.seconds, 3),
            "model_bytes": self.model_bytes,
            "confusion": {str(k): {str(p): c for p, c in v.items()}
                          for k, v in self.confusion.items()},
        }


class _Tally:
    def __init__(self):
        self.confusion = {}
        self.correct = 0
        self.total = 0
        self.curve = []

    def add(self, truth, predicted):
        row = self.confusion.setdefault(truth, {})
        row[predicted] = row.get(predicted, 0) + 1
        self.total += 1
        self.correct += predicted == truth
        self.curve.append(self.correct / self.total)

    @property
    def accuracy(self):
        return self.correct / self.total if self.total else 0.0


def stratified_split(dataset: Dataset, split=0.5, seed=None):
    """Per label, send ``floor(k * split)`` (at least 1) series to test."""
    rng = np.random.default_rng(seed)
    groups = {}
    for idx, (_, label, _) in enumerate(dataset.series):
        groups.setdefault(label, []).append(idx)
    if len(groups) < 2:
        raise StratificationError("need at least two labels")
    train, test = [], []
    for label in sorted(groups):
        idx = groups[label]
        if len(idx) < 2:
            raise StratificationError(f"label {label!r} has fewer than 2 series")
        perm = rng.permutation(idx)
        n_test = min(len(idx) - 1, max(1, int(len(idx) * split)))
        test.extend(perm[:n_test].tolist())
        train.extend(perm[n_test:].tolist())
    return sorted(train), sorted(test)


def _predict(clf, y):
    pred = clf.classify_series(y)
    return None if pred is None else pred.label


def eval_holdout(dataset: Dataset, config: EmbeddingConfig, r=1, split=0.5,
                 seed=None) -> EvalReport:
    train, test = stratified_split(dataset, split, seed)
    start = time.perf_counter()
    clf = OnlineClassifier(config, r=r)
    for i in train:
        _, label, y = dataset.series[i]
        clf.train_series(label, y)
    tally = _Tally()
    for i in test:
        _, label, y = dataset.series[i]
        tally.add(label, _predict(clf, y))
    return EvalReport(
        protocol="holdout50" if split == 0.5 else f"holdout{split:g}",
        accuracy=tally.accuracy,
        confusion=tally.confusion,
        evaluated=tally.total,
        seconds=time.perf_counter() - start,
        model_bytes=len(dumps_model(clf)),
        curve=tally.curve,
    )


class _TwoActors:
    """Training actor on its own thread, classification on the caller's.

    Jobs run strictly in submission order: a classification waits for every
    training job submitted before it, and the next training job is not
    released until the classification ahead of it has finished. Results
    therefore match the serialized run exactly.
    """

    def __init__(self, clf):
        self.clf = clf
        self.jobs = queue.Queue()
        self.error = None
        self.worker = threading.Thread(target=self._run, daemon=True)
        self.worker.start()

    def _run(self):
        while True:
            job = self.jobs.get()
            if job is None:
                return
            try:
                label, y = job
                self.clf.train_series(label, y)
            except Exception as exc:  # surfaced on the caller's thread
                self.error = exc
            finally:
                self.jobs.task_done()

    def train(self, label, y):
        self.jobs.put((label, y))

    def classify(self, y):
        self.jobs.join()
        if self.error is not None:
            raise self.error
        return _predict(self.clf, y)

    def close(self):
        self.jobs.join()
        self.jobs.put(None)
        self.worker.join()
        if self.error is not None:
            raise self.error


def eval_online(dataset: Dataset, config: EmbeddingConfig, r=1, seed=None,
                parallel=False) -> EvalReport:
    """Classify each series, then train on it, in a seeded random order.

    A series counts toward accuracy only if its label already has a model.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset.series))
    start = time.perf_counter()
    clf = OnlineClassifier(config, r=r)
    actors = _TwoActors(clf) if parallel else None
    tally = _Tally()
    excluded = 0
    trained = set()
    for i in order:
        _, label, y = dataset.series[i]
        if label in trained:
            pred = actors.classify(y) if actors else _predict(clf, y)
            tally.add(label, pred)
        else:
            excluded += 1
        if actors:
            actors.train(label, y)
        else:
            clf.train_series(label, y)
        trained.add(label)
    if actors:
        actors.close()
    return EvalReport(
        protocol="online",
        accuracy=tally.accuracy,
        confusion=tally.confusion,
        evaluated=tally.total,
        seconds=time.perf_counter() - start,
        model_bytes=len(dumps_model(clf)),
        curve=tally.curve,
        excluded=excluded,
    )
