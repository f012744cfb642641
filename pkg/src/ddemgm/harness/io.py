"""Dataset CSV, model files and the line-oriented streaming input format.

Dataset CSV (long form)::

    series_id,label,v1,...,vn
    a1,walk,0.1,0.2,0.3
    a1,walk,0.2,0.1,0.3
    ...

Rows of one series are contiguous and in time order.

Model file::

    DDEMGM 1
    config n=<n> s=<s> d=<d> tau=<tau> r=<r> cells=<c1,...,cD>
    class <label> geo=<G> trans=<T>
    g <i1,...,iD> <count>            (G lines)
    t <from>|<to> <count>            (T lines)
    ...
    checksum <crc32 of every preceding byte, 8 hex digits>
"""

import csv
import io
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..classifier import OnlineClassifier
from ..embedding import EmbeddingConfig

MAGIC = "DDEMGM"
VERSION = 1


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EmptyDatasetError(ParseError):
    pass


class ModelFormatError(ParseError):
    pass


@dataclass
class Dataset:
    series: list = field(default_factory=list)  # (series_id, label, ndarray (N, n))
    n: int = 0

    def __len__(self):
        return len(self.series)

    @property
    def labels(self):
        return sorted({label for _, label, _ in self.series})

    def by_label(self):
        out = {}
        for _, label, y in self.series:
            out.setdefault(label, []).append(y)
        return out

    def add(self, series_id, label, values):
        y = np.asarray(values, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
        if self.series and y.shape[1] != self.n:
            raise ValueError(f"series {series_id!r} has {y.shape[1]} channels, expected {self.n}")
        if any(sid == series_id for sid, _, _ in self.series):
            raise ValueError(f"duplicate series id {series_id!r}")
        self.n = y.shape[1]
        self.series.append((series_id, label, y))


def _parse_floats(fields, lineno):
    try:
        vals = [float(v) for v in fields]
    except ValueError:
        raise ParseError(f"non-numeric value in {fields!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value", lineno)
    return vals


def read_csv(stream) -> Dataset:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyDatasetError("file is empty") from None
    if len(header) < 3 or header[0].strip() != "series_id" or header[1].strip() != "label":
        raise ParseError("header must be series_id,label,v1,...,vn", 1)
    n = len(header) - 2
    ds = Dataset(n=n)
    seen = set()
    cur_id, cur_label, rows = None, None, []

    def flush():
        if cur_id is not None:
            ds.series.append((cur_id, cur_label, np.asarray(rows, dtype=np.float64)))

    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n + 2:
            raise ParseError(f"expected {n + 2} fields, got {len(row)}", lineno)
        sid, label = row[0].strip(), row[1].strip()
        vals = _parse_floats(row[2:], lineno)
        if sid != cur_id:
            if sid in seen:
                raise ParseError(f"rows of series {sid!r} are not contiguous", lineno)
            flush()
            seen.add(sid)
            cur_id, cur_label, rows = sid, label, []
        elif label != cur_label:
            raise ParseError(f"series {sid!r} changes label", lineno)
        rows.append(vals)
    flush()
    if not ds.series:
        raise EmptyDatasetError("no data rows")
    return ds


def load_csv(path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh)


def write_csv(dataset: Dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "label"] + [f"v{k + 1}" for k in range(dataset.n)])
        for sid, label, y in dataset.series:
            for row in y:
                w.writerow([sid, label] + [repr(float(v)) for v in row])


# -- streaming stdin protocol --------------------------------------------------

def iter_stream(lines, labeled=False):
    """Parse the line protocol into ``(label, sample)`` / boundary events.

    Yields ``("sample", label, values)`` for each data line (``label`` is
    None unless ``labeled``) and ``("boundary", None, None)`` for each blank
    line.
    """
    n = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            yield ("boundary", None, None)
            continue
        fields = line.split(",")
        label = None
        if labeled:
            label, fields = fields[0].strip(), fields[1:]
            if not label:
                raise ParseError("missing label", lineno)
        if not fields:
            raise ParseError("no values", lineno)
        vals = _parse_floats(fields, lineno)
        if n is None:
            n = len(vals)
        elif len(vals) != n:
            raise ParseError(f"expected {n} values, got {len(vals)}", lineno)
        yield ("sample", label, vals)


# -- model files ----------------------------------------------------------------

def _coords(cell):
    return ",".join(str(int(v)) for v in cell)


def dumps_model(clf: OnlineClassifier) -> bytes:
    cfg = clf.config
    out = io.StringIO()
    out.write(f"{MAGIC} {VERSION}\n")
    cells = ",".join(repr(c) for c in cfg.cell_sizes)
    out.write(f"config n={cfg.n} s={cfg.s} d={cfg.d} tau={cfg.tau} r={clf.r} cells={cells}\n")
    for label, model in clf.models.items():
        label = str(label)
        if not label or any(ch.isspace() for ch in label):
            raise ValueError(f"label {label!r} cannot be stored (empty or whitespace)")
        with model._lock:
            geo = sorted(model.geo_counts.items())
            trans = sorted(model.trans_counts.items())
        out.write(f"class {label} geo={len(geo)} trans={len(trans)}\n")
        for cell, c in geo:
            out.write(f"g {_coords(cell)} {c}\n")
        for (frm, to), c in trans:
            out.write(f"t {_coords(frm)}|{_coords(to)} {c}\n")
    body = out.getvalue().encode("utf-8")
    return body + f"checksum {zlib.crc32(body):08x}\n".encode("ascii")


def save_model(clf: OnlineClassifier, path):
    """Write atomically: a temp file renamed over ``path``."""
    data = dumps_model(clf)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _kv(tokens, lineno):
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep:
            raise ModelFormatError(f"expected key=value, got {tok!r}", lineno)
        out[key] = val
    return out


def _cell(text, D, lineno):
    try:
        cell = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ModelFormatError(f"bad cell {text!r}", lineno) from None
    if len(cell) != D:
        raise ModelFormatError(f"cell has {len(cell)} indices, expected {D}", lineno)
    return cell


def loads_model(data: bytes) -> OnlineClassifier:
    """Parse a model file; nothing is returned unless the whole file checks out."""
    if not data.endswith(b"\n"):
        raise ModelFormatError("truncated file (no final newline)")
    cut = data.rstrip(b"\n").rfind(b"\n") + 1
    body, last = data[:cut], data[cut:].decode("utf-8", "replace").split()
    if len(last) != 2 or last[0] != "checksum":
        raise ModelFormatError("missing checksum line (truncated file?)")
    if f"{zlib.crc32(body):08x}" != last[1]:
        raise ModelFormatError("checksum mismatch")
    lines = body.decode("utf-8").split("\n")[:-1]
    if len(lines) < 2:
        raise ModelFormatError("missing header")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise ModelFormatError("not a model file", 1)
    if head[1] != str(VERSION):
        raise ModelFormatError(f"unsupported version {head[1]}", 1)
    tokens = lines[1].split()
    if not tokens or tokens[0] != "config":
        raise ModelFormatError("expected config line", 2)
    kv = _kv(tokens[1:], 2)
    try:
        cfg = EmbeddingConfig(
            n=int(kv["n"]), s=int(kv["s"]), d=int(kv["d"]), tau=int(kv["tau"]),
            cell_sizes=tuple(float(c) for c in kv["cells"].split(",")),
        )
        r = int(kv["r"])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"bad config: {exc}", 2) from None
    clf = OnlineClassifier(cfg, r=r)
    i = 2
    while i < len(lines):
        lineno = i + 1
        tokens = lines[i].split()
        if len(tokens) != 4 or tokens[0] != "class":
            raise ModelFormatError("expected class line", lineno)
        label = tokens[1]
        if label in clf.models:
            raise ModelFormatError(f"duplicate class {label!r}", lineno)
        kv = _kv(tokens[2:], lineno)
        try:
            G, T = int(kv["geo"]), int(kv["trans"])
        except (KeyError, ValueError):
            raise ModelFormatError("bad class counts", lineno) from None
        if i + 1 + G + T > len(lines):
            raise ModelFormatError("truncated class block", lineno)
        geo, trans = {}, {}
        for j in range(i + 1, i + 1 + G + T):
            parts = lines[j].split()
            kind = "g" if j <= i + G else "t"
            if len(parts) != 3 or parts[0] != kind:
                raise ModelFormatError(f"expected '{kind}' record", j + 1)
            try:
                count = int(parts[2])
            except ValueError:
                raise ModelFormatError("bad count", j + 1) from None
            if count < 1:
                raise ModelFormatError("counts must be positive", j + 1)
            if kind == "g":
                geo[_cell(parts[1], cfg.D, j + 1)] = count
            else:
                frm, sep, to = parts[1].partition("|")
                if not sep:
                    raise ModelFormatError("transition needs from|to", j + 1)
                trans[(_cell(frm, cfg.D, j + 1), _cell(to, cfg.D, j + 1))] = count
        try:
            clf._model(label).load_counts(geo, trans)
        except ValueError as exc:
            raise ModelFormatError(str(exc), lineno) from None
        i += 1 + G + T
    return clf


def load_model(path) -> OnlineClassifier:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
