"""Command line entry point: ``ddemgm <subcommand> ...``.

Reports are printed as ``key=value`` lines, or as JSON lines with ``--json``.
Exit status is 0 on success, 2 for unparsable input and 3 for protocol or
precondition failures.
"""

import argparse
import json
import logging
import sys

import numpy as np

from .classifier import OnlineClassifier
from .embedding import EmbeddingConfig
from .harness.bench import DEFAULT_SWEEP, bench_rate
from .harness.io import ParseError, iter_stream, load_csv, load_model, save_model, write_csv
from .harness.protocols import eval_holdout, eval_online
from .params import select_cell_sizes, select_params
from .signal import derivative

EXIT_PARSE = 2
EXIT_PRECONDITION = 3


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


class Reporter:
    def __init__(self, as_json, out=None):
        self.as_json = as_json
        self.out = out or sys.stdout

    def emit(self, record):
        if self.as_json:
            def default(o):
                if isinstance(o, np.ndarray):
                    return o.tolist()
                if isinstance(o, np.generic):
                    return o.item()
                raise TypeError(type(o))
            self.out.write(json.dumps(record, default=default) + "\n")
        else:
            self.out.write(" ".join(f"{k}={_fmt(v)}" for k, v in record.items()) + "\n")
        self.out.flush()


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _pooled_cell_sizes(dataset, bins, tau):
    derivs = [derivative(y, tau) for _, _, y in dataset.series if len(y) > tau]
    if not derivs:
        raise ValueError("no series long enough to difference")
    return select_cell_sizes(np.vstack(derivs), bins)


def _config_for(dataset, args):
    """Build the embedding config from flags, auto-selecting s/d if absent."""
    s, d = args.s, args.d
    if s is None or d is None:
        sel = select_params(dataset.by_label(), per_class_k=args.per_class,
                            bins=args.bins, tau=args.tau, seed=args.seed)
        s = sel.s if s is None else s
        d = sel.d if d is None else d
    sizes = _pooled_cell_sizes(dataset, args.bins, args.tau)
    return EmbeddingConfig.from_dim_sizes(s, d, sizes, args.tau)


def cmd_select_params(args, rep):
    ds = load_csv(args.input)
    sel = select_params(ds.by_label(), per_class_k=args.per_class, m_max=args.m_max,
                        bins=args.bins, tau=args.tau, seed=args.seed)
    for label, picks in sel.provenance.items():
        rep.emit({"class": label, "s": [p[0] for p in picks], "d": [p[1] for p in picks]})
    rep.emit({"s": sel.s, "d": sel.d, "bins": args.bins, "cells": sel.cell_sizes})


def cmd_train(args, rep):
    if args.stdin:
        if not args.cells:
            raise ValueError("--stdin training needs explicit --cells")
        events = list(iter_stream(sys.stdin, labeled=True))
        first = next((e for e in events if e[0] == "sample"), None)
        if first is None:
            raise ValueError("no samples on stdin")
        n = len(first[2])
        sizes = _float_list(args.cells)
        if len(sizes) == 1:
            sizes = sizes * n
        config = EmbeddingConfig.from_dim_sizes(args.s, args.d, sizes, args.tau)
        clf = OnlineClassifier(config, r=args.r)
        for kind, label, values in events:
            if kind == "boundary":
                if clf.models:
                    clf.end_series()
            else:
                clf.train_point(label, values)
    else:
        ds = load_csv(args.input)
        if args.cells:
            sizes = _float_list(args.cells)
            sizes = sizes * ds.n if len(sizes) == 1 else sizes
        else:
            sizes = _pooled_cell_sizes(ds, args.bins, args.tau)
        config = EmbeddingConfig.from_dim_sizes(args.s, args.d, sizes, args.tau)
        clf = OnlineClassifier(config, r=args.r)
        for _, label, y in ds.series:
            clf.train_series(label, y)
    save_model(clf, args.model)
    rep.emit({
        "model": args.model, "classes": len(clf.models),
        "cells": sum(len(m) for m in clf.models.values()),
        "s": clf.config.s, "d": clf.config.d,
    })


def _prediction_record(pred):
    rec = {"predicted": pred.label if pred.decided else "undecided", "t": pred.t}
    for label, (s_g, log_s_m) in pred.scores.items():
        rec[f"score[{label}]"] = (np.log(s_g) + log_s_m) if s_g > 0 else float("-inf")
    return rec


def cmd_classify(args, rep):
    clf = load_model(args.model)
    if args.input:
        ds = load_csv(args.input)
        correct = 0
        for sid, label, y in ds.series:
            pred = clf.classify_series(y)
            rec = {"series_id": sid, "label": label}
            if pred is None:
                rec.update(predicted="undecided", t=0)
            else:
                rec.update(_prediction_record(pred))
                correct += pred.label == label
            rep.emit(rec)
        rep.emit({"series": len(ds), "accuracy": correct / len(ds)})
        return
    series_idx, last, since = 0, None, 0
    for kind, _, values in iter_stream(sys.stdin):
        if kind == "boundary":
            if last is not None:
                rep.emit({"series": series_idx, "final": 1, **_prediction_record(last)})
            series_idx += 1
            last, since = None, 0
            clf.reset_scores()
            continue
        pred = clf.classify_point(values)
        if pred is None:
            continue
        last = pred
        since += 1
        if args.emit_every and since % args.emit_every == 0:
            rep.emit({"series": series_idx, **_prediction_record(pred)})
    if last is not None:
        rep.emit({"series": series_idx, "final": 1, **_prediction_record(last)})


def cmd_eval(args, rep):
    ds = load_csv(args.input)
    config = _config_for(ds, args)
    if args.protocol == "holdout50":
        report = eval_holdout(ds, config, r=args.r, split=args.split, seed=args.seed)
    else:
        report = eval_online(ds, config, r=args.r, seed=args.seed, parallel=args.parallel)
    record = {"s": config.s, "d": config.d, "bins": args.bins, "r": args.r}
    record.update(report.as_dict())
    confusion = record.pop("confusion")
    rep.emit(record)
    if args.confusion:
        for truth, row in confusion.items():
            rep.emit({"true": truth, **{f"pred[{p}]": c for p, c in row.items()}})
    if args.curve:
        for k, acc in enumerate(report.curve, start=1):
            rep.emit({"scored": k, "accuracy": acc})


def cmd_bench(args, rep):
    ds = load_csv(args.input)
    long_enough = [y for _, _, y in ds.series if len(y) >= args.points]
    stream = long_enough[0] if long_enough else np.vstack([y for _, _, y in ds.series])
    for r in bench_rate(stream, args.s, args.d, r=args.r, bins_sweep=_int_list(args.bins_sweep),
                        points=args.points, repeats=args.repeats, tau=args.tau, seed=args.seed):
        rep.emit(r.as_dict())


def cmd_convert_uci(args, rep):
    from .harness.uci import load_uci_mat

    ds = load_uci_mat(args.mat)
    write_csv(ds, args.out)
    rep.emit({"out": args.out, "series": len(ds), "classes": len(ds.labels), "n": ds.n})


def build_parser():
    p = argparse.ArgumentParser(prog="ddemgm", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="emit JSON lines")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--tau", type=int, default=1)
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS)

    sp = sub.add_parser("select-params", help="choose s, d and cell size from labeled data")
    sp.add_argument("--input", required=True)
    sp.add_argument("--per-class", type=int, default=5)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--m-max", type=int, default=12)
    common(sp)
    sp.set_defaults(func=cmd_select_params)

    sp = sub.add_parser("train", help="train per-class models and save them")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--stdin", action="store_true")
    sp.add_argument("--s", type=int, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--cells", help="explicit per-channel cell sizes, comma-separated")
    sp.add_argument("--r", type=int, default=1)
    sp.add_argument("--model", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("classify", help="classify series or a sample stream")
    sp.add_argument("--model", required=True)
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--input")
    src.add_argument("--stdin", action="store_true")
    sp.add_argument("--emit-every", type=int, default=0)
    sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("eval", help="run an evaluation protocol")
    sp.add_argument("--input", required=True)
    sp.add_argument("--protocol", choices=["holdout50", "online"], required=True)
    sp.add_argument("--s", type=int)
    sp.add_argument("--d", type=int)
    sp.add_argument("--bins", type=int, default=50)
    sp.add_argument("--r", type=int, default=1)
    sp.add_argument("--split", type=float, default=0.5)
    sp.add_argument("--per-class", type=int, default=5)
    sp.add_argument("--parallel", action="store_true",
                    help="run training and classification as two actors")
    sp.add_argument("--confusion", action="store_true")
    sp.add_argument("--curve", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="modeling rate and model size per grid size")
    sp.add_argument("--input", required=True)
    sp.add_argument("--bins-sweep", default=",".join(map(str, DEFAULT_SWEEP)))
    sp.add_argument("--s", type=int, default=5)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--r", type=int, default=1)
    sp.add_argument("--points", type=int, default=10_000)
    sp.add_argument("--repeats", type=int, default=3)
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("convert-uci", help="UCI character trajectories .mat to CSV")
    sp.add_argument("--mat", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_convert_uci)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    rep = Reporter(args.json)
    try:
        args.func(args, rep)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return 0


if __name__ == "__main__":
    sys.exit(main())
