"""Data ingestion, model files, evaluation protocols and benchmarking."""

from .bench import BenchReport, bench_rate
from .io import (
    Dataset,
    EmptyDatasetError,
    ModelFormatError,
    ParseError,
    dumps_model,
    iter_stream,
    load_csv,
    load_model,
    loads_model,
    read_csv,
    save_model,
    write_csv,
)
from .protocols import EvalReport, StratificationError, eval_holdout, eval_online, stratified_split

__all__ = [
    "BenchReport", "Dataset", "EmptyDatasetError", "EvalReport", "ModelFormatError",
    "ParseError", "StratificationError", "bench_rate", "dumps_model", "eval_holdout",
    "eval_online", "iter_stream", "load_csv", "load_model", "loads_model", "read_csv",
    "save_model", "stratified_split", "write_csv",
]
