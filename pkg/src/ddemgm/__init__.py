"""Online modeling and classification of streaming time series.

Derivative delay embedding turns a raw multichannel stream into a walk over
integer grid cells; a per-class Markov geographic model counts cell visits
and transitions and scores test walks incrementally.
"""

from .classifier import OnlineClassifier, Prediction
from .embedding import DdeStream, EmbeddingConfig, dde_cells, delay_embed, discretize
from .mgm import ClassModel, ScoreState, batch_score, compare, score_init, score_update
from .params import (
    ParamSelection,
    dominant_freq_index,
    fnn_fraction,
    select_cell_sizes,
    select_delay,
    select_dimension,
    select_params,
    select_series_params,
)
from .signal import derivative, stats

__version__ = "0.1.0"

__all__ = [
    "ClassModel", "DdeStream", "EmbeddingConfig", "OnlineClassifier", "ParamSelection",
    "Prediction", "ScoreState", "batch_score", "compare", "dde_cells", "delay_embed",
    "derivative", "discretize", "dominant_freq_index", "fnn_fraction", "score_init",
    "score_update", "select_cell_sizes", "select_delay", "select_dimension", "select_params",
    "select_series_params", "stats",
]
